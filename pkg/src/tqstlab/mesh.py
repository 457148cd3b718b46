"""Reconfigurable interferometer model: RBS cells, rectangular mesh, presets.

The device layout mirrors an 8-mode processor with 28 Mach-Zehnder cells
in rectangular geometry: six generation layers followed by two
measurement layers. Smaller experiments (n qubits, m = 2n modes) use the
same structure restricted to the topmost m modes, so the 8-mode instance
carries 21 + 4 + 3 = 28 cells and the 6-mode one 15 + 3 + 2 = 20.

Cells tagged ``identity`` are composed as the exact identity; coupler
imperfections only act on cells that are actively programmed.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError

GENERATION_LAYERS = 6
MEASUREMENT_LAYER = 6
TRAILING_LAYER = 7

ROLES = ("generation", "measurement", "identity")

# local measurement bases compiled to RBS angles: rows of the programmed
# cell are the <+1| and <-1| eigenvectors of the chosen Pauli operator
MEAS_ANGLES = {
    "Z": (math.pi, 0.0),
    "X": (math.pi / 2, 0.0),
    "Y": (math.pi / 2, math.pi / 2),
}

# Supplementary settings table for the three-qubit W state, cells numbered
# layer-major, top to bottom within each layer, over the 6-mode block
W3_THETAS = (
    3.141592, 3.141592, 1.570796, 3.141592, 1.230959,
    1.570796, 3.141592, 1.570796, 1.230959, 3.141592,
    1.570796, 0.0, 3.141592, 0.0, 0.0,
)
W3_PHIS = (
    0.0, 0.0, 0.0, 0.0, 3.141592,
    2.094402, 0.0, 4.712389, 2.094388, 2.094402,
    0.523596, 0.0, 0.0, 0.0, 0.0,
)
# extra phase shifts on the top rails of qubits A and C ahead of the
# measurement layer, folded into the measurement-cell phases on hardware
W3_DELTA_PHI_A = 2.618002
W3_DELTA_PHI_C = -2.094406

# mode carrying the tunable relative phase of the Bell/GHZ presets: the
# first swap cell of the second layer, i.e. a phase plate on mode 1
GHZ_PHASE_CELL_PAIR = (1, 2)

PRESET_NAMES = ("bell_psi_plus", "ghz3", "w3", "ghz4")


@dataclass(frozen=True)
class RBSParams:
    theta: float
    phi: float


@dataclass(frozen=True)
class CouplerSpec:
    r1: float = 0.5
    r2: float = 0.5

    def __post_init__(self):
        for r in (self.r1, self.r2):
            if not 0.0 <= r <= 1.0:
                raise ContractError(f"coupler reflectivity {r} outside [0, 1]")


@dataclass(frozen=True)
class Cell:
    layer: int
    modes: tuple
    params: RBSParams
    coupler: CouplerSpec = CouplerSpec()
    role: str = "generation"


@dataclass(frozen=True)
class MeshLayout:
    m: int
    cells: tuple
    premeasure_phases: tuple = ()

    def __post_init__(self):
        if self.m < 2 or self.m % 2:
            raise ContractError("mode count must be even and >= 2")
        phases = self.premeasure_phases or (0.0,) * self.m
        if len(phases) != self.m:
            raise ContractError("premeasure_phases must have one entry per mode")
        object.__setattr__(self, "premeasure_phases", tuple(phases))
        seen = set()
        for cell in self.cells:
            a, b = cell.modes
            if b != a + 1 or a < 0 or b >= self.m:
                raise ContractError(f"cell modes {cell.modes} not an adjacent in-range pair")
            if a % 2 != cell.layer % 2:
                raise ContractError(
                    f"cell on modes {cell.modes} breaks the rectangular geometry "
                    f"of layer {cell.layer}"
                )
            if cell.role not in ROLES:
                raise ContractError(f"unknown cell role {cell.role!r}")
            key = (cell.layer, a)
            if key in seen or (cell.layer, a - 1) in seen or (cell.layer, a + 1) in seen:
                raise ContractError(f"overlapping cells in layer {cell.layer}")
            seen.add(key)

    def with_couplers(self, overrides):
        """Copy of the layout with couplers replaced at the given cell indices."""
        cells = list(self.cells)
        for idx, spec in overrides.items():
            cells[idx] = replace(cells[idx], coupler=spec)
        return replace(self, cells=tuple(cells))

    def cell_count(self, role=None):
        if role is None:
            return len(self.cells)
        return sum(1 for c in self.cells if c.role == role)


def coupler_unitary(r):
    """Directional coupler [[sqrt(r), i sqrt(t)], [i sqrt(t), sqrt(r)]], t = 1 - r."""
    t = 1.0 - r
    return np.array(
        [[math.sqrt(r), 1j * math.sqrt(t)], [1j * math.sqrt(t), math.sqrt(r)]],
        dtype=np.complex128,
    )


def rbs_unitary(p):
    """Ideal cell [[e^{i phi} sin(t/2), cos(t/2)], [e^{i phi} cos(t/2), -sin(t/2)]]."""
    s, c = math.sin(p.theta / 2), math.cos(p.theta / 2)
    ph = np.exp(1j * p.phi)
    return np.array([[ph * s, c], [ph * c, -s]], dtype=np.complex128)


def rbs_unitary_physical(p, coupler):
    """Mach-Zehnder cell with possibly unbalanced directional couplers.

    Composes phase phi (top mode), coupler r1, phase theta (top mode),
    coupler r2. The overall phase is pinned by a factor e^{-i(pi+theta)/2}
    so that balanced couplers reproduce ``rbs_unitary`` exactly; the
    physics constrains only the moduli, which follow
    R(theta) = r1 r2 + t1 t2 - 2 sqrt(r1 r2 t1 t2) cos(theta) on the
    diagonal (bar) element.
    """
    phase = lambda a: np.diag([np.exp(1j * a), 1.0]).astype(np.complex128)
    u = (
        coupler_unitary(coupler.r2)
        @ phase(p.theta)
        @ coupler_unitary(coupler.r1)
        @ phase(p.phi)
    )
    return np.exp(-1j * (math.pi + p.theta) / 2) * u


def reflectivity_bounds(coupler):
    """(Rmin, Rmax) reachable by tuning theta at fixed coupler reflectivities."""
    r1, r2 = coupler.r1, coupler.r2
    t1, t2 = 1.0 - r1, 1.0 - r2
    cross = 2.0 * math.sqrt(r1 * r2 * t1 * t2)
    rmin = r1 * r2 + t1 * t2 - cross
    rmax = r1 * r2 + t1 * t2 + cross
    return max(rmin, 0.0), min(rmax, 1.0)


def _embed(m, pair, block, u):
    out = u.copy()
    out[pair, :] = block @ u[pair, :]
    return out


def compose_mesh(layout, bases=None, couplers=None):
    """m x m unitary of the layout, cells applied in layer order.

    ``bases`` is an optional string of per-qubit measurement bases
    ('X'/'Y'/'Z'); when given, measurement-role cells are programmed to
    the corresponding angles, otherwise they are skipped. Identity-role
    cells always compose as the exact identity. ``couplers`` optionally
    maps cell indices to CouplerSpec overrides. The premeasure phase
    plate sits between the generation and measurement layers.
    """
    u = np.eye(layout.m, dtype=np.complex128)
    phases_applied = False
    order = sorted(range(len(layout.cells)), key=lambda i: layout.cells[i].layer)
    for idx in order:
        cell = layout.cells[idx]
        if cell.role == "identity":
            continue
        if cell.layer >= MEASUREMENT_LAYER and not phases_applied:
            u = np.diag(np.exp(1j * np.asarray(layout.premeasure_phases))) @ u
            phases_applied = True
        if cell.role == "measurement":
            if bases is None:
                continue
            qubit = cell.modes[0] // 2
            theta, phi = MEAS_ANGLES[bases[qubit]]
            params = RBSParams(theta, phi)
        else:
            params = cell.params
        coupler = cell.coupler if couplers is None else couplers.get(idx, cell.coupler)
        block = rbs_unitary_physical(params, coupler)
        u = _embed(layout.m, list(cell.modes), block, u)
    if not phases_applied:
        u = np.diag(np.exp(1j * np.asarray(layout.premeasure_phases))) @ u
    return u


def generation_pairs(m, layer):
    """Cell positions of one generation layer restricted to the top m modes."""
    return [(a, a + 1) for a in range(layer % 2, m - 1, 2)]


def _device_cells(m, programmed):
    """Full device cell list: programmed generation cells, identity padding,
    measurement cells on the rail pairs, and the trailing identity layer."""
    cells = []
    for layer in range(GENERATION_LAYERS):
        for pair in generation_pairs(m, layer):
            spec = programmed.get((layer, pair))
            if spec is None:
                cells.append(Cell(layer, pair, RBSParams(0.0, 0.0), role="identity"))
            else:
                cells.append(Cell(layer, pair, spec, role="generation"))
    for pair in generation_pairs(m, MEASUREMENT_LAYER):
        cells.append(Cell(MEASUREMENT_LAYER, pair, RBSParams(math.pi, 0.0), role="measurement"))
    for pair in generation_pairs(m, TRAILING_LAYER):
        cells.append(Cell(TRAILING_LAYER, pair, RBSParams(0.0, 0.0), role="identity"))
    return tuple(cells)


def _ghz_like_layout(n_qubits, relative_phase):
    m = 2 * n_qubits
    programmed = {}
    for pair in generation_pairs(m, 0):
        programmed[(0, pair)] = RBSParams(math.pi / 2, 0.0)
    for pair in generation_pairs(m, 1):
        phi = relative_phase if pair == GHZ_PHASE_CELL_PAIR else 0.0
        programmed[(1, pair)] = RBSParams(0.0, phi)
    return MeshLayout(m, _device_cells(m, programmed))


def _w3_layout():
    m = 6
    programmed = {}
    k = 0
    for layer in range(GENERATION_LAYERS):
        for pair in generation_pairs(m, layer):
            programmed[(layer, pair)] = RBSParams(W3_THETAS[k], W3_PHIS[k])
            k += 1
    phases = [0.0] * m
    phases[0] = W3_DELTA_PHI_A
    phases[4] = W3_DELTA_PHI_C
    return MeshLayout(m, _device_cells(m, programmed), tuple(phases))


def preset_layout(name, relative_phase=0.0):
    """Layout generating one of the named maximally-entangled states."""
    if name == "bell_psi_plus":
        return _ghz_like_layout(2, relative_phase)
    if name == "ghz3":
        return _ghz_like_layout(3, relative_phase)
    if name == "ghz4":
        return _ghz_like_layout(4, relative_phase)
    if name == "w3":
        return _w3_layout()
    raise ContractError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


def random_layout(n_qubits, seed):
    """Random generation settings on the m-mode universal block.

    theta and phi are drawn uniformly from [0, 2 pi) per cell; the block
    spans the first m layers (the full m(m-1)/2-cell Clements mesh) for
    m <= 6, and all six available generation layers for m = 8.
    """
    m = 2 * n_qubits
    rng = np.random.default_rng(seed)
    block_layers = min(m, GENERATION_LAYERS)
    programmed = {}
    for layer in range(block_layers):
        for pair in generation_pairs(m, layer):
            theta, phi = rng.uniform(0.0, 2.0 * math.pi, size=2)
            programmed[(layer, pair)] = RBSParams(theta, phi)
    return MeshLayout(m, _device_cells(m, programmed))


def preset_target(name):
    """(n_qubits, ideal state vector) for a named preset."""
    if name == "bell_psi_plus":
        vec = np.zeros(4)
        vec[[0b01, 0b10]] = 1.0 / math.sqrt(2)
        return 2, vec.astype(np.complex128)
    if name == "ghz3":
        vec = np.zeros(8)
        vec[[0b010, 0b101]] = 1.0 / math.sqrt(2)
        return 3, vec.astype(np.complex128)
    if name == "w3":
        vec = np.zeros(8)
        vec[[0b100, 0b010, 0b001]] = 1.0 / math.sqrt(3)
        return 3, vec.astype(np.complex128)
    if name == "ghz4":
        vec = np.zeros(16)
        vec[[0b0101, 0b1010]] = 1.0 / math.sqrt(2)
        return 4, vec.astype(np.complex128)
    raise ContractError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")


def layout_to_json(layout):
    doc = {
        "m": layout.m,
        "cells": [
            {
                "layer": c.layer,
                "modes": list(c.modes),
                "theta": c.params.theta,
                "phi": c.params.phi,
                "r1": c.coupler.r1,
                "r2": c.coupler.r2,
                "role": c.role,
            }
            for c in layout.cells
        ],
    }
    if any(p != 0.0 for p in layout.premeasure_phases):
        doc["premeasure_phases"] = list(layout.premeasure_phases)
    return doc


def layout_from_json(doc):
    cells = tuple(
        Cell(
            layer=c["layer"],
            modes=tuple(c["modes"]),
            params=RBSParams(c["theta"], c["phi"]),
            coupler=CouplerSpec(c["r1"], c["r2"]),
            role=c["role"],
        )
        for c in doc["cells"]
    )
    phases = tuple(doc.get("premeasure_phases", (0.0,) * doc["m"]))
    return MeshLayout(doc["m"], cells, phases)


def save_layout(layout, path):
    with open(path, "w") as fh:
        json.dump(layout_to_json(layout), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_layout(path):
    with open(path) as fh:
        return layout_from_json(json.load(fh))
