"""Experimental-imperfection model: partial distinguishability via Gram
matrices, multiphoton emission, uniform loss, coupler imperfections, and
detector-efficiency handling.

The output side assumes threshold (non-number-resolving) detectors: an
outcome is the set of modes that clicked. Multiphoton noise is truncated
at one extra photon per run, first order in p2; the extra photon is
fully distinguishable and co-propagates in the input mode of its source
bin. Uniform loss acts as a single round after the source, enumerated
over photon-survival patterns.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from ._kernels import gram_probs_kernel, permutation_table
from .errors import ContractError
from .fock import assignment_list, enumerate_configurations
from .mesh import CouplerSpec, compose_mesh
from .pauli import all_settings, expectation_from_frequencies, pauli_matrix
from .stategen import DualRailSpec, fock_to_basis_index

TRUNCATION_WARN_LEVEL = 1e-4
MODEL_CONSISTENCY_TOL = 0.05
PAPER_G2 = 0.01
PAPER_VISIBILITY = 0.90
PAPER_COUPLER_RANGE = (0.50, 0.58)


@dataclass(frozen=True)
class NoiseParams:
    g2: float = 0.0
    p0: float = 0.0
    hom_visibilities: object = 1.0  # scalar, or tuple-of-tuples (n x n)
    eta: float = 1.0
    detector_eff: object = 1.0  # scalar, or tuple (per mode)
    coupler_default: CouplerSpec = CouplerSpec()
    coupler_overrides: tuple = ()  # ((cell_index, CouplerSpec), ...)

    def __post_init__(self):
        if not 0.0 <= self.g2 < 0.5:
            raise ContractError("g2 must lie in [0, 0.5)")
        if not 0.0 <= self.p0 < 1.0:
            raise ContractError("p0 must lie in [0, 1)")
        if not 0.0 < self.eta <= 1.0:
            raise ContractError("eta must lie in (0, 1]")
        if isinstance(self.hom_visibilities, (list, np.ndarray)):
            mat = np.asarray(self.hom_visibilities, dtype=float)
            object.__setattr__(
                self, "hom_visibilities", tuple(tuple(row) for row in mat)
            )
        if isinstance(self.detector_eff, (list, np.ndarray)):
            object.__setattr__(
                self, "detector_eff", tuple(float(v) for v in self.detector_eff)
            )
        if isinstance(self.coupler_overrides, dict):
            object.__setattr__(
                self,
                "coupler_overrides",
                tuple(sorted(self.coupler_overrides.items())),
            )

    @classmethod
    def ideal(cls):
        return cls()

    @classmethod
    def paper(cls, layout=None, seed=0):
        """Published parameters: g2 = 0.01, uniform HOM visibility 0.90,
        coupler reflectivities drawn uniformly from [0.50, 0.58]."""
        overrides = ()
        if layout is not None:
            overrides = tuple(
                sorted(draw_coupler_overrides(layout, seed=seed).items())
            )
        return cls(
            g2=PAPER_G2,
            hom_visibilities=PAPER_VISIBILITY,
            coupler_overrides=overrides,
        )

    def visibility_matrix(self, n):
        if isinstance(self.hom_visibilities, tuple):
            mat = np.asarray(self.hom_visibilities, dtype=float)
            if mat.shape != (n, n):
                raise ContractError(
                    f"visibility matrix shape {mat.shape} does not match {n} photons"
                )
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ContractError("visibility matrix must be symmetric")
            return mat
        mat = np.full((n, n), float(self.hom_visibilities))
        np.fill_diagonal(mat, 1.0)
        return mat

    def detector_efficiencies(self, m):
        if isinstance(self.detector_eff, tuple):
            eff = np.asarray(self.detector_eff, dtype=float)
            if eff.size != m:
                raise ContractError("need one detector efficiency per mode")
        else:
            eff = np.full(m, float(self.detector_eff))
        if np.any(eff <= 0.0) or np.any(eff > 1.0):
            raise ContractError("detector efficiencies must lie in (0, 1]")
        return eff

    def coupler_map(self, layout):
        """Cell-index -> CouplerSpec mapping for compose_mesh, or None when
        every cell keeps its balanced default."""
        overrides = dict(self.coupler_overrides)
        if self.coupler_default == CouplerSpec() and not overrides:
            return None
        cmap = {i: self.coupler_default for i in range(len(layout.cells))}
        cmap.update(overrides)
        return cmap

    def is_ideal(self):
        return (
            self.g2 == 0.0
            and self.p0 == 0.0
            and self.eta == 1.0
            and not isinstance(self.hom_visibilities, tuple)
            and float(self.hom_visibilities) == 1.0
        )


def draw_coupler_overrides(layout, lo=PAPER_COUPLER_RANGE[0], hi=PAPER_COUPLER_RANGE[1], seed=0):
    """Seeded per-cell coupler reflectivities drawn uniformly from [lo, hi]."""
    rng = np.random.default_rng(seed)
    out = {}
    for idx in range(len(layout.cells)):
        r1, r2 = rng.uniform(lo, hi, size=2)
        out[idx] = CouplerSpec(float(r1), float(r2))
    return out


def noise_params_to_json(params):
    doc = {
        "g2": params.g2,
        "p0": params.p0,
        "hom_visibilities": (
            [list(row) for row in params.hom_visibilities]
            if isinstance(params.hom_visibilities, tuple)
            else params.hom_visibilities
        ),
        "eta": params.eta,
        "detector_eff": (
            list(params.detector_eff)
            if isinstance(params.detector_eff, tuple)
            else params.detector_eff
        ),
        "coupler_default": [params.coupler_default.r1, params.coupler_default.r2],
        "coupler_overrides": {
            str(idx): [spec.r1, spec.r2] for idx, spec in params.coupler_overrides
        },
    }
    return doc


def noise_params_from_json(doc):
    overrides = tuple(
        sorted(
            (int(idx), CouplerSpec(*pair))
            for idx, pair in doc.get("coupler_overrides", {}).items()
        )
    )
    default = doc.get("coupler_default", [0.5, 0.5])
    return NoiseParams(
        g2=doc.get("g2", 0.0),
        p0=doc.get("p0", 0.0),
        hom_visibilities=doc.get("hom_visibilities", 1.0),
        eta=doc.get("eta", 1.0),
        detector_eff=doc.get("detector_eff", 1.0),
        coupler_default=CouplerSpec(*default),
        coupler_overrides=overrides,
    )


def overlaps_from_visibilities(visibilities, g2):
    """Gram matrix S with S_ij = sqrt((V_ij + g2) / (1 - g2)).

    Off-diagonal overlaps are clipped into [0, 1] (with a warning) before
    the PSD check; a non-PSD result means the visibility data is
    inconsistent with the pairwise-overlap model.
    """
    if not 0.0 <= g2 < 1.0:
        raise ContractError("g2 must lie in [0, 1)")
    v = np.asarray(visibilities, dtype=float)
    if v.ndim == 0:
        v = np.array([[1.0, float(v)], [float(v), 1.0]])
    m = (v + g2) / (1.0 - g2)
    off = ~np.eye(v.shape[0], dtype=bool)
    if np.any(m[off] < 0.0) or np.any(m[off] > 1.0 + 1e-12):
        import warnings

        warnings.warn("off-diagonal overlaps clipped into [0, 1]", stacklevel=2)
    s = np.sqrt(np.clip(m, 0.0, 1.0))
    np.fill_diagonal(s, 1.0)
    eigs = np.linalg.eigvalsh(s)
    if eigs.min() < -1e-10:
        raise ContractError(
            f"overlap matrix is not positive semi-definite (min eig {eigs.min():.2e})"
        )
    return s


def multiphoton_mixture(g2, p0):
    """(p1, p2) solving g2 = 2 p2 / (p1 + 2 p2)^2 with p0 + p1 + p2 = 1.

    Bracketed root-finding on [0, 1 - p0] to 1e-12; the extra photon is
    treated as fully distinguishable downstream.
    """
    if not 0.0 <= g2 < 0.5:
        raise ContractError("g2 must lie in [0, 0.5)")
    if not 0.0 <= p0 < 1.0:
        raise ContractError("p0 must lie in [0, 1)")
    if g2 == 0.0:
        return 1.0 - p0, 0.0
    budget = 1.0 - p0

    def f(x):
        return 2.0 * x / (budget + x) ** 2 - g2

    if f(0.0) > 0.0 or f(budget) < 0.0:
        raise ContractError("no multiphoton solution in [0, 1 - p0]")
    p2 = brentq(f, 0.0, budget, xtol=1e-15, rtol=1e-15)
    p1 = budget - p2
    if abs(2.0 * p2 / (p1 + 2.0 * p2) ** 2 - g2) > 1e-12:
        raise ContractError("multiphoton root did not converge")
    return p1, p2


@lru_cache(maxsize=64)
def _config_table(n_photons, m_modes):
    configs = enumerate_configurations(n_photons, m_modes)
    assign = np.array([assignment_list(c) for c in configs], dtype=np.int64)
    assign = assign.reshape(len(configs), n_photons)
    t_fact = np.array(
        [float(np.prod([math.factorial(o) for o in c])) for c in configs]
    )
    return tuple(configs), assign, t_fact, permutation_table(n_photons)


def _validate_gram(s, nph):
    s = np.asarray(s, dtype=float)
    if s.shape != (nph, nph):
        raise ContractError("Gram matrix shape does not match photon count")
    if not np.allclose(s, s.T, atol=1e-12):
        raise ContractError("Gram matrix must be symmetric")
    if not np.allclose(np.diag(s), 1.0, atol=1e-12):
        raise ContractError("Gram matrix must have unit diagonal")
    return s


def _assignment_distribution(u, in_modes, s):
    """Configuration probabilities for photons entering modes ``in_modes``
    with internal-state Gram matrix ``s``. The pairwise-conjugate
    summation keeps probabilities real by construction."""
    m = u.shape[0]
    nph = len(in_modes)
    configs, assign, t_fact, perms = _config_table(nph, m)
    probs = gram_probs_kernel(
        np.ascontiguousarray(u, dtype=np.complex128),
        np.asarray(in_modes, dtype=np.int64),
        np.ascontiguousarray(s, dtype=float),
        assign,
        perms,
        t_fact,
    )
    return configs, np.clip(probs, 0.0, None)


def partial_dist_distribution(u, input_config, s):
    """P(T) for every output configuration under partial distinguishability.

    Requires a single-occupancy input (one photon per occupied mode) and
    at most five photons. With all-ones S this is the ideal bosonic
    distribution; with S = I it reduces to the permanent of the
    elementwise |U|^2 submatrix (classical particles).
    """
    u = np.asarray(u, dtype=np.complex128)
    if any(occ not in (0, 1) for occ in input_config):
        raise ContractError("input configuration must be single-occupancy")
    nph = sum(input_config)
    if nph > 5:
        raise ContractError("partial-distinguishability model limited to n <= 5")
    in_modes = assignment_list(input_config)
    s = _validate_gram(s, nph)
    configs, probs = _assignment_distribution(u, in_modes, s)
    return {cfg: float(p) for cfg, p in zip(configs, probs)}


@dataclass(frozen=True)
class OutcomeDistribution:
    n_qubits: int
    pattern_probs: dict  # click pattern (sorted mode tuple) -> probability
    discard_mass: float
    truncated_mass: float
    truncation_warning: bool

    def valid_probs(self):
        """Probabilities of the 2^n dual-rail-valid patterns by basis index."""
        spec = DualRailSpec(self.n_qubits)
        out = np.zeros(1 << self.n_qubits)
        for pattern, prob in self.pattern_probs.items():
            idx = _pattern_basis_index(pattern, spec)
            if idx is not None:
                out[idx] += prob
        return out

    @property
    def valid_mass(self):
        return float(self.valid_probs().sum())


def _pattern_basis_index(pattern, spec):
    if len(pattern) != spec.n_qubits:
        return None
    occ = [0] * spec.n_modes
    for mode in pattern:
        occ[mode] = 1
    return fock_to_basis_index(tuple(occ), spec)


def _click_reduce(config, prob, eff, acc):
    occupied = [j for j, occ in enumerate(config) if occ > 0]
    if np.all(eff == 1.0):
        acc[tuple(occupied)] = acc.get(tuple(occupied), 0.0) + prob
        return
    miss = [(1.0 - eff[j]) ** config[j] for j in occupied]
    for clicked in itertools.product((True, False), repeat=len(occupied)):
        w = prob
        pattern = []
        for j, c, pm in zip(occupied, clicked, miss):
            if c:
                w *= 1.0 - pm
                pattern.append(j)
            else:
                w *= pm
        if w > 0.0:
            acc[tuple(pattern)] = acc.get(tuple(pattern), 0.0) + w


def noisy_event_distribution(layout, spec, params, bases=None):
    """Click-pattern distribution of one circuit programming.

    Mixes the nominal n-photon event with, per source bin, an event
    carrying one extra fully distinguishable photon (weight first order
    in p2, renormalized over the included events); propagates each event
    through the composed mesh with physical couplers, enumerates uniform
    photon loss, and reduces outcomes to threshold-detector click
    patterns.
    """
    n = spec.n_qubits
    if n > 4:
        raise ContractError("noisy model limited to n <= 4 qubits")
    if layout.m != spec.n_modes:
        raise ContractError("layout mode count does not match the dual-rail spec")
    u = compose_mesh(layout, bases=bases, couplers=params.coupler_map(layout))
    p1, p2 = multiphoton_mixture(params.g2, params.p0)
    s_base = overlaps_from_visibilities(params.visibility_matrix(n), params.g2)
    base_modes = np.array([2 * l for l in range(n)], dtype=np.int64)

    w_nominal = p1**n
    w_extra = p1 ** (n - 1) * p2
    total_included = w_nominal + n * w_extra
    truncated = 1.0 - total_included
    events = [(base_modes, s_base, w_nominal / total_included)]
    if w_extra > 0.0:
        s_ext = np.eye(n + 1)
        s_ext[:n, :n] = s_base
        for k in range(n):
            modes = np.concatenate([base_modes, [2 * k]]).astype(np.int64)
            events.append((modes, s_ext, w_extra / total_included))

    eff = params.detector_efficiencies(layout.m)
    eta = params.eta
    acc = {}
    lost_mass = 0.0
    for modes, s_ev, weight in events:
        nph = len(modes)
        if eta == 1.0:
            subsets = [(tuple(range(nph)), weight)]
        else:
            subsets = []
            for size in range(n, nph + 1):
                for keep in itertools.combinations(range(nph), size):
                    subsets.append((keep, weight * eta**size * (1.0 - eta) ** (nph - size)))
            lost_mass += weight * sum(
                math.comb(nph, size) * eta**size * (1.0 - eta) ** (nph - size)
                for size in range(0, n)
            )
        for keep, w in subsets:
            keep = list(keep)
            sub_s = s_ev[np.ix_(keep, keep)]
            configs, probs = _assignment_distribution(u, modes[keep], sub_s)
            for cfg, p in zip(configs, probs):
                if p > 0.0:
                    _click_reduce(cfg, w * p, eff, acc)

    valid = sum(
        p for pat, p in acc.items() if _pattern_basis_index(pat, spec) is not None
    )
    return OutcomeDistribution(
        n_qubits=n,
        pattern_probs=acc,
        discard_mass=float(1.0 - valid),
        truncated_mass=float(truncated),
        truncation_warning=truncated > TRUNCATION_WARN_LEVEL,
    )


class NoisyModelSource:
    """Measurement-outcome source backed by the imperfection model.

    Caches the per-setting distribution, so tQST, QST, threshold scans
    and the model prediction can share one propagation per setting.
    """

    def __init__(self, layout, spec, params):
        self.layout = layout
        self.spec = spec
        self.params = params
        self._cache = {}

    def distribution(self, bases):
        if bases not in self._cache:
            self._cache[bases] = noisy_event_distribution(
                self.layout, self.spec, self.params, bases
            )
        return self._cache[bases]

    def outcome_probabilities(self, bases):
        dist = self.distribution(bases)
        probs = dist.valid_probs()
        meta = {
            "discard_mass": dist.discard_mass,
            "truncated_mass": dist.truncated_mass,
            "truncation_warning": dist.truncation_warning,
        }
        return probs, meta


def predicted_density_matrix(layout, spec, params, source=None, consistency_tol=MODEL_CONSISTENCY_TOL):
    """Model density matrix from all tomographically complete settings.

    Runs the noisy distribution for every {X, Y, Z}^n setting, averages
    Pauli expectations over the settings that cover each string (linear
    inversion), checks self-consistency of the setting probabilities,
    and projects onto the physical cone by eigenvalue clipping with
    trace renormalization. Returns (rho, diagnostics).
    """
    from .mesh import MEAS_ANGLES, RBSParams, rbs_unitary

    n = spec.n_qubits
    dim = 1 << n
    if source is None:
        source = NoisyModelSource(layout, spec, params)
    settings = all_settings(n)
    probs = {}
    for bases in settings:
        raw, _ = source.outcome_probabilities(bases)
        total = raw.sum()
        if total <= 0.0:
            raise ContractError(f"setting {bases} produced no valid events")
        probs[bases] = raw / total

    rho = np.zeros((dim, dim), dtype=np.complex128)
    strings = [""]
    for _ in range(n):
        strings = [s + ch for s in strings for ch in "IXYZ"]
    for string in strings:
        covering = [b for b in settings if all(s == "I" or s == c for s, c in zip(string, b))]
        value = float(
            np.mean([expectation_from_frequencies(string, probs[b]) for b in covering])
        )
        rho += value * pauli_matrix(string)
    rho /= dim

    residual = 0.0
    for bases in settings:
        rot = np.array([[1.0]], dtype=np.complex128)
        for b in bases:
            rot = np.kron(rot, rbs_unitary(RBSParams(*MEAS_ANGLES[b])))
        pred = np.real(np.diag(rot @ rho @ rot.conj().T))
        residual = max(residual, float(np.max(np.abs(pred - probs[bases]))))
    if residual > consistency_tol:
        raise ContractError(
            f"model probabilities inconsistent with any single state "
            f"(residual {residual:.3e})"
        )

    eigs, vecs = np.linalg.eigh(rho)
    clipped = np.clip(eigs, 0.0, None)
    rho_psd = (vecs * clipped) @ vecs.conj().T
    rho_psd /= np.trace(rho_psd).real
    diagnostics = {
        "residual": residual,
        "min_eig_before_projection": float(eigs.min()),
    }
    return rho_psd, diagnostics


def apply_detector_correction(counts, efficiencies):
    """Divide each pattern's count by the efficiencies of its clicked modes."""
    eff = np.asarray(efficiencies, dtype=float)
    if np.any(eff <= 0.0) or np.any(eff > 1.0):
        raise ContractError("detector efficiencies must lie in (0, 1]")
    out = {}
    for pattern, count in counts.items():
        scale = 1.0
        for mode in pattern:
            scale *= eff[mode]
        out[pattern] = count / scale
    return out
