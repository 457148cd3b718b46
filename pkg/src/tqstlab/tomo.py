"""Threshold quantum state tomography: Gini threshold, projector plans,
count acquisition, and maximum-likelihood reconstruction.

Full QST is the t = 0 special case throughout. The protocol steps:
measure the computational basis, derive a threshold from the Gini index
of the diagonal, select off-diagonal elements whose diagonal bound
sqrt(c_i c_j) clears it, measure only the settings those elements need,
and reconstruct by likelihood minimization over a Cholesky-style
parameterization.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import pauli
from .errors import ContractError, ReconstructionError
from .mesh import MEAS_ANGLES, RBSParams, rbs_unitary

LIKELIHOOD_FLOOR = 1e-6
DEFAULT_STARTS = 5


def gini_index(diag):
    """Gini index of a non-negative vector, in [0, 1 - 1/N].

    Sorts ascending and evaluates 1 - 2 sum_k (c_k / ||c||_1) (N - k + 1/2) / N.
    Zero for a uniform vector, 1 - 1/N for a one-hot vector; invariant
    under positive rescaling.
    """
    c = np.asarray(diag, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ContractError("diagonal must be a non-empty vector")
    if np.any(c < -1e-12):
        raise ContractError("diagonal entries must be non-negative")
    c = np.clip(c, 0.0, None)
    norm = c.sum()
    if norm <= 0.0:
        raise ContractError("Gini index undefined for the all-zero vector")
    c = np.sort(c)
    n = c.size
    weights = (n - np.arange(1, n + 1) + 0.5) / n
    return float(1.0 - 2.0 * np.dot(c / norm, weights))


def threshold(diag, n_qubits):
    """Gini-derived threshold t = ||c||_1 GI(c) / (2^n - 1)."""
    c = np.asarray(diag, dtype=float)
    return float(np.sum(np.clip(c, 0.0, None)) * gini_index(c) / (2**n_qubits - 1))


def select_offdiagonals(diag, t):
    """Pairs (i, j), i < j, with sqrt(c_i c_j) >= t, in lexicographic order."""
    if t < 0:
        raise ContractError("threshold must be non-negative")
    c = np.clip(np.asarray(diag, dtype=float), 0.0, None)
    n = c.size
    return [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if math.sqrt(c[i] * c[j]) >= t
    ]


@dataclass(frozen=True)
class Projector:
    kind: str  # "diag" | "real" | "imag"
    i: int
    j: int
    state: np.ndarray
    pauli_terms: dict


@dataclass(frozen=True)
class ProjectorPlan:
    n_qubits: int
    threshold: float
    pairs: tuple
    projectors: tuple
    settings: tuple
    string_setting: dict

    @property
    def n_t(self):
        return len(self.projectors)

    @property
    def n_0(self):
        return 4**self.n_qubits


def _pair_state(i, j, n, imag):
    vec = np.zeros(1 << n, dtype=np.complex128)
    vec[i] = 1.0
    vec[j] = 1.0j if imag else 1.0
    return vec / math.sqrt(2.0)


def build_plan(diag, t, n_qubits):
    """Projector plan for the given diagonal and threshold.

    Contains the 2^n computational projectors plus, per selected pair
    (i, j), the states (|i> + |j>)/sqrt(2) and (|i> + i|j>)/sqrt(2), so
    N_t = 2^n + 2 |pairs|. Settings are deduplicated local bases covering
    every Pauli string in the projector decompositions.
    """
    n = n_qubits
    dim = 1 << n
    c = np.asarray(diag, dtype=float)
    if c.size != dim:
        raise ContractError(f"diagonal length {c.size} does not match {n} qubits")
    pairs = tuple(select_offdiagonals(c, t))
    projectors = []
    for k in range(dim):
        state = np.zeros(dim, dtype=np.complex128)
        state[k] = 1.0
        projectors.append(Projector("diag", k, k, state, {}))
    for i, j in pairs:
        for kind, imag in (("real", False), ("imag", True)):
            state = _pair_state(i, j, n, imag)
            projectors.append(
                Projector(kind, i, j, state, pauli.decompose_projector(state))
            )
    settings = pauli.compile_settings(pairs, n)
    string_setting = {}
    for proj in projectors:
        for string in proj.pauli_terms:
            if string == "I" * n or string in string_setting:
                continue
            for setting in settings:
                if pauli.string_covered_by(string, setting):
                    string_setting[string] = setting
                    break
            else:
                raise ContractError(f"no compiled setting covers {string}")
    return ProjectorPlan(n, float(t), pairs, tuple(projectors), settings, string_setting)


@dataclass(frozen=True)
class SettingCounts:
    bases: str
    shots: object  # int, or None for exact probabilities
    counts: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CountRecord:
    n_qubits: int
    settings: tuple
    seed: object
    provenance: str

    def by_bases(self):
        return {s.bases: s for s in self.settings}


class ExactStateSource:
    """Born-rule outcome probabilities of a pure n-qubit state."""

    def __init__(self, amplitudes):
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
        n = int(np.log2(amps.size))
        if 1 << n != amps.size:
            raise ContractError("amplitude vector length must be a power of two")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise ContractError("state vector must be normalized")
        self.n_qubits = n
        self.amplitudes = amps / norm

    def outcome_probabilities(self, bases):
        psi = self.amplitudes.reshape((2,) * self.n_qubits)
        for q, b in enumerate(bases):
            rot = rbs_unitary(RBSParams(*MEAS_ANGLES[b]))
            psi = np.moveaxis(np.tensordot(rot, psi, axes=([1], [q])), 0, q)
        probs = np.abs(psi.reshape(-1)) ** 2
        return probs / probs.sum(), {"discard_mass": 0.0}


def _setting_seed(seed, bases):
    digest = hashlib.sha256(f"{seed}|{bases}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _acquire_setting(source, bases, shots, seed):
    probs, meta = source.outcome_probabilities(bases)
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    total = probs.sum()
    if total <= 0.0:
        raise ContractError(f"setting {bases} has zero valid-pattern mass")
    probs = probs / total
    if shots is None:
        return SettingCounts(bases, None, probs.copy(), dict(meta))
    rng = np.random.default_rng(_setting_seed(seed, bases))
    counts = rng.multinomial(shots, probs).astype(float)
    return SettingCounts(bases, shots, counts, dict(meta))


def acquire_counts(plan, source, shots, seed, reuse=None):
    """Counts for every compiled setting of the plan.

    Each setting gets an RNG stream derived from (seed, bases), so
    serial and parallel acquisition, and runs sharing settings, produce
    identical records. ``reuse`` optionally supplies already-acquired
    SettingCounts keyed by bases. shots=None stores exact probabilities.
    """
    if shots is not None and shots < 1:
        raise ContractError("shots must be >= 1")
    reuse = reuse or {}
    records = []
    for bases in plan.settings:
        if bases in reuse:
            records.append(reuse[bases])
        else:
            records.append(_acquire_setting(source, bases, shots, seed))
    provenance = "exact" if shots is None else "simulated"
    return CountRecord(plan.n_qubits, tuple(records), seed, provenance)


def estimate_projector_values(plan, record):
    """Per-projector frequencies <psi_nu| rho |psi_nu> from counts.

    Diagonal projectors read the computational-setting relative
    frequencies; pair projectors combine Pauli expectations from their
    assigned settings. Values are clipped to [0, 1]; clip events are
    returned alongside.
    """
    by_bases = record.by_bases()
    missing = [s for s in plan.settings if s not in by_bases]
    if missing:
        raise ContractError(f"count record lacks settings {missing}")
    freqs = {}
    for bases, sc in by_bases.items():
        total = sc.counts.sum()
        if total <= 0:
            raise ContractError(f"setting {bases} has no counts")
        freqs[bases] = sc.counts / total
    zfreq = freqs["Z" * plan.n_qubits]
    expectations = {
        string: pauli.expectation_from_frequencies(string, freqs[setting])
        for string, setting in plan.string_setting.items()
    }
    identity = "I" * plan.n_qubits
    values = np.empty(plan.n_t)
    clips = []
    for idx, proj in enumerate(plan.projectors):
        if proj.kind == "diag":
            val = float(zfreq[proj.i])
        else:
            val = 0.0
            for string, alpha in proj.pauli_terms.items():
                val += alpha * (1.0 if string == identity else expectations[string])
        if val < 0.0 or val > 1.0:
            clips.append((idx, float(val)))
            val = min(max(val, 0.0), 1.0)
        values[idx] = val
    return values, clips


def _unpack_t(x, dim, rows, cols):
    t = np.zeros((dim, dim), dtype=np.complex128)
    t[np.arange(dim), np.arange(dim)] = x[:dim]
    off = x[dim:]
    t[rows, cols] = off[0::2] + 1j * off[1::2]
    return t


def _pack_grad(g, dim, rows, cols):
    grad = np.empty(dim * dim)
    grad[:dim] = 2.0 * g[np.arange(dim), np.arange(dim)].real
    grad[dim::2] = 2.0 * g[rows, cols].real
    grad[dim + 1 :: 2] = 2.0 * g[rows, cols].imag
    return grad


def mle_reconstruct(plan, values, seed=0, n_starts=DEFAULT_STARTS, maxiter=2000):
    """Maximum-likelihood density matrix from per-projector frequencies.

    Parameterizes rho = T^dag T / tr(T^dag T) with lower-triangular T
    (4^n real parameters) and minimizes the Gaussian-approximated
    likelihood sum_nu (p_nu - f_nu)^2 / (2 max(p_nu, eps)) with an
    analytic gradient, multi-start L-BFGS. Raises ReconstructionError
    carrying the best iterate if no start converges.
    """
    values = np.asarray(values, dtype=float)
    if values.size != plan.n_t:
        raise ContractError("one frequency per plan projector required")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ContractError("frequencies must lie in [0, 1]")
    dim = 1 << plan.n_qubits
    states = np.stack([p.state for p in plan.projectors])  # (V, dim)
    rows, cols = np.tril_indices(dim, -1)
    eps = LIKELIHOOD_FLOOR

    def objective(x):
        t = _unpack_t(x, dim, rows, cols)
        tpsi = t @ states.T  # column nu is T psi_nu
        q = np.einsum("iv,iv->v", tpsi.conj(), tpsi).real
        tau = np.einsum("ij,ij->", t.conj(), t).real
        p = q / tau
        denom = np.maximum(p, eps)
        val = float(np.sum((p - values) ** 2 / (2.0 * denom)))
        gp = np.where(
            p > eps, 0.5 * (1.0 - values**2 / denom**2), (p - values) / eps
        )
        a = (states.T * gp) @ states.conj()  # sum_nu g'_nu |psi_nu><psi_nu|
        beta = float(np.dot(gp, p))
        g = (t @ a - beta * t) / tau  # dL/dT*, Wirtinger convention
        return val, _pack_grad(g, dim, rows, cols)

    def solve(x0, budget):
        return minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": budget, "ftol": 1e-12, "gtol": 1e-9, "maxcor": 30},
        )

    rng = np.random.default_rng(seed)
    starts = [np.concatenate([np.full(dim, 1.0 / math.sqrt(dim)), np.zeros(dim * (dim - 1))])]
    for _ in range(n_starts - 1):
        starts.append(rng.normal(0.0, 1.0 / math.sqrt(dim), size=dim * dim))
    best = None
    converged = False
    for k, x0 in enumerate(starts):
        res = solve(x0, maxiter)
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x, k, res.nit)
        converged = converged or bool(res.success)
    retries = 0
    while not converged and retries < 2:
        # resume the best iterate with a doubled budget before giving up
        retries += 1
        res = solve(best[1], maxiter * 2**retries)
        if res.fun < best[0]:
            best = (res.fun, res.x, best[2], best[3] + res.nit)
        converged = bool(res.success)
    t = _unpack_t(best[1], dim, rows, cols)
    rho = t.conj().T @ t
    rho /= np.trace(rho).real
    diagnostics = {
        "objective": float(best[0]),
        "start": int(best[2]),
        "iterations": int(best[3]),
        "retries": retries,
        "converged": converged,
    }
    if not converged:
        raise ReconstructionError(
            "optimizer failed to converge within the retry budget",
            best_rho=rho,
            diagnostics=diagnostics,
        )
    return rho, diagnostics


@dataclass(frozen=True)
class TomographyResult:
    rho: np.ndarray
    plan: ProjectorPlan
    record: CountRecord
    diagnostics: dict


def run_tqst(source, n_qubits, shots, seed, threshold_mode="auto"):
    """Full protocol: diagonal, threshold, plan, counts, reconstruction.

    threshold_mode is "auto" (Gini rule) or a fixed numeric threshold.
    shots=None runs on exact outcome probabilities.
    """
    zbases = "Z" * n_qubits
    zrec = _acquire_setting(source, zbases, shots, seed)
    if zrec.shots is not None:
        raw = zrec.counts / zrec.shots
    else:
        raw = zrec.counts.copy()
    raw_norm = float(raw.sum())
    diag = raw / raw_norm
    if threshold_mode == "auto":
        t = threshold(diag, n_qubits)
    else:
        t = float(threshold_mode)
        if t < 0:
            raise ContractError("fixed threshold must be non-negative")
    plan = build_plan(diag, t, n_qubits)
    record = acquire_counts(plan, source, shots, seed, reuse={zbases: zrec})
    values, clips = estimate_projector_values(plan, record)
    rho, mle_diag = mle_reconstruct(plan, values, seed=_setting_seed(seed, "mle"))
    discard = [sc.meta.get("discard_mass", 0.0) for sc in record.settings]
    diagnostics = {
        "n_t": plan.n_t,
        "n_0": plan.n_0,
        "n_settings": len(plan.settings),
        "n_settings_full": len(pauli.all_settings(n_qubits)),
        "threshold": float(t),
        "gini": gini_index(diag),
        "raw_diag_norm": raw_norm,
        "clip_events": clips,
        "max_discard_mass": float(max(discard)) if discard else 0.0,
        "mle": mle_diag,
    }
    return TomographyResult(rho, plan, record, diagnostics)


def run_qst(source, n_qubits, shots, seed):
    """Tomographically complete reconstruction: tQST with t = 0."""
    return run_tqst(source, n_qubits, shots, seed, threshold_mode=0.0)


def enumerate_scan_plans(diag, n_qubits):
    """Distinct plans swept from above the largest pair score down to 0.

    Returns [(t, plan)] ordered by decreasing t: the diagonal-only plan
    first, then one entry per plan-changing score value, ending at t = 0.
    """
    c = np.clip(np.asarray(diag, dtype=float), 0.0, None)
    dim = c.size
    scores = sorted(
        {
            math.sqrt(c[i] * c[j])
            for i in range(dim)
            for j in range(i + 1, dim)
        },
        reverse=True,
    )
    t_values = [scores[0] + 1.0 if scores else 1.0]
    t_values += [s for s in scores if s > 0.0]
    t_values.append(0.0)
    rows = []
    seen = set()
    for t in t_values:
        plan = build_plan(c, t, n_qubits)
        if plan.pairs in seen:
            continue
        seen.add(plan.pairs)
        rows.append((float(t), plan))
    return rows


def count_record_to_json(record):
    return {
        "n_qubits": record.n_qubits,
        "settings": [
            {
                "bases": list(sc.bases),
                "shots": sc.shots,
                "counts": [float(v) for v in sc.counts],
            }
            for sc in record.settings
        ],
        "seed": record.seed,
        "provenance": record.provenance,
    }


def count_record_from_json(doc):
    settings = tuple(
        SettingCounts(
            "".join(s["bases"]), s["shots"], np.asarray(s["counts"], dtype=float)
        )
        for s in doc["settings"]
    )
    return CountRecord(doc["n_qubits"], settings, doc.get("seed"), doc.get("provenance", "file"))


def reconstruction_to_json(rho, plan, diagnostics):
    return {
        "dims": int(rho.shape[0]),
        "rho_re": [[float(v) for v in row] for row in rho.real],
        "rho_im": [[float(v) for v in row] for row in rho.imag],
        "plan": {
            "pairs": [list(p) for p in plan.pairs],
            "N_t": plan.n_t,
            "settings": list(plan.settings),
        },
        "diagnostics": diagnostics,
    }
