"""Figures of merit: Uhlmann fidelity, purity, and comparison tables."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

PSD_TOL = 1e-7

COMPARISON_COLUMNS = (
    "label",
    "gini",
    "N_t",
    "N_0",
    "settings_t",
    "settings_0",
    "F_0t",
    "F_0m",
    "F_tm",
    "P_0",
    "P_t",
)


def check_density_matrix(rho, atol=1e-8):
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError("density matrix must be square")
    if not np.allclose(rho, rho.conj().T, atol=atol):
        raise ContractError("density matrix must be Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-6:
        raise ContractError("density matrix must have unit trace")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -PSD_TOL:
        raise ContractError(
            f"density matrix not positive semi-definite (min eig {eigs.min():.2e})"
        )
    return rho


def _psd_sqrt(rho):
    eigs, vecs = np.linalg.eigh(rho)
    return (vecs * np.sqrt(np.clip(eigs, 0.0, None))) @ vecs.conj().T


def _fidelity_once(rho, sigma):
    root = _psd_sqrt(rho)
    inner = root @ sigma @ root
    eigs = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    return float(np.sum(np.sqrt(np.clip(eigs, 0.0, None))) ** 2)


def fidelity(rho, sigma):
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 in [0, 1].

    Symmetrized over the argument order to suppress round-off asymmetry
    near singular inputs.
    """
    rho = check_density_matrix(rho)
    sigma = check_density_matrix(sigma)
    if rho.shape != sigma.shape:
        raise ContractError("density matrices must share dimensions")
    value = 0.5 * (_fidelity_once(rho, sigma) + _fidelity_once(sigma, rho))
    return float(min(max(value, 0.0), 1.0))


def purity(rho):
    """tr rho^2: one for pure states, 1/2^n for the maximally mixed state."""
    rho = check_density_matrix(rho)
    return float(np.trace(rho @ rho).real)


@dataclass(frozen=True)
class StateRun:
    """Inputs of one comparison row: reconstructions and their plans."""

    label: str
    gini: float
    rho_0: np.ndarray
    rho_t: np.ndarray
    rho_m: np.ndarray
    n_t: int
    n_0: int
    settings_t: int
    settings_0: int


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    gini: float
    n_t: int
    n_0: int
    settings_t: int
    settings_0: int
    f_0t: float
    f_0m: float
    f_tm: float
    p_0: float
    p_t: float

    def as_list(self):
        return [
            self.label,
            repr(self.gini),
            self.n_t,
            self.n_0,
            self.settings_t,
            self.settings_0,
            repr(self.f_0t),
            repr(self.f_0m),
            repr(self.f_tm),
            repr(self.p_0),
            repr(self.p_t),
        ]


def comparison_table(runs):
    """One ComparisonRow per state, ordered deterministically by label."""
    rows = []
    for run in sorted(runs, key=lambda r: r.label):
        rows.append(
            ComparisonRow(
                label=run.label,
                gini=run.gini,
                n_t=run.n_t,
                n_0=run.n_0,
                settings_t=run.settings_t,
                settings_0=run.settings_0,
                f_0t=fidelity(run.rho_0, run.rho_t),
                f_0m=fidelity(run.rho_0, run.rho_m),
                f_tm=fidelity(run.rho_t, run.rho_m),
                p_0=purity(run.rho_0),
                p_t=purity(run.rho_t),
            )
        )
    return rows


def write_comparison_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())
