"""Fock-space combinatorics and permanent-based transition amplitudes.

Configurations are plain tuples of per-mode occupation numbers. The
canonical photon-to-mode assignment order is non-decreasing mode index;
every duplication rule below references that order.
"""

import math

import numpy as np

from .errors import ContractError
from ._kernels import permanent_kernel

PERMANENT_MAX_N = 16
ENUMERATION_MAX = 2_000_000


def configuration_count(n_photons, m_modes):
    """Number of ways to place n photons in m modes: C(n + m - 1, n)."""
    return math.comb(n_photons + m_modes - 1, n_photons)


def enumerate_configurations(n_photons, m_modes):
    """All occupation tuples of n photons in m modes.

    Ordered lexicographically descending on occupations, e.g.
    (2, 2) -> [(2, 0), (1, 1), (0, 2)]. Raises on absurd sizes.
    """
    if n_photons < 0 or m_modes < 1:
        raise ContractError("need n_photons >= 0 and m_modes >= 1")
    count = configuration_count(n_photons, m_modes)
    if count > ENUMERATION_MAX:
        raise ContractError(
            f"{count} configurations exceed the enumeration limit {ENUMERATION_MAX}"
        )
    out = []

    def rec(prefix, remaining, modes_left):
        if modes_left == 1:
            out.append(prefix + (remaining,))
            return
        for k in range(remaining, -1, -1):
            rec(prefix + (k,), remaining - k, modes_left - 1)

    rec((), n_photons, m_modes)
    return out


def assignment_list(config):
    """Canonical per-photon mode list: mode j repeated config[j] times."""
    modes = []
    for j, occ in enumerate(config):
        if occ < 0:
            raise ContractError("occupations must be non-negative")
        modes.extend([j] * occ)
    return np.array(modes, dtype=np.int64)


def permanent(matrix):
    """Matrix permanent of a square complex matrix, n <= 16.

    Uses Glynn's O(2^n n) Gray-code formula; the naive O(n! n) expansion
    lives in the test suite as an independent oracle.
    """
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"permanent needs a square matrix, got shape {a.shape}")
    if a.shape[0] > PERMANENT_MAX_N:
        raise ContractError(f"permanent limited to n <= {PERMANENT_MAX_N}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix entries must be finite")
    return complex(permanent_kernel(np.ascontiguousarray(a)))


def build_submatrix(u, s_config, t_config):
    """Submatrix with row j of u taken t_j times and column i taken s_i times.

    Rows and columns follow the canonical assignment order.
    """
    u = np.asarray(u, dtype=np.complex128)
    n_s = sum(s_config)
    n_t = sum(t_config)
    if n_s != n_t:
        raise ContractError(
            f"photon number mismatch: input {n_s} vs output {n_t}"
        )
    if u.shape != (len(t_config), len(s_config)) or len(s_config) != len(t_config):
        raise ContractError(
            f"matrix shape {u.shape} does not match mode counts "
            f"({len(t_config)}, {len(s_config)})"
        )
    rows = assignment_list(t_config)
    cols = assignment_list(s_config)
    return u[np.ix_(rows, cols)]


def transition_amplitude(u, s_config, t_config):
    """Bosonic amplitude per(U_{S,T}) / sqrt(prod s_i! prod t_j!)."""
    sub = build_submatrix(u, s_config, t_config)
    norm = 1.0
    for occ in s_config:
        norm *= math.factorial(occ)
    for occ in t_config:
        norm *= math.factorial(occ)
    return permanent(sub) / math.sqrt(norm)
