"""Pauli strings, projector decompositions, and local-setting compilation.

A measurement setting is a string over 'XYZ' (one basis per qubit, qubit
0 first / most significant bit). A Pauli string over 'IXYZ' is measurable
in a setting iff every non-identity letter matches the setting. Outcome
bit 0 corresponds to the +1 eigenvector of the chosen basis operator.
"""

from functools import lru_cache

import numpy as np

from .errors import ContractError

_P1 = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

DECOMP_TOL = 1e-12


@lru_cache(maxsize=4096)
def pauli_matrix(string):
    mat = np.array([[1.0]], dtype=np.complex128)
    for ch in string:
        mat = np.kron(mat, _P1[ch])
    return mat


def string_covered_by(string, setting):
    return all(s == "I" or s == b for s, b in zip(string, setting))


def string_mask(string):
    """Bit mask of non-identity positions, aligned with outcome-index bits."""
    n = len(string)
    mask = 0
    for q, ch in enumerate(string):
        if ch != "I":
            mask |= 1 << (n - 1 - q)
    return mask


def expectation_from_frequencies(string, freqs):
    """<P> from the outcome frequencies of a covering setting."""
    n = len(string)
    if len(freqs) != 1 << n:
        raise ContractError("frequency vector length does not match qubit count")
    mask = string_mask(string)
    signs = np.array(
        [1.0 - 2.0 * (bin(o & mask).count("1") & 1) for o in range(1 << n)]
    )
    return float(np.dot(signs, freqs))


def decompose_projector(psi):
    """Pauli expansion of |psi><psi|: {string: alpha} with alpha real.

    Satisfies |psi><psi| = sum_s alpha_s P_s exactly; terms below
    DECOMP_TOL are dropped.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    n = int(np.log2(psi.size))
    if 1 << n != psi.size:
        raise ContractError("state vector length must be a power of two")
    terms = {}
    for string in all_strings(n):
        alpha = np.real(np.vdot(psi, pauli_matrix(string) @ psi)) / (1 << n)
        if abs(alpha) > DECOMP_TOL:
            terms[string] = float(alpha)
    return terms


@lru_cache(maxsize=16)
def all_strings(n):
    out = [""]
    for _ in range(n):
        out = [s + ch for s in out for ch in "IXYZ"]
    return tuple(out)


@lru_cache(maxsize=16)
def all_settings(n):
    """The tomographically complete setting set, all of {X, Y, Z}^n."""
    out = [""]
    for _ in range(n):
        out = [s + ch for s in out for ch in "XYZ"]
    return tuple(out)


def pair_settings(i, j, n):
    """Settings needed by the off-diagonal pair (i, j).

    The pair's projectors expand over strings acting as X/Y exactly on
    the qubits where i and j differ and as I/Z elsewhere; each X/Y
    pattern with Z padding must be measured as its own setting.
    """
    if not 0 <= i < j < (1 << n):
        raise ContractError(f"invalid pair ({i}, {j}) for {n} qubits")
    diff = i ^ j
    positions = [q for q in range(n) if (diff >> (n - 1 - q)) & 1]
    settings = [["Z"] * n]
    for q in positions:
        settings = [s[:q] + [ch] + s[q + 1 :] for s in settings for ch in "XY"]
    return ["".join(s) for s in settings]


def compile_settings(pairs, n):
    """Deduplicated setting list covering the diagonal plus all pairs.

    The all-Z setting (diagonal projectors and every I/Z-only string)
    comes first; pair settings follow in lexicographic order. Each
    required string is covered by exactly one candidate, so the union is
    minimal.
    """
    extra = set()
    for i, j in pairs:
        extra.update(pair_settings(i, j, n))
    zsetting = "Z" * n
    extra.discard(zsetting)
    return (zsetting,) + tuple(sorted(extra))
