"""Hot numeric kernels with numba and pure-numpy builds.

Two inner loops dominate every simulation in this package:

* the matrix permanent (Glynn's formula walked in Gray-code order,
  O(2^n n) per call), and
* the partial-distinguishability output distribution, a double sum over
  photon permutations weighted by a Gram matrix of internal-state
  overlaps, O((n!)^2 n) per output configuration.

Both ship as numba ``@njit`` kernels plus a vectorized numpy fallback.
The numba build is used whenever numba imports cleanly; set the
environment variable ``TQSTLAB_PURE_NUMPY=1`` before import to force the
numpy path. ``benchmarks/bench_kernels.py`` compares the two.
"""

import itertools
import os
from functools import lru_cache

import numpy as np

_FORCE_NUMPY = os.environ.get("TQSTLAB_PURE_NUMPY", "0").strip() not in ("", "0")

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via subprocess test
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and not _FORCE_NUMPY


@lru_cache(maxsize=16)
def permutation_table(n):
    """All permutations of range(n) as an (n!, n) int64 array."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


def permanent_numpy(a):
    """Permanent via Glynn's formula, vectorized over all sign vectors.

    Sign vectors delta have delta_0 fixed at +1, so 2^(n-1) column-sum
    rows are built at once; memory stays below 10 MB up to n = 16.
    """
    n = a.shape[0]
    if n == 0:
        return complex(1.0)
    if n == 1:
        return complex(a[0, 0])
    k = np.arange(1 << (n - 1), dtype=np.int64)
    bits = (k[:, None] >> np.arange(n - 1)[None, :]) & 1
    signs = np.empty((k.size, n))
    signs[:, 0] = 1.0
    signs[:, 1:] = 1.0 - 2.0 * bits
    parity = 1.0 - 2.0 * (bits.sum(axis=1) & 1)
    col_sums = signs @ a
    terms = parity * np.prod(col_sums, axis=1)
    return complex(terms.sum() / (1 << (n - 1)))


def gram_probs_numpy(u, in_modes, overlaps, configs, perms, t_fact):
    """Output-configuration probabilities under partial distinguishability.

    For each output assignment d (a row of ``configs``):

        P(d) = (1 / prod_j t_j!) * sum_{sigma, tau} prod_k
               S[sigma(k), tau(k)] * U[d_k, a_sigma(k)] * conj(U[d_k, a_tau(k)])

    where a = ``in_modes`` and S = ``overlaps``. Valid whenever photons
    sharing an input mode are mutually distinguishable (zero overlap),
    which keeps the input normalization at one.
    """
    n_cfg, nph = configs.shape
    if nph == 0:
        return np.ones(n_cfg)
    sp = overlaps[perms[:, None, :], perms[None, :, :]]
    cols = in_modes[perms]
    out = np.empty(n_cfg)
    for c in range(n_cfg):
        v = u[configs[c][None, :], cols]
        m = sp * (v[:, None, :] * v.conj()[None, :, :])
        out[c] = m.prod(axis=2).sum().real / t_fact[c]
    return out


if USING_NUMBA:

    @njit(cache=True)
    def _permanent_numba(a):
        n = a.shape[0]
        if n == 0:
            return 1.0 + 0.0j
        sums = np.zeros(n, dtype=np.complex128)
        for j in range(n):
            acc = 0.0 + 0.0j
            for i in range(n):
                acc += a[i, j]
            sums[j] = acc
        total = sums[0]
        for j in range(1, n):
            total *= sums[j]
        delta = np.ones(n)
        g_prev = 0
        for s in range(1, 1 << (n - 1)):
            g = s ^ (s >> 1)
            bit = g ^ g_prev
            i = 0
            while not (bit >> i) & 1:
                i += 1
            i += 1
            d = -2.0 * delta[i]
            delta[i] = -delta[i]
            for j in range(n):
                sums[j] += d * a[i, j]
            p = sums[0]
            for j in range(1, n):
                p *= sums[j]
            # one Gray-code bit flips per step, so the term parity alternates
            if s & 1:
                total -= p
            else:
                total += p
            g_prev = g
        return total / (1 << (n - 1))

    @njit(cache=True)
    def _gram_probs_numba(u, in_modes, overlaps, configs, perms, t_fact):
        n_cfg = configs.shape[0]
        nph = configs.shape[1]
        n_perm = perms.shape[0]
        out = np.empty(n_cfg)
        if nph == 0:
            for c in range(n_cfg):
                out[c] = 1.0
            return out
        v = np.empty((n_perm, nph), dtype=np.complex128)
        active = np.empty(n_perm, dtype=np.int64)
        for c in range(n_cfg):
            n_act = 0
            for p in range(n_perm):
                ok = True
                for k in range(nph):
                    val = u[configs[c, k], in_modes[perms[p, k]]]
                    if val.real == 0.0 and val.imag == 0.0:
                        ok = False
                        break
                    v[p, k] = val
                if ok:
                    active[n_act] = p
                    n_act += 1
            total = 0.0
            for ia in range(n_act):
                p = active[ia]
                acc = 1.0
                for k in range(nph):
                    acc *= v[p, k].real ** 2 + v[p, k].imag ** 2
                total += acc
                # off-diagonal (sigma, tau) pairs come in conjugate pairs
                for ib in range(ia + 1, n_act):
                    q = active[ib]
                    term = 1.0 + 0.0j
                    for k in range(nph):
                        term *= (
                            overlaps[perms[p, k], perms[q, k]]
                            * v[p, k]
                            * np.conj(v[q, k])
                        )
                    total += 2.0 * term.real
            out[c] = total / t_fact[c]
        return out

    permanent_kernel = _permanent_numba
    gram_probs_kernel = _gram_probs_numba
else:
    permanent_kernel = permanent_numpy
    gram_probs_kernel = gram_probs_numpy
