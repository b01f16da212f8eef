"""Numeric inner loops with a numba path and a pure-numpy path.

Every kernel exists twice: ``<name>_numba`` (a plain loop, compiled with
``njit`` when numba is available) and ``<name>_numpy`` (vectorised).  The
public name is bound to the numba variant unless ``POLMULT_DISABLE_JIT`` is
set or numba is missing.  Both variants are importable for testing and for
``benchmarks/bench_kernels.py``.
"""

import math

import numpy as np

from ._jit import HAS_NUMBA, njit

__all__ = [
    "HAS_NUMBA",
    "wigner_d_accumulate",
    "legendre_table",
    "assoc_legendre_table",
    "warmup",
]

_INV_SQRT_4PI = 1.0 / math.sqrt(4.0 * math.pi)


# --------------------------------------------------------------------------- #
# Wigner small-d from a flattened factorial-sum term list
# --------------------------------------------------------------------------- #


def _wigner_d_accumulate_loop(rows, cols, coef, pow_c, pow_s, c, s, n):
    out = np.zeros((n, n))
    for t in range(coef.shape[0]):
        out[rows[t], cols[t]] += coef[t] * c ** pow_c[t] * s ** pow_s[t]
    return out


def wigner_d_accumulate_numpy(rows, cols, coef, pow_c, pow_s, c, s, n):
    """Sum ``coef * c**pow_c * s**pow_s`` into an ``n x n`` matrix at (rows, cols)."""
    vals = coef * np.power(c, pow_c) * np.power(s, pow_s)
    flat = np.bincount(rows * n + cols, weights=vals, minlength=n * n)
    return flat.reshape(n, n)


# --------------------------------------------------------------------------- #
# Legendre polynomials P_l(x), l = 0..lmax
# --------------------------------------------------------------------------- #


def _legendre_table_loop(lmax, x):
    npts = x.shape[0]
    out = np.empty((lmax + 1, npts))
    for i in range(npts):
        xi = x[i]
        p_prev = 1.0
        out[0, i] = 1.0
        if lmax >= 1:
            p = xi
            out[1, i] = p
            for ell in range(2, lmax + 1):
                p_next = ((2 * ell - 1) * xi * p - (ell - 1) * p_prev) / ell
                p_prev = p
                p = p_next
                out[ell, i] = p
    return out


def legendre_table_numpy(lmax, x):
    """Rows ``P_0(x) .. P_lmax(x)`` from Bonnet's three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((lmax + 1, x.shape[0]))
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for ell in range(2, lmax + 1):
        out[ell] = ((2 * ell - 1) * x * out[ell - 1] - (ell - 1) * out[ell - 2]) / ell
    return out


# --------------------------------------------------------------------------- #
# Orthonormalised associated Legendre functions, Condon-Shortley phase
# --------------------------------------------------------------------------- #
# Pbar[l, m, i] is defined so that Y_lm(theta, phi) = Pbar[l, m] * exp(i m phi)
# for m >= 0, with x = cos(theta).


def _assoc_legendre_table_loop(lmax, x):
    npts = x.shape[0]
    out = np.zeros((lmax + 1, lmax + 1, npts))
    for i in range(npts):
        xi = x[i]
        sint = math.sqrt(max(0.0, 1.0 - xi * xi))
        pmm = _INV_SQRT_4PI
        for m in range(lmax + 1):
            if m > 0:
                pmm = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sint * pmm
            out[m, m, i] = pmm
            if m + 1 <= lmax:
                out[m + 1, m, i] = math.sqrt(2.0 * m + 3.0) * xi * pmm
            for ell in range(m + 2, lmax + 1):
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
                out[ell, m, i] = a * (xi * out[ell - 1, m, i] - b * out[ell - 2, m, i])
    return out


def assoc_legendre_table_numpy(lmax, x):
    """Normalised ``Pbar[l, m, :]`` for ``0 <= m <= l <= lmax`` (zeros elsewhere)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((lmax + 1, lmax + 1, x.shape[0]))
    sint = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.full(x.shape[0], _INV_SQRT_4PI)
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sint * pmm
        out[m, m] = pmm
        if m + 1 <= lmax:
            out[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * pmm
        for ell in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            b = math.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
            out[ell, m] = a * (x * out[ell - 1, m] - b * out[ell - 2, m])
    return out


if HAS_NUMBA:
    wigner_d_accumulate_numba = njit(cache=True)(_wigner_d_accumulate_loop)
    legendre_table_numba = njit(cache=True)(_legendre_table_loop)
    assoc_legendre_table_numba = njit(cache=True)(_assoc_legendre_table_loop)

    wigner_d_accumulate = wigner_d_accumulate_numba
    legendre_table = legendre_table_numba
    assoc_legendre_table = assoc_legendre_table_numba
else:
    wigner_d_accumulate_numba = _wigner_d_accumulate_loop
    legendre_table_numba = _legendre_table_loop
    assoc_legendre_table_numba = _assoc_legendre_table_loop

    wigner_d_accumulate = wigner_d_accumulate_numpy
    legendre_table = legendre_table_numpy
    assoc_legendre_table = assoc_legendre_table_numpy


def warmup():
    """Compile (or load from cache) every kernel on a tiny input."""
    x = np.array([0.5])
    rows = np.zeros(1, dtype=np.int64)
    legendre_table(2, x)
    assoc_legendre_table(2, x)
    wigner_d_accumulate(rows, rows, np.ones(1), rows, rows, 0.5, 0.5, 1)
