"""SU(2) special functions: spins, Clebsch-Gordan coefficients, Wigner
rotation matrices, spherical harmonics and Legendre polynomials.

Conventions
-----------
* Inside a spin-``S`` block the basis is ordered ``m = S, S-1, ..., -S``;
  index ``i`` corresponds to ``m = S - i``.
* Clebsch-Gordan coefficients follow Condon-Shortley.
* The two-angle displacement is ``D(theta, phi) = exp(i theta S2) exp(i phi S3)``.
  With it, ``D^dag S3 D = n . S`` for ``n = (sin t cos p, sin t sin p, cos t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import kernels

__all__ = [
    "Spin",
    "MultipoleIndex",
    "SphericalDirection",
    "SqrtRational",
    "clebsch_gordan",
    "clebsch_gordan_exact",
    "stretched_cg",
    "spin_matrices",
    "wigner_small_d",
    "wigner_small_d_matrix",
    "wigner_D",
    "wigner_D_matrix",
    "spherical_harmonic",
    "spherical_harmonics_table",
    "legendre_p",
    "tensor_band_table",
]

MAX_TWO_S = 200
# Factorial-sum Wigner d loses ~1e-12 by 2j = 40 (alternating cancellation);
# above this, exp(i theta S2) is built from the eigensystem of S2 instead.
WIGNER_SUM_MAX_TWO_J = 24
# Tensor band tables come from exact CG arithmetic up to this size.
EXACT_TABLE_MAX_TWO_S = 20


def _twice(x, what="value") -> int:
    """Return ``2*x`` as an int, rejecting values that are not half-integers."""
    if isinstance(x, Spin):
        return x.two_s
    if isinstance(x, (int, np.integer)):
        return 2 * int(x)
    if isinstance(x, Rational):
        y = 2 * Fraction(x)
        if y.denominator != 1:
            raise ValueError(f"{what}={x} is not an integer or half-integer")
        return int(y)
    y = 2.0 * float(x)
    r = round(y)
    if abs(y - r) > 1e-9:
        raise ValueError(f"{what}={x} is not an integer or half-integer")
    return int(r)


@dataclass(frozen=True, order=True)
class Spin:
    """A spin ``S`` stored exactly as ``two_s = 2S``."""

    two_s: int

    def __post_init__(self):
        if isinstance(self.two_s, bool) or not isinstance(self.two_s, (int, np.integer)):
            raise TypeError("two_s must be an integer")
        object.__setattr__(self, "two_s", int(self.two_s))
        if self.two_s < 0:
            raise ValueError("two_s must be non-negative")
        if self.two_s > MAX_TWO_S:
            raise ValueError(f"spins beyond 2S = {MAX_TWO_S} are not supported")

    @classmethod
    def of(cls, s) -> "Spin":
        """Build from a Spin, an int, a Fraction or a float such as 1.5."""
        if isinstance(s, Spin):
            return s
        return cls(_twice(s, "spin"))

    @property
    def s(self) -> float:
        return self.two_s / 2

    @property
    def exact(self) -> Fraction:
        return Fraction(self.two_s, 2)

    @property
    def dim(self) -> int:
        return self.two_s + 1

    def m2_values(self) -> np.ndarray:
        """Doubled magnetic numbers in block order (descending)."""
        return np.arange(self.two_s, -self.two_s - 1, -2)

    def m_values(self) -> np.ndarray:
        return self.m2_values() / 2.0

    def __str__(self):
        return str(self.two_s // 2) if self.two_s % 2 == 0 else f"{self.two_s}/2"


@dataclass(frozen=True)
class MultipoleIndex:
    k: int
    q: int

    def __post_init__(self):
        if self.k < 0 or abs(self.q) > self.k:
            raise ValueError(f"invalid multipole index K={self.k}, q={self.q}")

    def fits(self, spin: Spin) -> bool:
        return self.k <= spin.two_s


@dataclass(frozen=True)
class SphericalDirection:
    """A point on the unit sphere; ``phi`` is wrapped into [0, 2pi)."""

    theta: float
    phi: float

    def __post_init__(self):
        theta = float(self.theta)
        if not (-1e-12 <= theta <= math.pi + 1e-12):
            raise ValueError(f"theta={theta} outside [0, pi]")
        object.__setattr__(self, "theta", min(max(theta, 0.0), math.pi))
        object.__setattr__(self, "phi", float(self.phi) % (2.0 * math.pi))

    @classmethod
    def from_vector(cls, v) -> "SphericalDirection":
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("zero vector has no direction")
        x, y, z = v / norm
        return cls(math.acos(max(-1.0, min(1.0, z))), math.atan2(y, x))

    @property
    def vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    def line_angle(self, other: "SphericalDirection") -> float:
        """Angle in [0, pi/2] between the lines through the two directions."""
        c = abs(float(np.dot(self.vector, other.vector)))
        return math.acos(min(1.0, c))


# --------------------------------------------------------------------------- #
# Exact Clebsch-Gordan coefficients
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SqrtRational:
    """Exact number ``coef * sqrt(radicand)`` with rational parts."""

    coef: Fraction
    radicand: Fraction = Fraction(1)

    def __post_init__(self):
        if self.radicand < 0:
            raise ValueError("negative radicand")

    @property
    def sign(self) -> int:
        if self.coef == 0 or self.radicand == 0:
            return 0
        return 1 if self.coef > 0 else -1

    @property
    def square(self) -> Fraction:
        return self.coef * self.coef * self.radicand

    def __float__(self):
        if self.sign == 0:
            return 0.0
        return float(self.coef) * math.sqrt(float(self.radicand))

    def __neg__(self):
        return SqrtRational(-self.coef, self.radicand)

    def __mul__(self, other):
        if isinstance(other, SqrtRational):
            return SqrtRational(self.coef * other.coef, self.radicand * other.radicand)
        return SqrtRational(self.coef * Fraction(other), self.radicand)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, SqrtRational):
            return NotImplemented
        if other.sign == 0:
            return self
        if self.sign == 0:
            return other
        if other.radicand != self.radicand:
            raise ValueError("cannot add square roots with different radicands exactly")
        return SqrtRational(self.coef + other.coef, self.radicand)

    def __eq__(self, other):
        if isinstance(other, SqrtRational):
            return self.sign == other.sign and self.square == other.square
        return NotImplemented

    def __hash__(self):
        return hash((self.sign, self.square))


def _square_part(n: int) -> tuple[int, int]:
    """Split ``n = r**2 * rest`` only when ``n`` is itself a perfect square."""
    r = math.isqrt(n)
    if r * r == n:
        return r, 1
    return 1, n


@lru_cache(maxsize=None)
def _cg_doubled(tj1, tm1, tj2, tm2, tj, tm) -> SqrtRational:
    if tm1 + tm2 != tm:
        return SqrtRational(Fraction(0))
    if tj < abs(tj1 - tj2) or tj > tj1 + tj2:
        return SqrtRational(Fraction(0))
    f = math.factorial
    a = (tj1 + tj2 - tj) // 2
    b = (tj1 - tm1) // 2
    c = (tj2 + tm2) // 2
    d = (tj - tj2 + tm1) // 2
    e = (tj - tj1 - tm2) // 2
    total = Fraction(0)
    for k in range(max(0, -d, -e), min(a, b, c) + 1):
        den = f(k) * f(a - k) * f(b - k) * f(c - k) * f(d + k) * f(e + k)
        total += Fraction(-1 if k % 2 else 1, den)
    if total == 0:
        return SqrtRational(Fraction(0))
    # m-independent triangle part stays under the root; the m-part is folded
    # into the coefficient when it is a perfect square so that sums over m
    # (f-coefficients) share one radicand.
    triangle = Fraction(
        (tj + 1) * f(a) * f((tj1 - tj2 + tj) // 2) * f((tj2 - tj1 + tj) // 2),
        f((tj1 + tj2 + tj) // 2 + 1),
    )
    mpart = (
        f((tj1 + tm1) // 2) * f((tj1 - tm1) // 2) * f((tj2 + tm2) // 2)
        * f((tj2 - tm2) // 2) * f((tj + tm) // 2) * f((tj - tm) // 2)
    )
    root, rest = _square_part(mpart)
    return SqrtRational(total * root, triangle * rest)


def _check_jm(tj: int, tm: int, name: str):
    if tj < 0:
        raise ValueError(f"{name}: negative spin")
    if (tj - tm) % 2:
        raise ValueError(f"{name}: j and m must both be integer or both half-integer")
    if abs(tm) > tj:
        raise ValueError(f"{name}: |m| exceeds j")


def clebsch_gordan_exact(j1, m1, j2, m2, j, m) -> SqrtRational:
    """Exact ``<j1 m1; j2 m2 | j m>`` as ``coef * sqrt(radicand)``.

    Spins may be :class:`Spin` objects or numbers (ints, Fractions, floats
    like 0.5); magnetic numbers are numbers.  Returns zero when
    ``m != m1 + m2`` or the triangle condition fails.

    Raises
    ------
    ValueError
        On parity mismatch between a spin and its projection, ``|m| > j``,
        or a half-odd total ``j1 + j2 + j``.
    """
    tj1, tj2, tj = _twice(j1, "j1"), _twice(j2, "j2"), _twice(j, "j")
    tm1, tm2, tm = _twice(m1, "m1"), _twice(m2, "m2"), _twice(m, "m")
    _check_jm(tj1, tm1, "(j1, m1)")
    _check_jm(tj2, tm2, "(j2, m2)")
    _check_jm(tj, tm, "(j, m)")
    if (tj1 + tj2 + tj) % 2:
        raise ValueError("j1 + j2 + j must be an integer")
    return _cg_doubled(tj1, tm1, tj2, tm2, tj, tm)


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """Float projection of :func:`clebsch_gordan_exact`."""
    return float(clebsch_gordan_exact(j1, m1, j2, m2, j, m))


def stretched_cg(spin, k: int) -> SqrtRational:
    """Closed form of ``C^{SS}_{SS,K0} = sqrt(2S+1) (2S)! / sqrt((2S-K)! (2S+1+K)!)``."""
    n = Spin.of(spin).two_s
    if not 0 <= k <= n:
        raise ValueError(f"K={k} outside [0, 2S={n}]")
    f = math.factorial
    return SqrtRational(Fraction(1), Fraction((n + 1) * f(n) ** 2, f(n - k) * f(n + 1 + k)))


# --------------------------------------------------------------------------- #
# Spin matrices and rotations
# --------------------------------------------------------------------------- #


@lru_cache(maxsize=256)
def _spin_matrices(two_s: int):
    s = two_s / 2
    m = s - np.arange(two_s + 1)
    splus = np.zeros((two_s + 1, two_s + 1))
    # <m+1| S+ |m> = sqrt((S - m)(S + m + 1)); row index of m+1 is i-1
    for i in range(1, two_s + 1):
        splus[i - 1, i] = math.sqrt((s - m[i]) * (s + m[i] + 1))
    s1 = (splus + splus.T) / 2 + 0j
    s2 = (splus - splus.T) / 2j
    s3 = np.diag(m) + 0j
    for a in (s1, s2, s3):
        a.setflags(write=False)
    return s1, s2, s3


def spin_matrices(spin) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(S1, S2, S3)`` for one block, in the descending-m basis (read-only)."""
    return _spin_matrices(Spin.of(spin).two_s)


@lru_cache(maxsize=64)
def _d_terms(two_j: int):
    """Flattened factorial-sum terms of ``d^j_{m'm}(beta) = <m'|exp(-i beta Jy)|m>``."""
    f = math.factorial
    rows, cols, coef, pc, ps = [], [], [], [], []
    for a in range(two_j + 1):  # m' = j - a
        for b in range(two_j + 1):  # m = j - b
            d = b - a  # m' - m
            jpm = two_j - b
            num = f(two_j - a) * f(a) * f(two_j - b) * f(b)
            for k in range(max(0, -d), min(jpm, a) + 1):
                den = f(jpm - k) * f(k) * f(d + k) * f(a - k)
                rows.append(a)
                cols.append(b)
                sign = -1.0 if (d + k) % 2 else 1.0
                coef.append(sign * math.sqrt(float(Fraction(num, den * den))))
                pc.append(two_j - d - 2 * k)
                ps.append(d + 2 * k)
    return (
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array(coef),
        np.array(pc, dtype=np.int64),
        np.array(ps, dtype=np.int64),
    )


@lru_cache(maxsize=64)
def _s2_eigensystem(two_j: int):
    # i*S2 is real antisymmetric, so S2 is Hermitian with a real-symmetric
    # square; eigh on the Hermitian matrix is well conditioned at any size.
    _, s2, _ = _spin_matrices(two_j)
    return np.linalg.eigh(s2)


def wigner_small_d_matrix(spin, theta: float) -> np.ndarray:
    """Real matrix ``<m| exp(i theta S2) |m'>`` in the descending-m basis."""
    two_j = Spin.of(spin).two_s
    n = two_j + 1
    if two_j <= WIGNER_SUM_MAX_TWO_J:
        rows, cols, coef, pc, ps = _d_terms(two_j)
        # exp(i theta S2) = d(beta = -theta)
        return kernels.wigner_d_accumulate(
            rows, cols, coef, pc, ps, math.cos(theta / 2), -math.sin(theta / 2), n
        )
    w, v = _s2_eigensystem(two_j)
    return ((v * np.exp(1j * theta * w)) @ v.conj().T).real


def _m_index(two_j: int, m, name="m") -> int:
    tm = _twice(m, name)
    _check_jm(two_j, tm, name)
    return (two_j - tm) // 2


def wigner_small_d(j, m, mp, theta: float) -> float:
    """Element ``<j m| exp(i theta S2) |j mp>``."""
    two_j = Spin.of(j).two_s
    return float(wigner_small_d_matrix(Spin(two_j), theta)[_m_index(two_j, m), _m_index(two_j, mp, "mp")])


def wigner_D_matrix(spin, theta: float, phi: float) -> np.ndarray:
    """Unitary ``<m| exp(i theta S2) exp(i phi S3) |m'>`` in the descending-m basis."""
    sp = Spin.of(spin)
    d = wigner_small_d_matrix(sp, theta)
    return d * np.exp(1j * phi * sp.m_values())[None, :]


def wigner_D(j, m, mp, theta: float, phi: float) -> complex:
    two_j = Spin.of(j).two_s
    return complex(wigner_D_matrix(Spin(two_j), theta, phi)[_m_index(two_j, m), _m_index(two_j, mp, "mp")])


# --------------------------------------------------------------------------- #
# Spherical harmonics and Legendre polynomials
# --------------------------------------------------------------------------- #


def spherical_harmonics_table(kmax: int, theta, phi) -> np.ndarray:
    """All ``Y_kq`` for ``k <= kmax`` at the given points.

    Returns a complex array of shape ``(kmax + 1, 2*kmax + 1, npts)`` indexed
    ``[k, q + kmax, point]``; entries with ``|q| > k`` are zero.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta, phi = np.broadcast_arrays(theta, phi)
    theta, phi = theta.ravel(), phi.ravel()
    pbar = kernels.assoc_legendre_table(kmax, np.ascontiguousarray(np.cos(theta)))
    out = np.zeros((kmax + 1, 2 * kmax + 1, theta.size), dtype=complex)
    for q in range(kmax + 1):
        phase = np.exp(1j * q * phi)
        pos = pbar[:, q, :] * phase
        out[:, kmax + q, :] = pos
        if q:
            out[:, kmax - q, :] = (-1) ** q * np.conj(pos)
    return out


def spherical_harmonic(k: int, q: int, theta, phi):
    """Orthonormal ``Y_kq(theta, phi)`` with the Condon-Shortley phase."""
    if k < 0 or abs(q) > k:
        raise ValueError(f"invalid (k, q) = ({k}, {q})")
    scalar = np.ndim(theta) == 0 and np.ndim(phi) == 0
    vals = spherical_harmonics_table(k, theta, phi)[k, k + q]
    if scalar:
        return complex(vals[0])
    return vals.reshape(np.broadcast(np.asarray(theta), np.asarray(phi)).shape)


def legendre_p(ell: int, x):
    """Legendre polynomial ``P_ell(x)``."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    vals = kernels.legendre_table(ell, np.ascontiguousarray(xa.ravel()))[ell]
    if np.ndim(x) == 0:
        return float(vals[0])
    return vals.reshape(xa.shape)


# --------------------------------------------------------------------------- #
# Tensor-operator band tables
# --------------------------------------------------------------------------- #


def _band_exact(two_s: int) -> np.ndarray:
    n = two_s + 1
    table = np.zeros((n, 2 * n - 1, n))
    for k in range(n):
        scale = math.sqrt((2 * k + 1) / n)
        for q in range(-k, k + 1):
            for i in range(n):
                row = i - q
                if not 0 <= row < n:
                    continue
                tm = two_s - 2 * i
                table[k, q + two_s, i] = scale * float(_cg_doubled(two_s, tm, 2 * k, 2 * q, two_s, tm + 2 * q))
    return table


def _band_eigen(two_s: int) -> np.ndarray:
    # For fixed q >= 0 the band vectors of T_Kq (K = q..2S) are the
    # eigenvectors of the adjoint Casimir X -> sum_i [S_i, [S_i, X]] restricted
    # to that band (eigenvalue K(K+1)).  The sign is fixed by the element at
    # m = -S, which the Racah sum reduces to a single term of sign (-1)^K.
    n = two_s + 1
    s = two_s / 2
    table = np.zeros((n, 2 * n - 1, n))

    def raise_el(a):  # <a+1| S+ |a>
        return np.sqrt(np.clip((s - a) * (s + a + 1), 0.0, None))

    for q in range(n):
        size = n - q
        m = -s + np.arange(size)  # ascending m, columns of the band
        diag = 2 * s * (s + 1) - 2 * (m + q) * m
        off = -(raise_el(m + q) * raise_el(m))[:-1]
        if size == 1:
            vecs = np.ones((1, 1))
        else:
            _, vecs = eigh_tridiagonal(diag, off)
        k = q + np.arange(size)
        flip = np.sign(vecs[0]) != (-1.0) ** k
        vecs[:, flip] *= -1.0
        # ascending m index j -> block column i = 2S - j
        table[q:, q + two_s, two_s - np.arange(size)] = vecs.T
        if q:
            # T_{K,-q}[i+q, i] = (-1)^q T_{K,q}[i, i+q]
            table[q:, two_s - q, : n - q] = (-1) ** q * table[q:, q + two_s, q:]
    return table


@lru_cache(maxsize=24)
def _tensor_band_table(two_s: int) -> np.ndarray:
    table = _band_exact(two_s) if two_s <= EXACT_TABLE_MAX_TWO_S else _band_eigen(two_s)
    table.setflags(write=False)
    return table


def tensor_band_table(spin, method: str = "auto") -> np.ndarray:
    """Nonzero band of every tensor operator of one block.

    ``table[K, q + 2S, i]`` holds ``T_Kq[i - q, i]`` (descending-m indices),
    i.e. ``sqrt((2K+1)/(2S+1)) C^{S, m+q}_{S m, K q}`` with ``m = S - i``.
    ``method`` is ``"auto"``, ``"exact"`` (rational CG) or ``"eigen"``.
    """
    two_s = Spin.of(spin).two_s
    if method == "auto":
        return _tensor_band_table(two_s)
    if method == "exact":
        return _band_exact(two_s)
    if method == "eigen":
        return _band_eigen(two_s)
    raise ValueError(f"unknown method {method!r}")
