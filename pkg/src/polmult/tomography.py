"""Stokes measurements, directional moments and recursive multipole tomography.

A measurement of ``S_n = n . S`` along a direction ``n`` yields outcomes ``m``
with probabilities ``p(m) = <m| D rho D^dag |m>`` where
``D = exp(i theta S2) exp(i phi S3)``.  Its moments

    mu_l(n) = Tr[S_n^l rho]
            = sqrt(4 pi / (2S+1)) sum_{K <= min(l, 2S)} f_Kl sum_q rho_Kq Y_Kq(n)

are inverted order by order: order ``L`` needs ``2L+1`` directions and the
multipoles of all lower orders of the same parity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import optimize

from .kernels import legendre_table
from .angular import (
    SphericalDirection,
    SqrtRational,
    Spin,
    clebsch_gordan_exact,
    legendre_p,
    spherical_harmonics_table,
    spin_matrices,
    wigner_D_matrix,
)
from .multipoles import MultipoleTable
from .states import PolarizationSector

__all__ = [
    "InversionError",
    "StokesMatrices",
    "DirectionSet",
    "MomentRecord",
    "CountRecord",
    "BlockMoments",
    "OrderDiagnostic",
    "Reconstruction",
    "stokes_matrices",
    "outcome_probabilities",
    "moment_direct",
    "f_coeff",
    "f_coeff_exact",
    "moment_from_multipoles",
    "canonical_directions",
    "gram_matrix",
    "invert_dipole",
    "invert_order",
    "simulate_counts",
    "simulate_plan",
    "estimate_moments",
    "reconstruct_exact",
    "reconstruct_from_counts",
    "reconstruct_sampled",
]

CONDITION_LIMIT = 1e8
DIRECTION_SEED = 20130417
_SAME_DIRECTION_TOL = 1e-9


class InversionError(RuntimeError):
    """Singular or ill-conditioned direction set; ``directions`` names the culprits."""

    def __init__(self, message: str, directions=()):
        super().__init__(message)
        self.directions = tuple(directions)


# --------------------------------------------------------------------------- #
# Operators and records
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class StokesMatrices:
    spin: Spin
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray

    def along(self, direction: SphericalDirection) -> np.ndarray:
        """``S_n = n1 S1 + n2 S2 + n3 S3``."""
        n = direction.vector
        return n[0] * self.s1 + n[1] * self.s2 + n[2] * self.s3


def stokes_matrices(spin) -> StokesMatrices:
    sp = Spin.of(spin)
    s1, s2, s3 = spin_matrices(sp)
    s0 = sp.s * np.eye(sp.dim, dtype=complex)
    s0.setflags(write=False)
    return StokesMatrices(sp, s0, s1, s2, s3)


@dataclass(frozen=True)
class DirectionSet:
    """Measurement directions treated as lines; the stored vector fixes odd-moment signs."""

    directions: tuple
    label: str = ""

    def __post_init__(self):
        dirs = tuple(d if isinstance(d, SphericalDirection) else SphericalDirection(*d) for d in self.directions)
        if not dirs:
            raise ValueError("a direction set needs at least one direction")
        for i in range(len(dirs)):
            for j in range(i):
                if dirs[i].line_angle(dirs[j]) < 1e-9:
                    raise ValueError(f"directions {j} and {i} lie on the same line")
        object.__setattr__(self, "directions", dirs)

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    def __getitem__(self, i):
        return self.directions[i]

    @classmethod
    def from_vectors(cls, vectors, label: str = "") -> "DirectionSet":
        return cls(tuple(SphericalDirection.from_vector(v) for v in vectors), label)

    @property
    def vectors(self) -> np.ndarray:
        return np.array([d.vector for d in self.directions])

    def min_line_angle(self) -> float:
        if len(self) < 2:
            return math.pi / 2
        c = np.abs(self.vectors @ self.vectors.T)
        np.fill_diagonal(c, 0.0)
        return math.acos(min(1.0, float(c.max())))

    def to_dict(self) -> dict:
        return {"label": self.label, "directions": [{"theta": d.theta, "phi": d.phi} for d in self.directions]}

    @classmethod
    def from_dict(cls, data: dict) -> "DirectionSet":
        return cls(tuple(SphericalDirection(d["theta"], d["phi"]) for d in data["directions"]), data.get("label", ""))


@dataclass(frozen=True)
class MomentRecord:
    direction: SphericalDirection
    ell: int
    value: float
    stderr: float = 0.0
    shots: int = 0

    def __post_init__(self):
        if self.shots < 0 or self.stderr < 0:
            raise ValueError("shot count and standard error must be non-negative")


@dataclass(frozen=True)
class CountRecord:
    """Event counts per outcome ``m2 = 2m`` of one block along one direction."""

    direction: SphericalDirection
    two_s: int
    counts: dict

    def __post_init__(self):
        sp = Spin(self.two_s)
        allowed = set(int(x) for x in sp.m2_values())
        counts = {}
        for m2, c in self.counts.items():
            m2 = int(m2)
            if m2 not in allowed:
                raise ValueError(f"outcome m2={m2} impossible for two_s={self.two_s}")
            if int(c) != c or c < 0:
                raise ValueError("counts must be non-negative integers")
            counts[m2] = int(c)
        object.__setattr__(self, "counts", dict(sorted(counts.items(), reverse=True)))

    @property
    def total(self) -> int:
        return sum(self.counts.values())


# --------------------------------------------------------------------------- #
# Moments
# --------------------------------------------------------------------------- #


def outcome_probabilities(matrix: np.ndarray, spin, direction: SphericalDirection) -> np.ndarray:
    """``p(m)`` for ``m = S..-S`` when measuring ``S_n`` on one block."""
    sp = Spin.of(spin)
    d = wigner_D_matrix(sp, direction.theta, direction.phi)
    p = np.real(np.einsum("ij,jk,ik->i", d, np.asarray(matrix), d.conj()))
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class BlockMoments:
    per_block: dict
    aggregate: float


def moment_direct(sector: PolarizationSector, direction: SphericalDirection, ell: int) -> BlockMoments:
    """``Tr[S_n^l rho^(S)]`` per block by explicit matrix powers, and ``sum_S P_S mu^(S)``."""
    if ell < 0:
        raise ValueError("moment order must be non-negative")
    per = {}
    for sp, _, blk in sector:
        op = np.linalg.matrix_power(stokes_matrices(sp).along(direction), ell)
        per[sp.two_s] = float(np.real(np.trace(op @ blk.matrix)))
    agg = sum(sector.weights[k] * v for k, v in per.items())
    return BlockMoments(per, agg)


@lru_cache(maxsize=None)
def _f_exact(two_s: int, k: int, ell: int) -> SqrtRational:
    total = SqrtRational(Fraction(0))
    for m2 in range(two_s, -two_s - 1, -2):
        m = Fraction(m2, 2)
        if ell and m == 0:
            continue
        total = total + clebsch_gordan_exact(Fraction(two_s, 2), m, k, 0, Fraction(two_s, 2), m) * (m**ell)
    return total


def f_coeff_exact(spin, k: int, ell: int) -> SqrtRational:
    """``f_Kl = sum_m m^l C^{Sm}_{Sm,K0}`` in exact arithmetic."""
    sp = Spin.of(spin)
    if not 0 <= k <= sp.two_s:
        raise ValueError(f"K={k} outside [0, 2S={sp.two_s}]")
    if k > ell:
        raise ValueError(f"K={k} exceeds the moment order l={ell}")
    return _f_exact(sp.two_s, k, ell)


def f_coeff(spin, k: int, ell: int) -> float:
    return float(f_coeff_exact(spin, k, ell))


def moment_from_multipoles(table: MultipoleTable, spin, direction: SphericalDirection, ell: int) -> float:
    """``mu_l`` of one block rebuilt from its multipoles."""
    sp = Spin.of(spin)
    coeffs = table.coeffs[sp.two_s]
    kmax = min(ell, sp.two_s)
    y = spherical_harmonics_table(kmax, direction.theta, direction.phi)[:, :, 0]
    total = 0j
    for k in range(kmax + 1):
        f = f_coeff(sp, k, ell)
        if f == 0.0:
            continue
        rho = coeffs[k, sp.two_s - k : sp.two_s + k + 1]
        total += f * np.dot(rho, y[k, kmax - k : kmax + k + 1])
    return float(np.real(total) * math.sqrt(4 * math.pi / sp.dim))


# --------------------------------------------------------------------------- #
# Direction sets
# --------------------------------------------------------------------------- #


def gram_matrix(order: int, directions: DirectionSet) -> np.ndarray:
    """``P_L[i, j] = P_L(n_i . n_j)``."""
    v = directions.vectors
    return legendre_p(order, np.clip(v @ v.T, -1.0, 1.0))


def _icosahedral_five() -> np.ndarray:
    g = 1.0 + math.sqrt(5.0)
    return np.array([[0.0, 2.0, g], [0.0, -2.0, g], [2.0, g, 0.0], [-2.0, g, 0.0], [g, 0.0, 2.0]])


def _spread_lines(order: int, seed: int, restarts: int = 8, barrier: float = 0.05) -> np.ndarray:
    """``2L+1`` unit vectors whose lines are pushed apart.

    The objective is a soft-max of ``(n_i . n_j)^2`` (the smallest line angle)
    minus ``barrier * log det P_L / (2L+1)``.  The log-det term matters: the
    most symmetric packings can make ``P_L`` singular (for seven lines the
    max-min-angle optimum, axes plus cube diagonals, gives ``P_3`` rank 4).
    """
    n = 2 * order + 1
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    # P_L'(x) = sum over k = L-1, L-3, ... of (2k+1) P_k(x)
    dcoef = np.zeros(order + 1)
    dcoef[order - 1 :: -2] = 2 * np.arange(order - 1, -1, -2) + 1

    def unpack(x):
        v = x.reshape(n, 3)
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        return v / norm, norm

    def energy(x, beta):
        u, norm = unpack(x)
        g = np.clip(u @ u.T, -1.0, 1.0)
        c2 = g[iu] ** 2
        top = c2.max()
        w = np.exp(beta * (c2 - top))
        z = w.sum()
        wm = np.zeros((n, n))
        wm[iu] = w / z
        wm = wm + wm.T
        grad_u = 2.0 * (wm * g) @ u
        table = legendre_table(order, g.ravel())
        gram = table[order].reshape(n, n)
        sign, logdet = np.linalg.slogdet(gram)
        if sign <= 0:
            return 1e6, np.zeros_like(x)
        dgram = (dcoef @ table).reshape(n, n)
        np.fill_diagonal(dgram, 0.0)
        grad_u -= barrier / n * 2.0 * (np.linalg.inv(gram) * dgram) @ u
        grad_v = (grad_u - np.sum(grad_u * u, axis=1, keepdims=True) * u) / norm
        return top + math.log(z) / beta - barrier / n * logdet, grad_v.ravel()

    best, best_key = None, None
    for _ in range(restarts):
        x = rng.standard_normal(3 * n)
        for beta in (10.0, 100.0, 1000.0, 10000.0):
            x = optimize.minimize(energy, x, args=(beta,), jac=True, method="L-BFGS-B").x
        u, _ = unpack(x)
        c = np.abs(u @ u.T)
        np.fill_diagonal(c, 0.0)
        angle = math.acos(min(1.0, float(c.max())))
        cond = float(np.linalg.cond(legendre_p(order, np.clip(u @ u.T, -1.0, 1.0))))
        key = (cond <= 1e3, angle if cond <= 1e3 else -cond)
        if best_key is None or key > best_key:
            best, best_key = u, key
    # representatives in the upper hemisphere for readability
    return best * np.where(best[:, 2:3] < 0, -1.0, 1.0)


@lru_cache(maxsize=None)
def canonical_directions(order: int) -> DirectionSet:
    """Default ``2L+1`` directions for order ``L``.

    ``L = 1`` uses the coordinate axes and ``L = 2`` the five icosahedral
    lines.  For ``L >= 3`` the lines are spread numerically (seeded, so the
    result is reproducible) and accepted only if ``P_L`` is well conditioned.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if order == 1:
        return DirectionSet.from_vectors(np.eye(3), "axes")
    if order == 2:
        return DirectionSet.from_vectors(_icosahedral_five(), "icosahedral-5")
    for attempt in range(4):
        vecs = _spread_lines(order, DIRECTION_SEED + attempt)
        dirs = DirectionSet.from_vectors(vecs, f"spread-{2 * order + 1}")
        if np.linalg.cond(gram_matrix(order, dirs)) <= CONDITION_LIMIT:
            return dirs
    raise InversionError(f"could not find a well-conditioned direction set for L={order}")


# --------------------------------------------------------------------------- #
# Inversion
# --------------------------------------------------------------------------- #


def invert_dipole(mu1_axes, spin) -> np.ndarray:
    """``(rho_1,-1, rho_10, rho_11)`` from first moments along x, y, z."""
    sp = Spin.of(spin)
    if sp.two_s < 1:
        raise ValueError("the dipole needs S >= 1/2")
    mu_x, mu_y, mu_z = (float(x) for x in mu1_axes)
    c = math.sqrt(3.0 / (2 * sp.s * (sp.s + 1) * (2 * sp.s + 1)))
    return c * np.array([mu_x + 1j * mu_y, math.sqrt(2.0) * mu_z, -mu_x + 1j * mu_y])


def _real_to_complex(order: int) -> np.ndarray:
    """Map ``x -> rho_Lq`` (q = -L..L) with ``rho_{L,-q} = (-1)^q rho_Lq^*`` built in."""
    n = 2 * order + 1
    t = np.zeros((n, n), dtype=complex)
    t[order, 0] = 1.0
    for q in range(1, order + 1):
        a, b = 2 * q - 1, 2 * q
        t[order + q, a], t[order + q, b] = 1.0, 1j
        sign = (-1) ** q
        t[order - q, a], t[order - q, b] = sign, -1j * sign
    return t


def _order_map(order: int, directions: DirectionSet):
    """Complex matrix ``M`` with ``rho_L = M b`` for ``b_i = sum_q rho_Lq Y_Lq(n_i)``."""
    n = len(directions)
    need = 2 * order + 1
    if n < need:
        raise ValueError(f"order {order} needs at least {need} directions, got {n}")
    v = directions.vectors
    theta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    phi = np.arctan2(v[:, 1], v[:, 0])
    y = spherical_harmonics_table(order, theta, phi)[order].T  # (n, 2L+1)
    if n == need:
        gram = gram_matrix(order, directions)
        cond = float(np.linalg.cond(gram))
        if not cond <= CONDITION_LIMIT:
            raise InversionError(
                f"Gram matrix of order {order} has condition number {cond:.3e}; directions "
                + ", ".join(f"(theta={d.theta:.6f}, phi={d.phi:.6f})" for d in directions),
                directions,
            )
        m = (4 * math.pi / (2 * order + 1)) * y.conj().T @ np.linalg.inv(gram)
        return m, cond, y
    design = np.empty((n, need))
    design[:, 0] = y[:, order].real
    for q in range(1, order + 1):
        design[:, 2 * q - 1] = 2 * y[:, order + q].real
        design[:, 2 * q] = -2 * y[:, order + q].imag
    cond = float(np.linalg.cond(design))
    if not cond <= CONDITION_LIMIT:
        raise InversionError(f"order-{order} design matrix has condition number {cond:.3e}", directions)
    return _real_to_complex(order) @ np.linalg.pinv(design), cond, y


def _hermitize(rho: np.ndarray, order: int) -> np.ndarray:
    q = np.arange(-order, order + 1)
    mirrored = ((-1.0) ** q) * rho[::-1].conj()
    return (rho + mirrored) / 2


def _lower_order_contribution(spin: Spin, order: int, directions: DirectionSet):
    """Matrices ``G_K[i, q]`` with ``mu_L(n_i) = sum_K G_K rho_K`` for ``K < L``."""
    v = directions.vectors
    theta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    phi = np.arctan2(v[:, 1], v[:, 0])
    y = spherical_harmonics_table(order, theta, phi)
    pref = math.sqrt(4 * math.pi / spin.dim)
    out = {}
    for k in range(order - 2, -1, -2):
        f = f_coeff(spin, k, order)
        if f != 0.0:
            out[k] = pref * f * y[k, order - k : order + k + 1].T
    return out


@dataclass(frozen=True)
class OrderDiagnostic:
    two_s: int
    order: int
    n_directions: int
    condition: float
    residual: float


def invert_order(
    order: int,
    directions: DirectionSet,
    moments,
    lower,
    spin,
) -> tuple[np.ndarray, OrderDiagnostic]:
    """``rho_Lq`` (q = -L..L) from order-``L`` moments and known lower multipoles.

    Parameters
    ----------
    moments
        ``MomentRecord`` list or plain values, one per direction in order.
    lower
        ``MultipoleTable`` (or ``{K: rho_K}``) holding every order below ``L``
        of the same parity, monopole included.

    Raises
    ------
    ValueError
        Wrong number of directions or moments, or ``L > 2S``.
    InversionError
        Ill-conditioned Gram or design matrix.
    """
    sp = Spin.of(spin)
    if not 1 <= order <= sp.two_s:
        raise ValueError(f"order {order} outside [1, 2S={sp.two_s}]")
    values = np.array([m.value if isinstance(m, MomentRecord) else float(m) for m in moments])
    if values.size != len(directions):
        raise ValueError("one moment per direction is required")
    lower_rho = _lower_lookup(lower, sp)
    m, cond, y = _order_map(order, directions)
    rhs = values.copy()
    for k, g in _lower_order_contribution(sp, order, directions).items():
        rhs -= np.real(g @ lower_rho(k))
    scale = math.sqrt(4 * math.pi / sp.dim) * f_coeff(sp, order, order)
    b = rhs / scale
    rho = _hermitize(m @ b, order)
    residual = float(np.linalg.norm(np.real(y @ rho) - b))
    return rho, OrderDiagnostic(sp.two_s, order, len(directions), cond, residual)


def _lower_lookup(lower, sp: Spin):
    if isinstance(lower, MultipoleTable):
        return lambda k: lower.order(sp, k)
    return lambda k: np.asarray(lower[k], dtype=complex)


# --------------------------------------------------------------------------- #
# Simulation and estimation
# --------------------------------------------------------------------------- #


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def simulate_counts(sector: PolarizationSector, direction: SphericalDirection, shots: int, seed) -> list[CountRecord]:
    """Draw ``shots`` events: a block with probability ``P_S``, then an outcome ``m``.

    The truncation tail is not sampled; block probabilities are renormalised
    over the stored blocks.
    """
    if shots < 0:
        raise ValueError("shots must be non-negative")
    rng = _rng(seed)
    keys = list(sector.blocks)
    w = np.array([sector.weights[k] for k in keys])
    per_block = rng.multinomial(int(shots), w / w.sum())
    records = []
    for k, n in zip(keys, per_block):
        sp = Spin(k)
        p = outcome_probabilities(sector.blocks[k].matrix, sp, direction)
        draws = rng.multinomial(int(n), p)
        records.append(CountRecord(direction, k, {int(m2): int(c) for m2, c in zip(sp.m2_values(), draws)}))
    return records


def estimate_moments(records, ell: int, two_s: int | None = None) -> MomentRecord:
    """Empirical ``mu_l = sum_m p(m) m^l`` with its plug-in standard error.

    ``records`` must share one direction; ``two_s`` restricts to one block,
    otherwise blocks are pooled by their event totals.
    """
    records = [r for r in records if two_s is None or r.two_s == two_s]
    if not records:
        raise ValueError("no count records to estimate from")
    direction = records[0].direction
    for r in records[1:]:
        if np.linalg.norm(r.direction.vector - direction.vector) > _SAME_DIRECTION_TOL:
            raise ValueError("count records refer to different directions")
    m = np.array([m2 / 2 for r in records for m2 in r.counts], dtype=float)
    c = np.array([cnt for r in records for cnt in r.counts.values()], dtype=float)
    n = int(c.sum())
    if ell == 0:
        return MomentRecord(direction, 0, 1.0, 0.0, n)
    if n == 0:
        raise ValueError("no events recorded")
    x = m**ell
    mean = float(np.dot(c, x) / n)
    var = float(np.dot(c, (x - mean) ** 2) / n)
    return MomentRecord(direction, ell, mean, math.sqrt(var / n), n)


# --------------------------------------------------------------------------- #
# Full reconstruction
# --------------------------------------------------------------------------- #


@dataclass
class Reconstruction:
    """Reconstructed table, standard errors and per-order diagnostics.

    ``stderr[two_s]`` has the table's shape with ``se(Re) + 1j se(Im)``.
    Errors propagate linearly through the recursion and treat the moments of
    different directions and orders as independent.
    """

    table: MultipoleTable
    stderr: dict
    diagnostics: list = field(default_factory=list)
    mode: str = "exact"
    seed: int | None = None
    l_max: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from .io import table_to_dict

        return {
            "mode": self.mode,
            "seed": self.seed,
            "l_max": {str(k): v for k, v in self.l_max.items()},
            "table": table_to_dict(self.table),
            "stderr": {
                str(k): [[[float(x.real), float(x.imag)] for x in row] for row in arr]
                for k, arr in self.stderr.items()
            },
            "diagnostics": [
                {"two_s": d.two_s, "order": d.order, "n_directions": d.n_directions,
                 "condition": d.condition, "residual": d.residual}
                for d in self.diagnostics
            ],
        }


def _directions_for(order: int, directions) -> DirectionSet:
    if directions is not None and order in directions:
        return directions[order]
    return canonical_directions(order)


def _reconstruct_block(sp: Spin, l_max: int, directions, moment_fn):
    """Run the recursion for one block.

    ``moment_fn(order, dirs)`` returns ``(values, stderrs)`` arrays.
    """
    n = sp.two_s
    coeffs = np.zeros((n + 1, 2 * n + 1), dtype=complex)
    coeffs[0, n] = 1.0 / math.sqrt(sp.dim)
    jac = {0: np.zeros((1, 0), dtype=complex)}
    sigmas = np.zeros(0)
    diags = []
    for order in range(1, l_max + 1):
        dirs = _directions_for(order, directions)
        values, errs = moment_fn(order, dirs)
        offset = sigmas.size
        sigmas = np.concatenate([sigmas, errs])
        rho, diag = invert_order(order, dirs, values, {k: coeffs[k, n - k : n + k + 1] for k in range(order)}, sp)
        coeffs[order, n - order : n + order + 1] = rho
        diags.append(diag)
        # linear error propagation: rho_L = M (mu_L - sum_K G_K rho_K) / scale
        m, _, _ = _order_map(order, dirs)
        scale = math.sqrt(4 * math.pi / sp.dim) * f_coeff(sp, order, order)
        d_mu = np.zeros((len(dirs), sigmas.size), dtype=complex)
        d_mu[:, offset:] = np.eye(len(dirs))
        for k, g in _lower_order_contribution(sp, order, dirs).items():
            jk = jac[k]
            d_mu[:, : jk.shape[1]] -= np.real(g @ jk)
        jac[order] = (m @ np.real(d_mu)) / scale
        for k in jac:
            if jac[k].shape[1] < sigmas.size:
                jac[k] = np.pad(jac[k], ((0, 0), (0, sigmas.size - jac[k].shape[1])))
    se = np.zeros_like(coeffs)
    for order in range(1, l_max + 1):
        j = jac[order]
        se_re = np.sqrt((np.real(j) ** 2) @ sigmas**2)
        se_im = np.sqrt((np.imag(j) ** 2) @ sigmas**2)
        se[order, n - order : n + order + 1] = se_re + 1j * se_im
    return coeffs, se, diags


def _block_limits(two_s_values, l_max: int) -> dict:
    return {k: min(l_max, k) for k in two_s_values}


def reconstruct_exact(sector: PolarizationSector, l_max: int, directions: dict | None = None) -> Reconstruction:
    """Recursive inversion fed with exact moments of every block."""
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    coeffs, stderr, diags = {}, {}, []
    limits = _block_limits(sector.blocks, l_max)
    for sp, _, blk in sector:

        def moment_fn(order, dirs, blk=blk, sp=sp):
            vals = []
            for d in dirs:
                op = np.linalg.matrix_power(stokes_matrices(sp).along(d), order)
                vals.append(float(np.real(np.trace(op @ blk.matrix))))
            return np.array(vals), np.zeros(len(vals))

        c, se, dg = _reconstruct_block(sp, limits[sp.two_s], directions, moment_fn)
        coeffs[sp.two_s], stderr[sp.two_s] = c, se
        diags.extend(dg)
    table = MultipoleTable(coeffs, dict(sector.weights), sector.tail_mass)
    return Reconstruction(table, stderr, diags, "exact", None, limits)


def _match(record_dir: SphericalDirection, target: SphericalDirection) -> int:
    """+1 for the same direction, -1 for its antipode, 0 otherwise."""
    dot = float(np.dot(record_dir.vector, target.vector))
    if dot > 1 - _SAME_DIRECTION_TOL:
        return 1
    if dot < -1 + _SAME_DIRECTION_TOL:
        return -1
    return 0


def reconstruct_from_counts(records, l_max: int, directions: dict | None = None, seed=None, mode="ingest") -> Reconstruction:
    """Reconstruction from count records (measured or simulated).

    Block weights are the per-block shares of all events.  A block is
    reconstructed up to the highest order for which every required
    direction has at least one event in that block.
    """
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    records = list(records)
    if not records:
        raise ValueError("no count records")
    totals = {}
    for r in records:
        totals[r.two_s] = totals.get(r.two_s, 0) + r.total
    grand = sum(totals.values())
    if grand == 0:
        raise ValueError("no events recorded")
    keys = sorted(k for k, v in totals.items() if v > 0)

    def records_along(two_s, target):
        out = []
        for r in records:
            if r.two_s != two_s:
                continue
            s = _match(r.direction, target)
            if s == 1:
                out.append(r)
            elif s == -1:
                flipped = {-m2: c for m2, c in r.counts.items()}
                out.append(CountRecord(target, r.two_s, flipped))
        return out

    coeffs, stderr, diags, limits = {}, {}, [], {}
    for k in keys:
        sp = Spin(k)
        top = 0
        for order in range(1, min(l_max, k) + 1):
            dirs = _directions_for(order, directions)
            if all(sum(r.total for r in records_along(k, d)) > 0 for d in dirs):
                top = order
            else:
                warnings.warn(f"block two_s={k} lacks events for order {order}; stopped at {top}", stacklevel=2)
                break

        def moment_fn(order, dirs, k=k):
            recs = [estimate_moments(records_along(k, d), order) for d in dirs]
            return np.array([r.value for r in recs]), np.array([r.stderr for r in recs])

        c, se, dg = _reconstruct_block(sp, top, directions, moment_fn)
        coeffs[k], stderr[k], limits[k] = c, se, top
        diags.extend(dg)
    weights = {k: totals[k] / grand for k in keys}
    table = MultipoleTable(coeffs, weights, 0.0)
    return Reconstruction(table, stderr, diags, mode, seed, limits)


def simulate_plan(sector: PolarizationSector, l_max: int, shots: int, seed, directions: dict | None = None) -> list[CountRecord]:
    """Counts for every direction of every order ``1..l_max``.

    Each direction draws from its own child of ``SeedSequence(seed)`` so the
    result is reproducible and independent of evaluation order.
    """
    plan = [d for order in range(1, l_max + 1) for d in _directions_for(order, directions)]
    children = np.random.SeedSequence(int(seed)).spawn(len(plan))
    records = []
    for d, child in zip(plan, children):
        records.extend(simulate_counts(sector, d, shots, child))
    return records


def reconstruct_sampled(
    sector: PolarizationSector, l_max: int, shots: int, seed, directions: dict | None = None
) -> Reconstruction:
    """Simulate ``shots`` events per direction, then reconstruct.

    A direction shared by two orders pools its events.
    """
    records = simulate_plan(sector, l_max, shots, seed, directions)
    return reconstruct_from_counts(records, l_max, directions, seed=int(seed), mode="sampled")
