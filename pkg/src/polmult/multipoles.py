"""State multipoles and the W_K / A_K / P_K hierarchy of polarization measures.

Each spin-S block is expanded in the irreducible tensor operators
``T_Kq = sqrt((2K+1)/(2S+1)) sum C^{S m'}_{S m, K q} |S m'><S m|``; the state
multipoles are ``rho_Kq = Tr[rho T_Kq^dag]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .angular import MultipoleIndex, Spin, clebsch_gordan_exact, spin_matrices, stretched_cg, tensor_band_table
from .states import DensityBlock, PolarizationSector

__all__ = [
    "TensorOperator",
    "MultipoleTable",
    "WSpectrum",
    "MeasureReport",
    "tensor_operator",
    "block_multipoles",
    "block_from_multipoles",
    "decompose",
    "recompose",
    "w_spectrum",
    "cumulative_a",
    "a_su2_max",
    "degree_p",
    "degree_p1_closed_form",
    "w_fock_closed_form",
    "w_coherent_closed_form",
    "degree_fock_closed_form",
    "degree_quadrature_closed_form",
    "erfc_asymptote",
    "p2_quadrature_closed_form",
    "p2_fock_closed_form",
    "p2_minimum_closed_form",
    "p2_minimizing_m",
    "measure_report",
]

HERMITIAN_TABLE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TensorOperator:
    spin: Spin
    index: MultipoleIndex
    matrix: np.ndarray


def tensor_operator(spin, k: int, q: int) -> TensorOperator:
    """``T_Kq`` of one block, built entry by entry from exact Clebsch-Gordan values.

    Entry ``(m', m)`` is ``sqrt((2K+1)/(2S+1)) C^{S m'}_{S m, K q}``; it is
    nonzero only for ``m' = m + q``.
    """
    sp = Spin.of(spin)
    idx = MultipoleIndex(k, q)
    if k > sp.two_s:
        raise ValueError(f"K={k} exceeds 2S={sp.two_s}")
    n = sp.dim
    scale = math.sqrt((2 * k + 1) / n)
    mat = np.zeros((n, n), dtype=complex)
    for i, m2 in enumerate(sp.m2_values()):
        row = i - q
        if 0 <= row < n:
            cg = clebsch_gordan_exact(sp, m2 / 2, k, q, sp, (m2 + 2 * q) / 2)
            mat[row, i] = scale * float(cg)
    mat.setflags(write=False)
    return TensorOperator(sp, idx, mat)


# --------------------------------------------------------------------------- #
# Tables of multipoles
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class MultipoleTable:
    """Multipoles per block.

    ``coeffs[two_s]`` is a complex ``(2S+1, 4S+1)`` array indexed
    ``[K, q + 2S]``; ``weights[two_s]`` is ``P_S``.
    """

    coeffs: dict
    weights: dict
    tail_mass: float = 0.0

    def __post_init__(self):
        keys = sorted(self.coeffs)
        if sorted(self.weights) != keys:
            raise ValueError("coeffs and weights must share the same spins")
        coeffs = {}
        for k in keys:
            arr = np.array(self.coeffs[k], dtype=complex)
            if arr.shape != (k + 1, 2 * k + 1):
                raise ValueError(f"coefficient array for two_s={k} has shape {arr.shape}")
            arr.setflags(write=False)
            coeffs[k] = arr
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "weights", {k: float(self.weights[k]) for k in keys})

    @property
    def spins(self) -> list[Spin]:
        return [Spin(k) for k in self.coeffs]

    def get(self, spin, k: int, q: int) -> complex:
        two_s = Spin.of(spin).two_s
        if k > two_s or abs(q) > k:
            return 0j
        return complex(self.coeffs[two_s][k, q + two_s])

    def order(self, spin, k: int) -> np.ndarray:
        """``rho_Kq`` for ``q = -K..K``."""
        two_s = Spin.of(spin).two_s
        return np.array(self.coeffs[two_s][k, two_s - k : two_s + k + 1])

    def hermiticity_defect(self) -> float:
        """Largest ``|rho_Kq^* - (-1)^q rho_{K,-q}|`` over all entries."""
        worst = 0.0
        for two_s, arr in self.coeffs.items():
            q = np.arange(-two_s, two_s + 1)
            mirrored = arr[:, ::-1] * ((-1.0) ** q)[None, :]
            worst = max(worst, float(np.abs(arr.conj() - mirrored).max()))
        return worst

    def allclose(self, other: "MultipoleTable", atol: float) -> bool:
        if sorted(self.coeffs) != sorted(other.coeffs):
            return False
        return all(np.allclose(self.coeffs[k], other.coeffs[k], rtol=0, atol=atol) for k in self.coeffs)


def block_multipoles(matrix: np.ndarray, spin) -> np.ndarray:
    """``[K, q + 2S]`` array of ``Tr[rho T_Kq^dag]`` for one block matrix."""
    two_s = Spin.of(spin).two_s
    n = two_s + 1
    rho = np.asarray(matrix, dtype=complex)
    tab = tensor_band_table(Spin(two_s))
    out = np.zeros((n, 2 * n - 1), dtype=complex)
    for q in range(-two_s, two_s + 1):
        i = np.arange(max(q, 0), n + min(q, 0))
        # T_Kq is real, so Tr[rho T^dag] = sum_i rho[i-q, i] T[i-q, i]
        out[:, q + two_s] = tab[:, q + two_s, i] @ rho[i - q, i]
    return out


def block_from_multipoles(coeffs: np.ndarray, spin) -> np.ndarray:
    """Raw matrix ``sum_Kq rho_Kq T_Kq`` (no physicality checks)."""
    two_s = Spin.of(spin).two_s
    n = two_s + 1
    tab = tensor_band_table(Spin(two_s))
    rho = np.zeros((n, n), dtype=complex)
    for q in range(-two_s, two_s + 1):
        i = np.arange(max(q, 0), n + min(q, 0))
        rho[i - q, i] = coeffs[:, q + two_s] @ tab[:, q + two_s, i]
    return rho


def decompose(sector: PolarizationSector) -> MultipoleTable:
    """Multipoles of every block for every ``0 <= K <= 2S``, ``|q| <= K``."""
    coeffs = {sp.two_s: block_multipoles(blk.matrix, sp) for sp, _, blk in sector}
    return MultipoleTable(coeffs, dict(sector.weights), sector.tail_mass)


def recompose(table: MultipoleTable, tail_tol: float | None = None) -> PolarizationSector:
    """Rebuild the sector ``rho^(S) = sum rho_Kq T_Kq``.

    Raises
    ------
    ValueError
        If the table violates ``rho_Kq^* = (-1)^q rho_{K,-q}`` beyond 1e-10, or
        a rebuilt block is not a valid density matrix.
    """
    defect = table.hermiticity_defect()
    if defect > HERMITIAN_TABLE_TOL:
        raise ValueError(f"multipole table is not Hermitian-consistent (defect {defect:.2e})")
    blocks = {}
    for two_s, arr in table.coeffs.items():
        mat = block_from_multipoles(arr, Spin(two_s))
        blocks[two_s] = DensityBlock(Spin(two_s), (mat + mat.conj().T) / 2)
    tol = max(table.tail_mass, 1e-10) if tail_tol is None else tail_tol
    return PolarizationSector(dict(table.weights), blocks, tail_tol=tol)


# --------------------------------------------------------------------------- #
# W, A, P
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class WSpectrum:
    """``per_block[two_s][K] = W_K^(S)``; ``aggregate[K] = sum_S P_S W_K^(S)``."""

    per_block: dict
    aggregate: np.ndarray


def w_spectrum(table: MultipoleTable) -> WSpectrum:
    per_block = {k: (np.abs(arr) ** 2).sum(axis=1) for k, arr in table.coeffs.items()}
    kmax = max(table.coeffs)
    agg = np.zeros(kmax + 1)
    for k, w in per_block.items():
        agg[: k + 1] += table.weights[k] * w
    return WSpectrum(per_block, agg)


def cumulative_a(table: MultipoleTable, k: int) -> dict:
    """``A_K^(S) = sum_{l=1}^{min(K, 2S)} W_l^(S)`` for every block (monopole excluded)."""
    if k < 1:
        raise ValueError("cumulative sums start at K = 1")
    spec = w_spectrum(table)
    return {two_s: float(w[1 : min(k, two_s) + 1].sum()) for two_s, w in spec.per_block.items()}


def a_su2_max(spin, k: int) -> float:
    """``2S/(2S+1) - Gamma(2S+1)^2 / (Gamma(2S-K) Gamma(2S+K+2))``.

    The gamma ratio equals ``prod_{i=0}^{K} (2S-K+i)/(2S+1+i)``; the product
    has no overflow and its first factor vanishes at ``K = 2S``, which is the
    reciprocal-gamma limit of the pole.
    """
    n = Spin.of(spin).two_s
    if not 1 <= k <= n:
        raise ValueError(f"K={k} outside [1, 2S={n}]")
    i = np.arange(k + 1)
    ratio = float(np.prod((n - k + i) / (n + 1.0 + i)))
    return n / (n + 1.0) - ratio


def degree_p(table: MultipoleTable, k: int) -> float:
    """``P_K = sum_S P_S sqrt(A_K^(S) / A_K,SU(2)^(S))``.

    Blocks with ``2S < K`` (including the vacuum) contribute nothing.
    """
    a = cumulative_a(table, k)
    total = 0.0
    for two_s, val in a.items():
        if two_s < k:
            continue
        total += table.weights[two_s] * math.sqrt(val / a_su2_max(Spin(two_s), k))
    return total


def degree_p1_closed_form(sector: PolarizationSector) -> float:
    """``sum_S P_S |<S>| / S``: the dipole degree from mean Stokes vectors."""
    total = 0.0
    for sp, w, blk in sector:
        if sp.two_s == 0:
            continue
        vec = [blk.expectation(op).real for op in spin_matrices(sp)]
        total += w * math.sqrt(sum(x * x for x in vec)) / sp.s
    return total


# --------------------------------------------------------------------------- #
# Closed forms used as references
# --------------------------------------------------------------------------- #


def w_fock_closed_form(spin, m, k: int) -> float:
    """``W_K`` of ``|S, m>``: ``(2K+1)/(2S+1) (C^{Sm}_{Sm,K0})^2``."""
    sp = Spin.of(spin)
    return (2 * k + 1) / sp.dim * float(clebsch_gordan_exact(sp, m, k, 0, sp, m).square)


def w_coherent_closed_form(spin, k: int) -> float:
    """``W_K`` of an SU(2) coherent state: ``(2K+1)/(2S+1) (C^{SS}_{SS,K0})^2``."""
    sp = Spin.of(spin)
    return (2 * k + 1) / sp.dim * float(stretched_cg(sp, k).square)


def degree_fock_closed_form(spin, m, k: int) -> float:
    """``P_K`` of ``|S, m>`` as the square root of a ratio of W sums."""
    sp = Spin.of(spin)
    num = sum(w_fock_closed_form(sp, m, ell) for ell in range(1, k + 1))
    den = sum(w_coherent_closed_form(sp, ell) for ell in range(1, k + 1))
    return math.sqrt(num / den)


def degree_quadrature_closed_form(nbar: float, k: int) -> float:
    """``sum_{2S >= K} e^{-Nbar} Nbar^{2S} / (2S)!`` (Poisson tail)."""
    return float(stats.poisson.sf(k - 1, nbar))


def erfc_asymptote(nbar: float, k) -> float:
    """Large-``Nbar`` approximation ``erfc((K - Nbar)/sqrt(2 Nbar)) / 2``."""
    return 0.5 * special.erfc((np.asarray(k, dtype=float) - nbar) / math.sqrt(2 * nbar))


def p2_quadrature_closed_form(nbar: float) -> float:
    return 1.0 - (1.0 + nbar) * math.exp(-nbar)


def p2_fock_closed_form(spin, m) -> float:
    """Rational closed form for ``|S, m>``, S >= 1.

    It equals ``A_2 / A_2,SU(2)``, i.e. the square of ``degree_p(.., 2)``.
    """
    s = Spin.of(spin).s
    if s < 1:
        raise ValueError("closed form needs S >= 1")
    m = float(m)
    return (45 * m**4 + 5 * s**2 * (s + 1) ** 2 - 9 * m**2 * (2 * s * (s + 1) + 1)) / (
        4 * s**2 * (2 * s - 1) * (4 * s + 1)
    )


def p2_minimum_closed_form(spin) -> float:
    """``(9 + 18 S + 8 S^2) / (80 S^2)``, the minimum over real m of the form above."""
    s = Spin.of(spin).s
    return (9 + 18 * s + 8 * s * s) / (80 * s * s)


def p2_minimizing_m(spin) -> float:
    s = Spin.of(spin).s
    return math.sqrt(1 + 2 * s + 2 * s * s) / math.sqrt(10)


# --------------------------------------------------------------------------- #
# Reports
# --------------------------------------------------------------------------- #


@dataclass
class MeasureReport:
    """W / A / P table per block and aggregated over the photon-number distribution."""

    k_max: int
    rows: list = field(default_factory=list)  # (two_s, K, W, A, A_max, P contribution)
    w_aggregate: list = field(default_factory=list)
    p_degree: list = field(default_factory=list)  # index K-1
    tail_bound: float = 0.0

    def to_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "tail_bound": self.tail_bound,
            "blocks": [
                {"S": two_s / 2, "two_s": two_s, "K": k, "W": w, "A": a, "A_max": am, "P_contribution": pc}
                for two_s, k, w, a, am, pc in self.rows
            ],
            "aggregate": [
                {"K": k, "W": self.w_aggregate[k], "P": (self.p_degree[k - 1] if k >= 1 else None)}
                for k in range(self.k_max + 1)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["S", "K", "W", "A", "A_max", "P_contribution"])

        def fmt(x):
            return "" if x is None else repr(float(x))

        for two_s, k, w, a, am, pc in self.rows:
            s = str(two_s // 2) if two_s % 2 == 0 else f"{two_s}/2"
            writer.writerow([s, k, fmt(w), fmt(a), fmt(am), fmt(pc)])
        for k in range(self.k_max + 1):
            p = self.p_degree[k - 1] if k >= 1 else None
            writer.writerow(["all", k, fmt(self.w_aggregate[k]), "", "", fmt(p)])
        return buf.getvalue()


def measure_report(table: MultipoleTable, k_max: int) -> MeasureReport:
    """W_K, A_K, A_K,SU(2) and P_K for ``K <= k_max``.

    ``k_max`` beyond the largest block is clamped with a warning.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    top = max(table.coeffs)
    if k_max > top:
        warnings.warn(f"k_max={k_max} exceeds the largest block 2S={top}; clamped", stacklevel=2)
        k_max = max(top, 1)
    spec = w_spectrum(table)
    report = MeasureReport(k_max=k_max, tail_bound=table.tail_mass)
    for two_s, w in spec.per_block.items():
        weight = table.weights[two_s]
        for k in range(k_max + 1):
            wk = float(w[k]) if k <= two_s else 0.0
            if k == 0:
                report.rows.append((two_s, 0, wk, None, None, None))
                continue
            a = float(w[1 : min(k, two_s) + 1].sum())
            if two_s >= k:
                am = a_su2_max(Spin(two_s), k)
                pc = weight * math.sqrt(a / am)
            else:
                am, pc = None, 0.0
            report.rows.append((two_s, k, wk, a, am, pc))
    agg = np.zeros(k_max + 1)
    n = min(k_max, len(spec.aggregate) - 1)
    agg[: n + 1] = spec.aggregate[: n + 1]
    report.w_aggregate = [float(x) for x in agg]
    report.p_degree = [degree_p(table, k) for k in range(1, k_max + 1)]
    return report
