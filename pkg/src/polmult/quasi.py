"""r-parametrised quasiprobability distributions on the sphere.

For one block,

    W_r(n) = sqrt(4 pi / (2S+1)) sum_Kq (C^{SS}_{SS,K0})^{-r} rho_Kq Y_Kq(n),

with ``r = 1, 0, -1`` giving the P, Wigner and Q functions.  With
``rho_Kq = Tr[rho T_Kq^dag]`` it is ``Y_Kq`` (not its conjugate) that makes
the Q function the overlap with the coherent state pointing along ``n``;
the conjugate would reflect every distribution through the x-z plane.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .angular import SphericalDirection, Spin, stretched_cg
from .kernels import assoc_legendre_table
from .multipoles import MultipoleTable, w_spectrum

__all__ = [
    "SphereGrid",
    "QuasiDistribution",
    "sphere_grid",
    "quasi_value",
    "quasi_grid",
    "quasi_grid_weighted",
    "localization_integral",
    "localization_sigma",
    "localization_identity",
]

P_FUNCTION_WARN_TWO_S = 30


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Product grid: Gauss-Legendre in ``cos(theta)`` times uniform ``phi``.

    Integrates every spherical harmonic of degree ``<= band_limit`` exactly.
    """

    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray  # (n_theta, n_phi)
    band_limit: int

    @property
    def scheme(self) -> str:
        return f"gauss-legendre x uniform, band limit {self.band_limit}"

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def integrate(self, values: np.ndarray) -> float | complex:
        total = np.sum(self.weights * values)
        return complex(total) if np.iscomplexobj(total) else float(total)


def sphere_grid(band_limit: int) -> SphereGrid:
    if band_limit < 0:
        raise ValueError("band limit must be non-negative")
    n_theta = band_limit // 2 + 1
    n_phi = band_limit + 1
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    weights = np.outer(w, np.full(n_phi, 2.0 * math.pi / n_phi))
    for a in (theta, phi, weights):
        a.setflags(write=False)
    return SphereGrid(theta, phi, weights, band_limit)


def _check_r(r: float, two_s: int):
    if not -1.0 <= r <= 1.0:
        warnings.warn(f"r={r} outside [-1, 1]", stacklevel=3)
    if r > 0 and two_s > P_FUNCTION_WARN_TWO_S:
        warnings.warn(
            f"r={r} > 0 with 2S={two_s}: (C^SS_SS,K0)^-r amplifies high multipoles; values are ill-conditioned",
            stacklevel=3,
        )


def _clebsch_powers(two_s: int, r: float) -> np.ndarray:
    c = np.array([float(stretched_cg(Spin(two_s), k)) for k in range(two_s + 1)])
    return c ** (-r)


def _evaluate(coeffs: np.ndarray, two_s: int, r: float, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Values on the product of ``theta`` and ``phi`` arrays, shape (n_theta, n_phi)."""
    n = two_s
    pref = math.sqrt(4 * math.pi / (n + 1))
    g = coeffs * (pref * _clebsch_powers(n, r))[:, None]
    pbar = assoc_legendre_table(n, np.ascontiguousarray(np.cos(theta)))  # [K, |q|, theta]
    q = np.arange(-n, n + 1)
    # Y_Kq = s_q Pbar_K|q| exp(i q phi), s_q = (-1)^q for q < 0
    sign = np.where(q < 0, (-1.0) ** np.abs(q), 1.0)
    amp = np.einsum("kq,kqt->tq", g * sign[None, :], pbar[:, np.abs(q), :])
    vals = amp @ np.exp(1j * np.outer(q, phi))
    if vals.size and np.abs(vals.imag).max() > 1e-10 * max(1.0, np.abs(vals.real).max()):
        raise ValueError("quasidistribution has an imaginary part; table is not Hermitian")
    return vals.real


def quasi_value(table: MultipoleTable, spin, r: float, direction: SphericalDirection) -> float:
    sp = Spin.of(spin)
    _check_r(r, sp.two_s)
    vals = _evaluate(table.coeffs[sp.two_s], sp.two_s, r, np.array([direction.theta]), np.array([direction.phi]))
    return float(vals[0, 0])


@dataclass(eq=False)
class QuasiDistribution:
    """Values of ``W_r`` on a grid; ``spin`` is None for the ``P_S``-weighted sum."""

    spin: Spin | None
    r: float
    grid: SphereGrid
    values: np.ndarray
    label: str = ""
    header: dict = field(default_factory=dict)

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def argmax(self) -> SphericalDirection:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return SphericalDirection(self.grid.theta[i], self.grid.phi[j])

    def to_csv(self) -> str:
        meta = {
            "spin": None if self.spin is None else self.spin.s,
            "two_s": None if self.spin is None else self.spin.two_s,
            "r": self.r,
            "scheme": self.grid.scheme,
            "view": self.label or ("block" if self.spin is not None else "weighted-sum"),
        }
        meta.update(self.header)
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["theta", "phi", "value"])
        for i, t in enumerate(self.grid.theta):
            for j, p in enumerate(self.grid.phi):
                writer.writerow([repr(float(t)), repr(float(p)), repr(float(self.values[i, j]))])
        return buf.getvalue()


def quasi_grid(table: MultipoleTable, spin, r: float, grid: SphereGrid) -> QuasiDistribution:
    sp = Spin.of(spin)
    _check_r(r, sp.two_s)
    vals = _evaluate(table.coeffs[sp.two_s], sp.two_s, r, grid.theta, grid.phi)
    return QuasiDistribution(sp, r, grid, vals, "block")


def quasi_grid_weighted(table: MultipoleTable, r: float, grid: SphereGrid) -> QuasiDistribution:
    """``sum_S P_S W_r^(S)`` over all blocks, a convenience view."""
    _check_r(r, max(table.coeffs))
    vals = np.zeros(grid.shape)
    for two_s, coeffs in table.coeffs.items():
        vals += table.weights[two_s] * _evaluate(coeffs, two_s, r, grid.theta, grid.phi)
    return QuasiDistribution(None, r, grid, vals, "weighted-sum")


def localization_integral(table: MultipoleTable, spin, r: float, grid: SphereGrid | None = None) -> float:
    """Quadrature of ``W_r^2`` over the sphere."""
    sp = Spin.of(spin)
    if grid is None:
        grid = sphere_grid(2 * sp.two_s)
    if grid.band_limit < 2 * sp.two_s:
        raise ValueError(f"grid band limit {grid.band_limit} is below 2*(2S) = {2 * sp.two_s}")
    dist = quasi_grid(table, sp, r, grid)
    return grid.integrate(dist.values**2)


def localization_sigma(table: MultipoleTable, spin, r: float, grid: SphereGrid | None = None) -> float:
    """Effective area ``1 / int W_r^2``."""
    val = localization_integral(table, spin, r, grid)
    if not val > 0:
        raise ValueError(f"non-positive localization integral {val}")
    return 1.0 / val


def localization_identity(table: MultipoleTable, spin, r: float) -> float:
    """``4 pi / (2S+1) sum_K (C^{SS}_{SS,K0})^{-2r} W_K``."""
    sp = Spin.of(spin)
    w = w_spectrum(table).per_block[sp.two_s]
    return 4 * math.pi / sp.dim * float(np.dot(_clebsch_powers(sp.two_s, 2 * r), w))
