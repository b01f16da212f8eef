"""Two-mode polarization states as block-diagonal polarization sectors.

A :class:`PolarizationSector` maps each occupied spin ``S = N/2`` to a weight
``P_S`` and a unit-trace :class:`DensityBlock`.  Coherences between different
photon numbers are not representable; :func:`project_polarization_sector`
discards them from a full two-mode density matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import stats

from .angular import MAX_TWO_S, Spin, SphericalDirection

__all__ = [
    "DensityBlock",
    "PolarizationSector",
    "StateSpec",
    "fock_state",
    "su2_coherent",
    "su2_coherent_vector",
    "coherent_axis",
    "quadrature_coherent",
    "noon_state",
    "tmsv_state",
    "maximally_mixed",
    "random_block",
    "project_polarization_sector",
    "two_mode_pure",
    "DEFAULT_TAIL_TOL",
]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10
DEFAULT_TAIL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DensityBlock:
    """Unit-trace density matrix of one spin block (descending-m basis)."""

    spin: Spin
    matrix: np.ndarray

    def __post_init__(self):
        spin = Spin.of(self.spin)
        mat = np.array(self.matrix, dtype=complex)
        if mat.shape != (spin.dim, spin.dim):
            raise ValueError(f"block for S={spin} must be {spin.dim}x{spin.dim}, got {mat.shape}")
        if np.abs(mat - mat.conj().T).max() > HERMITIAN_TOL:
            raise ValueError("density block is not Hermitian")
        if abs(np.trace(mat).real - 1.0) > TRACE_TOL:
            raise ValueError(f"density block trace {np.trace(mat).real!r} != 1")
        if np.linalg.eigvalsh(mat).min() < POSITIVITY_TOL:
            raise ValueError("density block is not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "spin", spin)
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_matrix(cls, spin, matrix) -> "DensityBlock":
        """Hermitise and renormalise ``matrix`` before validating it."""
        mat = np.asarray(matrix, dtype=complex)
        mat = (mat + mat.conj().T) / 2
        return cls(spin, mat / np.trace(mat).real)

    @classmethod
    def pure(cls, spin, vector) -> "DensityBlock":
        v = np.asarray(vector, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls.from_matrix(spin, np.outer(v, v.conj()))

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def expectation(self, op) -> complex:
        return complex(np.trace(self.matrix @ op))


@dataclass(frozen=True, eq=False)
class PolarizationSector:
    """Weights ``P_S`` and density blocks keyed by ``two_s``.

    ``tail_mass`` is the probability not represented by any stored block
    (``1 - sum P_S``); ``tail_tol`` is the truncation tolerance it must
    respect.
    """

    weights: dict
    blocks: dict
    tail_tol: float = DEFAULT_TAIL_TOL
    label: str = ""
    tail_mass: float = field(init=False)

    def __post_init__(self):
        keys = sorted(self.blocks)
        if sorted(self.weights) != keys:
            raise ValueError("weights and blocks must share the same spins")
        if not keys:
            raise ValueError("a sector needs at least one block")
        weights = {k: float(self.weights[k]) for k in keys}
        blocks = {}
        for k in keys:
            blk = self.blocks[k]
            if not isinstance(blk, DensityBlock):
                blk = DensityBlock(Spin(k), blk)
            if blk.spin.two_s != k:
                raise ValueError(f"block keyed {k} has spin {blk.spin}")
            if not weights[k] > 0:
                raise ValueError(f"weight for two_s={k} must be positive")
            blocks[k] = blk
        total = sum(weights.values())
        if total > 1 + 1e-9:
            raise ValueError(f"weights sum to {total} > 1")
        tail = max(0.0, 1.0 - total)
        if tail > self.tail_tol + 1e-12:
            raise ValueError(f"dropped mass {tail:.3e} exceeds tail_tol {self.tail_tol:.3e}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "tail_mass", tail)

    @classmethod
    def single(cls, block: DensityBlock, label: str = "") -> "PolarizationSector":
        return cls({block.spin.two_s: 1.0}, {block.spin.two_s: block}, label=label)

    def __iter__(self) -> Iterator[tuple[Spin, float, DensityBlock]]:
        for k, blk in self.blocks.items():
            yield blk.spin, self.weights[k], blk

    def __len__(self):
        return len(self.blocks)

    @property
    def spins(self) -> list[Spin]:
        return [Spin(k) for k in self.blocks]

    @property
    def max_two_s(self) -> int:
        return max(self.blocks)

    def mean_photon_number(self) -> float:
        return sum(w * k for k, w in self.weights.items())

    def purity(self) -> float:
        """``sum_S P_S Tr[(rho^(S))^2]``, the quantity the W_K spectrum sums to."""
        return sum(w * self.blocks[k].purity() for k, w in self.weights.items())

    def full_matrix(self) -> np.ndarray:
        """Block-diagonal ``(+)_S P_S rho^(S)`` ordered by increasing photon number."""
        dim = sum(k + 1 for k in self.blocks)
        out = np.zeros((dim, dim), dtype=complex)
        pos = 0
        for k, blk in self.blocks.items():
            out[pos : pos + k + 1, pos : pos + k + 1] = self.weights[k] * blk.matrix
            pos += k + 1
        return out

    def allclose(self, other: "PolarizationSector", atol: float = 1e-12) -> bool:
        if sorted(self.blocks) != sorted(other.blocks):
            return False
        return all(
            abs(self.weights[k] - other.weights[k]) <= atol
            and np.allclose(self.blocks[k].matrix, other.blocks[k].matrix, rtol=0, atol=atol)
            for k in self.blocks
        )


# --------------------------------------------------------------------------- #
# Builders
# --------------------------------------------------------------------------- #


def _basis_vector(two_s: int, m2: int) -> np.ndarray:
    v = np.zeros(two_s + 1, dtype=complex)
    v[(two_s - m2) // 2] = 1.0
    return v


def fock_state(n_h: int, n_v: int) -> PolarizationSector:
    """``|n_H, n_V>`` = ``|S = (n_H+n_V)/2, m = (n_H-n_V)/2>``."""
    if n_h < 0 or n_v < 0 or int(n_h) != n_h or int(n_v) != n_v:
        raise ValueError("photon numbers must be non-negative integers")
    n_h, n_v = int(n_h), int(n_v)
    two_s = n_h + n_v
    block = DensityBlock.pure(Spin(two_s), _basis_vector(two_s, n_h - n_v))
    return PolarizationSector.single(block, label=f"fock({n_h},{n_v})")


def su2_coherent_vector(spin, theta: float, phi: float) -> np.ndarray:
    """Amplitudes of ``exp(xi S+ - xi* S-) |S, -S>`` with ``xi = (theta/2) e^{-i phi}``.

    In the descending-m basis the amplitude of ``|S, m>`` is
    ``sqrt(C(2S, S+m)) cos(theta/2)^(S-m) sin(theta/2)^(S+m) e^{-i (S+m) phi}``.
    """
    sp = Spin.of(spin)
    n = sp.two_s
    k = n - np.arange(n + 1)  # S + m for each row
    # |amplitude|^2 is binomial(n, sin^2(theta/2)); the pmf avoids overflow.
    mag = np.sqrt(stats.binom.pmf(k, n, math.sin(theta / 2) ** 2))
    return mag * np.exp(-1j * k * phi)


def coherent_axis(theta: float, phi: float) -> SphericalDirection:
    """Direction of the mean Stokes vector of ``su2_coherent(S, theta, phi)``.

    The displacement acts on ``|S, -S>`` (the south pole), so the state points
    at polar angle ``pi - theta``.  It is the ``+S`` eigenstate of ``n . S``
    for this direction.
    """
    return SphericalDirection(math.pi - theta, phi)


def su2_coherent(spin, theta: float, phi: float) -> PolarizationSector:
    sp = Spin.of(spin)
    block = DensityBlock.pure(sp, su2_coherent_vector(sp, theta, phi))
    return PolarizationSector.single(block, label=f"su2_coherent(S={sp},{theta:.6g},{phi:.6g})")


def maximally_mixed(spin) -> PolarizationSector:
    sp = Spin.of(spin)
    block = DensityBlock(sp, np.eye(sp.dim) / sp.dim)
    return PolarizationSector.single(block, label=f"mixed(S={sp})")


def random_block(spin, rng: np.random.Generator, pure: bool = False, rank: int | None = None) -> DensityBlock:
    """Haar-random pure block, or a Ginibre-ensemble mixed block of given rank."""
    sp = Spin.of(spin)
    d = sp.dim
    if pure:
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        return DensityBlock.pure(sp, v)
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    return DensityBlock.from_matrix(sp, g @ g.conj().T)


def _check_tail_tol(tail_tol: float):
    if not 0 < tail_tol < 1:
        raise ValueError("tail_tol must lie in (0, 1)")


def quadrature_coherent(alpha_h: complex, alpha_v: complex, tail_tol: float = DEFAULT_TAIL_TOL) -> PolarizationSector:
    """Two-mode coherent state ``|alpha_H, alpha_V>`` projected onto its polarization sector.

    Photon numbers follow a Poisson law with mean ``|alpha_H|^2 + |alpha_V|^2``;
    each block is the SU(2) coherent state with amplitudes
    ``sqrt(C(N, n_H)) u^{n_H} v^{n_V}``, ``(u, v) = (alpha_H, alpha_V)/sqrt(Nbar)``.
    Blocks are kept until the Poisson tail falls below ``tail_tol``.
    """
    _check_tail_tol(tail_tol)
    alpha_h, alpha_v = complex(alpha_h), complex(alpha_v)
    nbar = abs(alpha_h) ** 2 + abs(alpha_v) ** 2
    label = f"quadrature_coherent(nbar={nbar:.6g})"
    if nbar == 0:
        vac = DensityBlock(Spin(0), np.ones((1, 1)))
        return PolarizationSector({0: 1.0}, {0: vac}, tail_tol=tail_tol, label=label)
    u, v = alpha_h / math.sqrt(nbar), alpha_v / math.sqrt(nbar)
    p_h = abs(u) ** 2
    weights, blocks = {}, {}
    n = 0
    while True:
        if n > MAX_TWO_S:
            raise ValueError(f"nbar={nbar:.6g} needs blocks beyond 2S={MAX_TWO_S} for tail_tol={tail_tol:.1e}")
        w = float(stats.poisson.pmf(n, nbar))
        if w > 0:
            n_h = n - np.arange(n + 1)
            amp = np.sqrt(stats.binom.pmf(n_h, n, p_h)) * np.exp(
                1j * (n_h * np.angle(u) + (n - n_h) * np.angle(v))
            )
            weights[n] = w
            blocks[n] = DensityBlock.pure(Spin(n), amp)
        if stats.poisson.sf(n, nbar) < tail_tol:
            break
        n += 1
    return PolarizationSector(weights, blocks, tail_tol=tail_tol, label=label)


def noon_state(n: int) -> PolarizationSector:
    """``(|N,0> + |0,N>)/sqrt(2)``: one block with coherence between ``m = +-S``."""
    if n < 1:
        raise ValueError("NOON states need n >= 1")
    v = _basis_vector(n, n) + _basis_vector(n, -n)
    block = DensityBlock.pure(Spin(n), v)
    return PolarizationSector.single(block, label=f"noon({n})")


def tmsv_state(r: float, tail_tol: float = DEFAULT_TAIL_TOL) -> PolarizationSector:
    """Polarization sector of the two-mode squeezed vacuum.

    Weights ``(1 - lambda^2) lambda^(2N)`` with ``lambda = tanh r`` on the
    twin-Fock blocks ``|N, N>`` (``S = N``, ``m = 0``).  Cross-block coherences
    of the pure state are not part of the sector.
    """
    if r < 0:
        raise ValueError("squeezing parameter must be non-negative")
    _check_tail_tol(tail_tol)
    lam2 = math.tanh(r) ** 2
    weights, blocks = {}, {}
    n = 0
    while True:
        w = (1 - lam2) * lam2 ** n
        if 2 * n > MAX_TWO_S:
            raise ValueError(f"r={r:.6g} needs blocks beyond 2S={MAX_TWO_S} for tail_tol={tail_tol:.1e}")
        if w > 0:
            two_s = 2 * n
            weights[two_s] = w
            blocks[two_s] = DensityBlock.pure(Spin(two_s), _basis_vector(two_s, 0))
        # mass beyond N is lambda^(2(N+1))
        if lam2 ** (n + 1) < tail_tol:
            break
        n += 1
    return PolarizationSector(weights, blocks, tail_tol=tail_tol, label=f"tmsv(r={r:.6g})")


# --------------------------------------------------------------------------- #
# Projection of full two-mode matrices
# --------------------------------------------------------------------------- #


def two_mode_pure(amplitudes: dict) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Dense projector for ``sum c_{nh,nv} |nh, nv>`` with explicit index list."""
    indices = sorted(amplitudes)
    v = np.array([amplitudes[i] for i in indices], dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj()), [(int(a), int(b)) for a, b in indices]


def project_polarization_sector(
    matrix, indices, tail_tol: float = DEFAULT_TAIL_TOL, min_weight: float = 1e-14
) -> PolarizationSector:
    """Keep only the photon-number-diagonal blocks of a two-mode density matrix.

    ``indices[i] = (n_H, n_V)`` labels row/column ``i``.  Fock states missing
    from the list are treated as unoccupied.  Blocks with weight below
    ``min_weight`` are dropped and counted as tail mass; a trace below one
    (a cutoff state) is likewise recorded as tail mass.

    Raises
    ------
    ValueError
        For non-Hermitian input, non-positive trace, trace above one, or
        duplicate / negative indices.
    """
    rho = np.asarray(matrix, dtype=complex)
    idx = [(int(a), int(b)) for a, b in indices]
    if rho.shape != (len(idx), len(idx)):
        raise ValueError("matrix shape does not match the index list")
    if len(set(idx)) != len(idx) or any(a < 0 or b < 0 for a, b in idx):
        raise ValueError("indices must be distinct non-negative (n_H, n_V) pairs")
    scale = max(1.0, np.abs(rho).max())
    if np.abs(rho - rho.conj().T).max() > 1e-10 * scale:
        raise ValueError("input density matrix is not Hermitian")
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValueError("input density matrix has non-positive trace")
    if tr > 1 + 1e-9:
        raise ValueError(f"input trace {tr} exceeds 1")

    groups: dict[int, list[tuple[int, int]]] = {}
    for pos, (nh, nv) in enumerate(idx):
        groups.setdefault(nh + nv, []).append((pos, nh))
    weights, blocks = {}, {}
    for n, members in sorted(groups.items()):
        block = np.zeros((n + 1, n + 1), dtype=complex)
        rows = np.array([n - nh for _, nh in members])  # descending m <=> descending n_H
        cols = np.array([p for p, _ in members])
        block[np.ix_(rows, rows)] = rho[np.ix_(cols, cols)]
        w = np.trace(block).real
        if w < min_weight:
            continue
        weights[n] = w
        blocks[n] = DensityBlock.from_matrix(Spin(n), block / w)
    tail = max(0.0, 1.0 - sum(weights.values()))
    return PolarizationSector(weights, blocks, tail_tol=max(tail_tol, tail), label="projected")


# --------------------------------------------------------------------------- #
# Declarative state specs
# --------------------------------------------------------------------------- #

STATE_SPEC_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["fock", "su2_coherent", "quadrature_coherent", "noon", "tmsv", "maximally_mixed", "raw"]},
        "tail_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "nh": {"type": "integer", "minimum": 0},
        "nv": {"type": "integer", "minimum": 0},
        "two_s": {"type": "integer", "minimum": 0, "maximum": 200},
        "theta": {"type": "number", "minimum": 0, "maximum": math.pi},
        "phi": {"type": "number"},
        "alpha_h": {"$ref": "#/$defs/complex"},
        "alpha_v": {"$ref": "#/$defs/complex"},
        "nbar": {"type": "number", "minimum": 0},
        "n": {"type": "integer", "minimum": 1},
        "r": {"type": "number", "minimum": 0},
        "indices": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
        "matrix": {"type": "array", "items": {"type": "array", "items": {"$ref": "#/$defs/complex"}}},
    },
    "allOf": [
        {"if": {"properties": {"family": {"const": "fock"}}}, "then": {"required": ["nh", "nv"]}},
        {"if": {"properties": {"family": {"const": "su2_coherent"}}}, "then": {"required": ["two_s", "theta", "phi"]}},
        {
            "if": {"properties": {"family": {"const": "quadrature_coherent"}}},
            "then": {"anyOf": [{"required": ["alpha_h", "alpha_v"]}, {"required": ["nbar"]}]},
        },
        {"if": {"properties": {"family": {"const": "noon"}}}, "then": {"required": ["n"]}},
        {"if": {"properties": {"family": {"const": "tmsv"}}}, "then": {"required": ["r"]}},
        {"if": {"properties": {"family": {"const": "maximally_mixed"}}}, "then": {"required": ["two_s"]}},
        {"if": {"properties": {"family": {"const": "raw"}}}, "then": {"required": ["indices", "matrix"]}},
    ],
    "$defs": {
        "complex": {
            "oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            ]
        }
    },
}


def _as_complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        return complex(x[0], x[1])
    return complex(x)


@dataclass(frozen=True)
class StateSpec:
    """Family tag plus parameters; ``build()`` returns the sector."""

    family: str
    params: dict = field(default_factory=dict)
    tail_tol: float = DEFAULT_TAIL_TOL

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpec":
        import jsonschema

        jsonschema.validate(data, STATE_SPEC_SCHEMA)
        params = {k: v for k, v in data.items() if k not in ("family", "tail_tol")}
        return cls(data["family"], params, float(data.get("tail_tol", DEFAULT_TAIL_TOL)))

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params, "tail_tol": self.tail_tol}

    def build(self) -> PolarizationSector:
        p = self.params
        if self.family == "fock":
            return fock_state(p["nh"], p["nv"])
        if self.family == "su2_coherent":
            return su2_coherent(Spin(p["two_s"]), p["theta"], p["phi"])
        if self.family == "quadrature_coherent":
            if "alpha_h" in p:
                ah, av = _as_complex(p["alpha_h"]), _as_complex(p.get("alpha_v", 0))
            else:
                # Nbar alone: horizontally polarized beam.
                ah, av = math.sqrt(p["nbar"]), 0.0
            return quadrature_coherent(ah, av, self.tail_tol)
        if self.family == "noon":
            return noon_state(p["n"])
        if self.family == "tmsv":
            return tmsv_state(p["r"], self.tail_tol)
        if self.family == "maximally_mixed":
            return maximally_mixed(Spin(p["two_s"]))
        if self.family == "raw":
            mat = np.array([[_as_complex(x) for x in row] for row in p["matrix"]])
            return project_polarization_sector(mat, p["indices"], self.tail_tol)
        raise ValueError(f"unknown family {self.family!r}")
