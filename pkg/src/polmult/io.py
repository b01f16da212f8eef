"""File formats: sectors, multipole tables, direction sets, counts and moments.

Complex numbers are ``[re, im]`` pairs, matrices are row-major, and every
block lists its doubled magnetic numbers ``m2`` so files are self-describing.
"""

from __future__ import annotations

import csv
import io
import json

import jsonschema
import numpy as np

from .angular import SphericalDirection, Spin
from .multipoles import MultipoleTable
from .states import DensityBlock, PolarizationSector
from .tomography import CountRecord, DirectionSet, MomentRecord

__all__ = [
    "FormatError",
    "sector_to_dict",
    "sector_from_dict",
    "table_to_dict",
    "table_from_dict",
    "directions_to_dict",
    "directions_from_dict",
    "counts_to_jsonl",
    "counts_from_jsonl",
    "moments_to_csv",
    "moments_from_csv",
    "dumps",
]


class FormatError(ValueError):
    """Input file does not match its schema."""


_COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SECTOR_SCHEMA = {
    "type": "object",
    "required": ["format", "blocks"],
    "properties": {
        "format": {"const": "polmult.sector"},
        "label": {"type": "string"},
        "tail_tol": {"type": "number", "exclusiveMinimum": 0},
        "blocks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["two_s", "weight", "m2", "matrix"],
                "properties": {
                    "two_s": {"type": "integer", "minimum": 0},
                    "weight": {"type": "number", "exclusiveMinimum": 0},
                    "m2": {"type": "array", "items": {"type": "integer"}},
                    "matrix": {"type": "array", "items": {"type": "array", "items": _COMPLEX}},
                },
            },
        },
    },
}

TABLE_SCHEMA = {
    "type": "object",
    "required": ["format", "blocks"],
    "properties": {
        "format": {"const": "polmult.multipoles"},
        "tail_mass": {"type": "number", "minimum": 0},
        "blocks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["two_s", "weight", "entries"],
                "properties": {
                    "two_s": {"type": "integer", "minimum": 0},
                    "weight": {"type": "number", "minimum": 0},
                    "entries": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["K", "q", "value"],
                            "properties": {"K": {"type": "integer"}, "q": {"type": "integer"}, "value": _COMPLEX},
                        },
                    },
                },
            },
        },
    },
}

_DIRECTION = {
    "type": "object",
    "required": ["theta", "phi"],
    "properties": {"theta": {"type": "number"}, "phi": {"type": "number"}},
}

_DIRECTION_SET = {
    "type": "object",
    "required": ["directions"],
    "properties": {"label": {"type": "string"}, "directions": {"type": "array", "minItems": 1, "items": _DIRECTION}},
}

DIRECTIONS_SCHEMA = {
    "type": "object",
    "required": ["orders"],
    "properties": {"orders": {"type": "object", "patternProperties": {"^[1-9][0-9]*$": _DIRECTION_SET}, "additionalProperties": False}},
}

COUNT_SCHEMA = {
    "type": "object",
    "required": ["direction", "spin2", "counts"],
    "properties": {
        "direction": _DIRECTION,
        "spin2": {"type": "integer", "minimum": 0},
        "counts": {"type": "object", "patternProperties": {"^-?[0-9]+$": {"type": "integer", "minimum": 0}}, "additionalProperties": False},
    },
}


def _validate(data, schema, what: str):
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise FormatError(f"invalid {what} at '{path}': {exc.message}") from None


def _pair(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def dumps(data) -> str:
    """Deterministic JSON text (sorted keys, trailing newline)."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- #
# Sectors
# --------------------------------------------------------------------------- #


def sector_to_dict(sector: PolarizationSector) -> dict:
    blocks = []
    for sp, w, blk in sector:
        blocks.append({
            "two_s": sp.two_s,
            "weight": w,
            "m2": [int(x) for x in sp.m2_values()],
            "matrix": [[_pair(z) for z in row] for row in blk.matrix],
        })
    return {
        "format": "polmult.sector",
        "label": sector.label,
        "tail_tol": sector.tail_tol,
        "tail_mass": sector.tail_mass,
        "blocks": blocks,
    }


def sector_from_dict(data: dict) -> PolarizationSector:
    _validate(data, SECTOR_SCHEMA, "sector")
    weights, blocks = {}, {}
    for b in data["blocks"]:
        sp = Spin(b["two_s"])
        if b["m2"] != [int(x) for x in sp.m2_values()]:
            raise FormatError(f"block two_s={sp.two_s}: m2 list must be {list(sp.m2_values())}")
        mat = np.array([[complex(*z) for z in row] for row in b["matrix"]], dtype=complex)
        if mat.shape != (sp.dim, sp.dim):
            raise FormatError(f"block two_s={sp.two_s}: matrix shape {mat.shape}")
        if sp.two_s in blocks:
            raise FormatError(f"duplicate block two_s={sp.two_s}")
        weights[sp.two_s] = b["weight"]
        blocks[sp.two_s] = DensityBlock(sp, mat)
    return PolarizationSector(weights, blocks, data.get("tail_tol", 1e-10), data.get("label", ""))


# --------------------------------------------------------------------------- #
# Multipole tables
# --------------------------------------------------------------------------- #


def table_to_dict(table: MultipoleTable) -> dict:
    blocks = []
    for two_s, arr in table.coeffs.items():
        entries = [
            {"K": k, "q": q, "value": _pair(arr[k, q + two_s])}
            for k in range(two_s + 1)
            for q in range(-k, k + 1)
        ]
        blocks.append({"two_s": two_s, "weight": table.weights[two_s], "entries": entries})
    return {"format": "polmult.multipoles", "tail_mass": table.tail_mass, "blocks": blocks}


def table_from_dict(data: dict) -> MultipoleTable:
    _validate(data, TABLE_SCHEMA, "multipole table")
    coeffs, weights = {}, {}
    for b in data["blocks"]:
        n = b["two_s"]
        arr = np.zeros((n + 1, 2 * n + 1), dtype=complex)
        for e in b["entries"]:
            k, q = e["K"], e["q"]
            if not (0 <= k <= n and abs(q) <= k):
                raise FormatError(f"block two_s={n}: invalid entry K={k}, q={q}")
            arr[k, q + n] = complex(*e["value"])
        coeffs[n], weights[n] = arr, b["weight"]
    return MultipoleTable(coeffs, weights, data.get("tail_mass", 0.0))


# --------------------------------------------------------------------------- #
# Directions
# --------------------------------------------------------------------------- #


def directions_to_dict(sets: dict) -> dict:
    """``{L: DirectionSet}`` to the per-order file layout."""
    return {"orders": {str(k): v.to_dict() for k, v in sorted(sets.items())}}


def directions_from_dict(data: dict) -> dict:
    _validate(data, DIRECTIONS_SCHEMA, "direction file")
    try:
        return {int(k): DirectionSet.from_dict(v) for k, v in data["orders"].items()}
    except ValueError as exc:
        raise FormatError(f"invalid direction file: {exc}") from None


# --------------------------------------------------------------------------- #
# Counts and moments
# --------------------------------------------------------------------------- #


def counts_to_jsonl(records) -> str:
    lines = []
    for r in records:
        lines.append(json.dumps({
            "direction": {"theta": r.direction.theta, "phi": r.direction.phi},
            "spin2": r.two_s,
            "counts": {str(m2): c for m2, c in r.counts.items()},
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def counts_from_jsonl(text: str) -> list[CountRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"counts line {lineno}: {exc.msg}") from None
        _validate(data, COUNT_SCHEMA, f"counts line {lineno}")
        try:
            d = SphericalDirection(data["direction"]["theta"], data["direction"]["phi"])
            records.append(CountRecord(d, data["spin2"], {int(k): v for k, v in data["counts"].items()}))
        except ValueError as exc:
            raise FormatError(f"counts line {lineno}: {exc}") from None
    if not records:
        raise FormatError("counts file is empty")
    return records


MOMENT_COLUMNS = ["theta", "phi", "ell", "mu", "stderr", "shots"]


def moments_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MOMENT_COLUMNS)
    for r in records:
        writer.writerow([repr(r.direction.theta), repr(r.direction.phi), r.ell, repr(r.value), repr(r.stderr), r.shots])
    return buf.getvalue()


def moments_from_csv(text: str) -> list[MomentRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != MOMENT_COLUMNS:
        raise FormatError(f"moment CSV must have columns {MOMENT_COLUMNS}")
    out = []
    for row in reader:
        try:
            out.append(MomentRecord(
                SphericalDirection(float(row["theta"]), float(row["phi"])),
                int(row["ell"]), float(row["mu"]), float(row["stderr"]), int(row["shots"]),
            ))
        except ValueError as exc:
            raise FormatError(f"moment CSV line {reader.line_num}: {exc}") from None
    return out
