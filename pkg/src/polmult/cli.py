"""Command-line entry point: ``polmult <subcommand> ...``.

Exit codes: 0 success, 1 numerical failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

import jsonschema
import numpy as np

from . import io as pio
from .angular import Spin
from .multipoles import (
    decompose,
    degree_p,
    measure_report,
    p2_fock_closed_form,
    p2_minimizing_m,
    p2_minimum_closed_form,
)
from .quasi import localization_identity, localization_integral, quasi_grid, quasi_grid_weighted, sphere_grid
from .states import StateSpec, fock_state
from .tomography import (
    InversionError,
    canonical_directions,
    gram_matrix,
    reconstruct_exact,
    reconstruct_from_counts,
    simulate_plan,
)

DEFAULT_SEED = 12345
EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


def _default_seed() -> int:
    raw = os.environ.get("POLMULT_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return _seed(raw)
    except argparse.ArgumentTypeError as exc:
        raise InputError(f"POLMULT_SEED: {exc}") from None


def _seed(text) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits (0 <= seed < 2**64)")
    return value


def _positive_float(text) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc.msg})") from None


def _write(path: str | None, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_sector(path: str):
    return pio.sector_from_dict(_read_json(path))


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #


def cmd_state(args):
    if args.spec:
        data = _read_json(args.spec)
    else:
        if not args.family:
            raise InputError("give --family or --spec")
        data = {"family": args.family}
        for key in ("nh", "nv", "two_s", "theta", "phi", "nbar", "n", "r"):
            val = getattr(args, key)
            if val is not None:
                data[key] = val
        for key in ("alpha_h", "alpha_v"):
            val = getattr(args, key)
            if val is not None:
                z = complex(val.replace(" ", ""))
                data[key] = [z.real, z.imag]
        if args.tail is not None:
            data["tail_tol"] = args.tail
    try:
        spec = StateSpec.from_dict(data)
    except jsonschema.ValidationError as exc:
        raise InputError(f"state spec: {exc.message}") from None
    sector = spec.build()
    out = pio.sector_to_dict(sector)
    out["spec"] = spec.to_dict()
    _write(args.output, pio.dumps(out))


def cmd_decompose(args):
    table = decompose(_load_sector(args.state))
    _write(args.output, pio.dumps(pio.table_to_dict(table)))


def cmd_measures(args):
    if args.k_max < 1:
        raise InputError("--k-max must be at least 1")
    table = decompose(_load_sector(args.state))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = measure_report(table, args.k_max)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write(args.output, report.to_json() + "\n" if args.format == "json" else report.to_csv())


def _side_by_side(rec, truth) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["two_s", "K", "q", "true_re", "true_im", "rec_re", "rec_im", "se_re", "se_im"])
    for two_s, arr in rec.table.coeffs.items():
        se = rec.stderr[two_s]
        for k in range(rec.l_max.get(two_s, 0) + 1):
            for q in range(-k, k + 1):
                t = truth.get(two_s / 2, k, q) if truth is not None and two_s in truth.coeffs else None
                z, e = arr[k, q + two_s], se[k, q + two_s]
                writer.writerow([
                    two_s, k, q,
                    "" if t is None else f"{t.real:.6f}", "" if t is None else f"{t.imag:.6f}",
                    f"{z.real:.6f}", f"{z.imag:.6f}", f"{e.real:.6f}", f"{e.imag:.6f}",
                ])
    return buf.getvalue()


def cmd_tomo(args):
    directions = pio.directions_from_dict(_read_json(args.directions)) if args.directions else None
    if args.counts and args.shots is not None:
        raise InputError("--shots applies to a state file, not a counts file")
    if not args.state and not args.counts:
        raise InputError("give --state (exact or sampled mode) or --counts (ingest mode)")
    if args.l_max < 1:
        raise InputError("--l-max must be at least 1")
    truth = None
    sector = _load_sector(args.state) if args.state else None
    if sector is not None:
        truth = decompose(sector)
        too_high = [k for k in sector.blocks if 0 < k < args.l_max]
        if too_high and args.strict:
            raise InputError(f"--l-max {args.l_max} exceeds 2S of blocks {too_high}")
    seed = args.seed if args.seed is not None else _default_seed()
    if args.counts:
        records = pio.counts_from_jsonl(_read_text(args.counts))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rec = reconstruct_from_counts(records, args.l_max, directions)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    elif args.shots is not None:
        if args.shots < 1:
            raise InputError("--shots must be positive")
        records = simulate_plan(sector, args.l_max, args.shots, seed, directions)
        if args.counts_out:
            _write(args.counts_out, pio.counts_to_jsonl(records))
        rec = reconstruct_from_counts(records, args.l_max, directions, seed=seed, mode="sampled")
    else:
        rec = reconstruct_exact(sector, args.l_max, directions)
    report = rec.to_dict()
    _write(args.output, pio.dumps(report))
    side = _side_by_side(rec, truth)
    if args.compare:
        _write(args.compare, side)
    elif args.output not in (None, "-"):
        sys.stdout.write(side)


def cmd_quasi(args):
    sector = _load_sector(args.state)
    table = decompose(sector)
    top = sector.max_two_s
    band = args.band_limit if args.band_limit is not None else max(2 * top, 1)
    if band < 1:
        raise InputError("--band-limit must be positive")
    grid = sphere_grid(band)
    if args.two_s is None and len(sector.blocks) == 1:
        args.two_s = top
    if args.two_s is not None:
        if args.two_s not in sector.blocks:
            raise InputError(f"no block with two_s={args.two_s}")
        dist = quasi_grid(table, Spin(args.two_s), args.r, grid)
        if band >= 2 * args.two_s:
            integral = localization_integral(table, Spin(args.two_s), args.r, grid)
            if not integral > 0:
                raise ArithmeticError(f"non-positive localization integral {integral}")
            dist.header.update({
                "localization_integral": integral,
                "localization_identity": localization_identity(table, Spin(args.two_s), args.r),
                "sigma": 1.0 / integral,
            })
    else:
        dist = quasi_grid_weighted(table, args.r, grid)
    _write(args.output, dist.to_csv())


def cmd_directions(args):
    sets = {}
    meta = {}
    for order in args.order:
        if order < 1:
            raise InputError("orders must be at least 1")
        sets[order] = canonical_directions(order)
        meta[str(order)] = {
            "min_line_angle_deg": math.degrees(sets[order].min_line_angle()),
            "condition": float(np.linalg.cond(gram_matrix(order, sets[order]))),
        }
    out = pio.directions_to_dict(sets)
    for key, extra in meta.items():
        out["orders"][key].update(extra)
    _write(args.output, pio.dumps(out))


def cmd_p2_surface(args):
    if args.s_max < 1:
        raise InputError("--s-max must be at least 1")
    two_max = int(round(2 * args.s_max))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["S", "m", "P2", "P2_squared", "closed_form", "envelope", "m_opt", "at_min"])
    for two_s in range(2, two_max + 1):
        sp = Spin(two_s)
        rows = []
        for m2 in sp.m2_values():
            n_h = (two_s + m2) // 2
            p2 = degree_p(decompose(fock_state(n_h, two_s - n_h)), 2)
            rows.append((m2, p2, p2_fock_closed_form(sp, m2 / 2)))
        lowest = min(r[2] for r in rows)
        for m2, p2, closed in rows:
            writer.writerow([
                _half(two_s), _half(m2), repr(p2), repr(p2 * p2), repr(closed),
                repr(p2_minimum_closed_form(sp)), repr(p2_minimizing_m(sp)), int(closed <= lowest + 1e-12),
            ])
    _write(args.output, buf.getvalue())


def _half(n2: int) -> str:
    return str(n2 // 2) if n2 % 2 == 0 else f"{n2}/2"


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polmult", description="Polarization multipoles, measures and Stokes tomography.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("state", help="build a polarization sector")
    s.add_argument("--spec", help="JSON state spec (instead of flags)")
    s.add_argument("--family", choices=["fock", "su2_coherent", "quadrature_coherent", "noon", "tmsv", "maximally_mixed"])
    s.add_argument("--nh", type=int)
    s.add_argument("--nv", type=int)
    s.add_argument("--two-s", dest="two_s", type=int)
    s.add_argument("--theta", type=float)
    s.add_argument("--phi", type=float)
    s.add_argument("--alpha-h", dest="alpha_h", help="complex amplitude, e.g. 1+0.5j")
    s.add_argument("--alpha-v", dest="alpha_v")
    s.add_argument("--nbar", type=float)
    s.add_argument("--n", type=int, help="NOON photon number")
    s.add_argument("--r", type=float, help="squeezing parameter")
    s.add_argument("--tail", type=_positive_float, help="truncation tolerance on dropped probability")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_state)

    s = sub.add_parser("decompose", help="state multipoles of every block")
    s.add_argument("state")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("measures", help="W_K, A_K and P_K report")
    s.add_argument("state")
    s.add_argument("--k-max", dest="k_max", type=int, required=True)
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_measures)

    s = sub.add_parser("tomo", help="recursive multipole tomography")
    s.add_argument("--state", help="sector file (exact mode, or sampled with --shots)")
    s.add_argument("--counts", help="count records, JSON lines (ingest mode)")
    s.add_argument("--l-max", dest="l_max", type=int, required=True)
    s.add_argument("--directions", help="per-order direction file")
    s.add_argument("--shots", type=int, help="events per direction (sampled mode)")
    s.add_argument("--seed", type=_seed, help="default: $POLMULT_SEED or %d" % DEFAULT_SEED)
    s.add_argument("--counts-out", dest="counts_out", help="write simulated counts (sampled mode)")
    s.add_argument("--compare", help="write the true-vs-reconstructed CSV here")
    s.add_argument("--strict", action="store_true", help="reject l_max above 2S of any block")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_tomo)

    s = sub.add_parser("quasi", help="quasiprobability on a sphere grid")
    s.add_argument("state")
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--band-limit", dest="band_limit", type=int)
    s.add_argument("--two-s", dest="two_s", type=int, help="block to evaluate (default: weighted sum over blocks)")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_quasi)

    s = sub.add_parser("directions", help="canonical measurement directions")
    s.add_argument("--order", type=int, nargs="+", required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_directions)

    s = sub.add_parser("p2-surface", help="second-order degree for all |S, m>")
    s.add_argument("--s-max", dest="s_max", type=float, required=True)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_p2_surface)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        args.func(args)
    except (InversionError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
