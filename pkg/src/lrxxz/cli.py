"""Command line entry point: ``lrxxz ground|sweep|oracle|fit|validate``.

Exit status: 0 success, 1 any other failure, 2 configuration error,
3 an unconverged run, 4 an oracle mismatch.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DerivativeScan,
    critical_point,
    fit_exponential_decay,
    fit_kbi_fine_grained,
    fit_log_scaling,
    fit_piecewise_distribution,
    fit_power_law,
    format_piecewise_row,
    proportionality_check,
)
from .config import ConfigError, load_config, worker_cap
from .csvio import SchemaError, read_csv, validate_tree, write_csv
from .entanglement import NOISE_FLOOR_MIN, ConcurrenceProfile, TotalsRecord, noise_floor
from .runner import EXIT_CONFIG, EXIT_GENERIC, EXIT_OK, RunDirectoryExists, execute

FITS = ("exp_decay", "power_law", "log_scaling", "kbi_fine", "piecewise", "proportionality")
FIT_INPUT = {
    "exp_decay": "profile",
    "power_law": "profile",
    "log_scaling": "scan",
    "kbi_fine": "totals",
    "piecewise": "totals",
    "proportionality": "totals",
}

log = logging.getLogger("lrxxz")


def _run_args(p):
    p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
    p.add_argument("--preset", choices=("desk", "paper"), help="base DMRG settings")
    p.add_argument("--workers", type=int, default=None, help="parallel points (cap: LRXXZ_MAX_WORKERS)")
    p.add_argument("--seed", type=int, default=None, help="override dmrg.seed")
    p.add_argument("--resume", metavar="RUN_ID", default=None, help="continue an interrupted run")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lrxxz", description="Long-range XXZ chain ground states and entanglement")
    ap.add_argument("--version", action="version", version=f"lrxxz {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("ground", help="solve the configured model (every sweep point if present)")
    _run_args(g)
    g.add_argument("--oracle-check", action="store_true", help="compare against exact diagonalization")

    s = sub.add_parser("sweep", help="run a parameter sweep; the config needs a [sweep] block")
    _run_args(s)
    s.add_argument("--oracle-check", action="store_true")

    o = sub.add_parser("oracle", help="ground state plus exact-diagonalization comparison")
    _run_args(o)

    f = sub.add_parser("fit", help="fit a model to CSV outputs")
    f.add_argument("name", choices=FITS)
    f.add_argument("--input", required=True, type=Path, action="append", help="input CSV (repeatable)")
    f.add_argument("--output", type=Path, default=None, help="directory for the report (default: beside the input)")
    f.add_argument("--noise-floor", type=float, default=None,
                   help="C_d noise floor (default: from a sibling energy.csv, else 1e-12)")
    f.add_argument("--c1", type=float, default=None, help="C_1 for power_law (default: the d=1 row)")
    f.add_argument("--j-star", type=float, default=None, help="critical coupling for log_scaling")
    f.add_argument("--window", type=int, default=2, help="excluded half-width in grid steps")
    f.add_argument("--side", choices=("both", "below", "above"), default="both")
    f.add_argument("--label", default=None, help="row label for the piecewise summary")

    v = sub.add_parser("validate", help="check CSV schemas and manifest hashes")
    v.add_argument("paths", nargs="+", type=Path)
    return ap


# ---------------------------------------------------------------------------
# run commands
# ---------------------------------------------------------------------------


def _cmd_run(args, command: str) -> int:
    cfg = load_config(args.config, preset=args.preset, seed=args.seed)
    if args.resume is not None:
        cfg = dataclasses.replace(cfg, run_id=args.resume)
    if command == "sweep" and cfg.sweep is None:
        raise ConfigError(f"{args.config}: sweep needs a [sweep] block")
    oracle = command == "oracle" or getattr(args, "oracle_check", False)
    code, results = execute(cfg, workers=worker_cap(args.workers), resume=args.resume is not None,
                            oracle=oracle, command=command)
    for r in results:
        line = f"point {r.index}: {r.status}"
        if not math.isnan(r.energy):
            line += f"  E = {r.energy:.12g}"
        if r.oracle_ok is not None:
            line += "  oracle " + ("ok" if r.oracle_ok else "MISMATCH")
        if r.error:
            line += f"  ({r.error})"
        print(line)
    print(f"outputs in {cfg.run_dir}")
    return code


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


def _load(paths, kind):
    rows = []
    for p in paths:
        _, r = read_csv(p, kind)
        rows.extend(r)
    return rows


def _floor_for(path: Path, override):
    if override is not None:
        return override
    sib = path.parent / "energy.csv"
    if sib.exists():
        _, rows = read_csv(sib, "energy")
        if rows and not math.isnan(rows[0]["max_truncation_error"]):
            return noise_floor(rows[0]["max_truncation_error"])
    return NOISE_FLOOR_MIN


def _records(rows):
    out = []
    for r in rows:
        if any(isinstance(r[k], float) and math.isnan(r[k]) for k in ("n", "c_total", "tau_total")):
            continue  # gap left by a failed sweep point
        out.append(TotalsRecord(int(r["n"]), r["c_total"], r["tau_total"], int(r["xi"]), r["c1"]))
    return out


def run_fit(args):
    kind = FIT_INPUT[args.name]
    rows = _load(args.input, kind)
    name = args.name
    if kind == "profile":
        p = ConcurrenceProfile(
            [r["d"] for r in rows], [r["c_d"] for r in rows], [r["spread"] for r in rows],
            [r["n_pairs"] for r in rows], "csv", 0, 1e-9, _floor_for(args.input[0], args.noise_floor),
        )
        if name == "exp_decay":
            res = fit_exponential_decay(p)
        else:
            res = fit_power_law(p, args.c1 if args.c1 is not None else p.c1)
    elif kind == "scan":
        js = sorted({r["j_xy"] for r in rows})
        ds = sorted({r["d"] for r in rows})
        cell = {(r["j_xy"], r["d"]): r for r in rows}
        try:
            c = np.array([[cell[(j, d)]["c_d"] for d in ds] for j in js])
            dv = np.array([[cell[(j, d)]["dc_d_dj"] for d in ds] for j in js])
        except KeyError as exc:
            raise SchemaError(f"scan is missing the (j_xy, d) cell {exc.args[0]}") from None
        j = np.array(js)
        h = float((j[-1] - j[0]) / (j.size - 1))
        flags = np.zeros(j.size, dtype=bool)
        flags[[0, -1]] = True
        scan = DerivativeScan(j, np.array(ds), c, dv, h, flags)
        j_star = args.j_star if args.j_star is not None else critical_point(scan, d=ds[0])[0]
        res = fit_log_scaling(scan, j_star, window=args.window, side=args.side)
    else:
        recs = _records(rows)
        if name == "kbi_fine":
            res = fit_kbi_fine_grained(recs)
        elif name == "piecewise":
            res = fit_piecewise_distribution(recs)
        else:
            res = proportionality_check(recs, [r.c1 for r in recs])
    out_dir = args.output or args.input[0].parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / f"fit_{name}.csv", "fits", res.rows())
    text = res.report()
    if name == "piecewise":
        text += "\n" + format_piecewise_row(args.label or "fit", res)
    (out_dir / f"fit_{name}.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def run_validate(args) -> int:
    problems = []
    for p in args.paths:
        if not p.exists():
            problems.append(f"{p}: no such file or directory")
            continue
        problems.extend(validate_tree(p))
    for msg in problems:
        print(msg, file=sys.stderr)
    if not problems:
        print("all outputs valid")
    return EXIT_OK if not problems else EXIT_GENERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("ground", "sweep", "oracle"):
            return _cmd_run(args, args.command)
        if args.command == "fit":
            return run_fit(args)
        return run_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunDirectoryExists as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERIC


if __name__ == "__main__":
    sys.exit(main())
