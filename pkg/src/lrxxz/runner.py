"""Batch runs: single ground states, parameter sweeps and oracle comparisons.

Points are solved in worker processes; every CSV is written by the parent
process, in sweep-value order, once the results are in.
"""
from __future__ import annotations

import json
import logging
import math
import shutil
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import finite_differences
from .config import ExperimentConfig
from .csvio import now, write_csv, write_manifest
from .dmrg import DmrgConfig, solve
from .entanglement import profile, totals
from .mpo import ModelSpec

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_ORACLE = 4

ORACLE_ENERGY_RTOL = 1e-8
ORACLE_CONCURRENCE_ATOL = 1e-6
ORACLE_MAX_SITES = 14


class RunDirectoryExists(RuntimeError):
    pass


@dataclass
class PointResult:
    index: int
    spec: dict
    status: str  # "ok", "unconverged" or "failed"
    energy: float = math.nan
    energy_per_site: float = math.nan
    converged: bool = False
    sweeps_used: int = 0
    max_truncation_error: float = math.nan
    profile_rows: list = field(default_factory=list)
    totals_row: list = field(default_factory=list)
    oracle_rows: list = field(default_factory=list)
    oracle_ok: Optional[bool] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PointResult":
        return cls(**json.loads(text))


def _oracle(spec: ModelSpec, res, d_max: int, discard: int) -> tuple:
    from .ed import ed_ground

    gs = ed_ground(spec, pin=res.pin)
    e_tol = ORACLE_ENERGY_RTOL * max(1.0, abs(gs.energy))
    diff = abs(float(res.energy) - gs.energy)
    rows = [["energy", float(res.energy), gs.energy, diff, e_tol, bool(diff <= e_tol)]]
    ok = rows[0][-1]
    if gs.degenerate:
        log.warning("ED ground state is degenerate (gap %.2e); concurrences not compared", gs.gap)
        rows.append(["degenerate_gap", math.nan, float(gs.gap), math.nan, math.nan, True])
        return rows, ok
    mine = profile(res, d_max, discard=discard)
    ref = profile(gs, d_max, discard=discard)
    for d, a, b in zip(mine.distances, mine.values, ref.values):
        good = bool(abs(a - b) <= ORACLE_CONCURRENCE_ATOL)
        ok = ok and good
        rows.append([f"c_{d}", float(a), float(b), float(abs(a - b)), ORACLE_CONCURRENCE_ATOL, good])
    return rows, ok


def compute_point(index: int, spec: ModelSpec, dmrg: DmrgConfig, d_max: int, discard: int,
                  threshold: float, point_dir: Optional[Path], resume: bool, oracle: bool) -> PointResult:
    """Solve, measure and optionally cross-check one model point."""
    out = PointResult(index, spec.to_dict(), "failed")
    try:
        kwargs = {}
        if not spec.infinite and point_dir is not None:
            kwargs = {"checkpoint": point_dir / "checkpoint", "resume": resume}
        res = solve(spec, dmrg, **kwargs)
        prof = profile(res, d_max, discard=discard, threshold=threshold)
        rec = totals(prof)
        out.energy = float(res.energy)
        out.energy_per_site = float(res.energy) if spec.infinite else float(res.energy) / spec.length
        out.converged = bool(res.converged)
        out.sweeps_used = int(res.sweeps_used)
        out.max_truncation_error = float(res.max_truncation_error)
        out.profile_rows = [[int(d), float(c), float(s), int(k)] for d, c, s, k in
                            zip(prof.distances, prof.values, prof.spread, prof.n_pairs)]
        out.totals_row = [rec.n, rec.total_concurrence, rec.total_two_tangle, rec.xi, rec.c1]
        if oracle:
            if spec.infinite or spec.length > ORACLE_MAX_SITES:
                raise ValueError(f"oracle check needs a finite chain with N <= {ORACLE_MAX_SITES}")
            out.oracle_rows, out.oracle_ok = _oracle(spec, res, d_max, discard)
        out.status = "ok" if out.converged else "unconverged"
    except Exception as exc:  # recorded per point, the sweep carries on
        log.exception("point %d failed", index)
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _point_job(args):
    return compute_point(*args)


def _write_point(d: Path, r: PointResult, oracle: bool) -> None:
    write_csv(d / "energy.csv", "energy",
              [[r.energy, r.energy_per_site, r.converged, r.sweeps_used, r.max_truncation_error]])
    write_csv(d / "profile.csv", "profile", r.profile_rows)
    write_csv(d / "totals.csv", "totals", [r.totals_row] if r.totals_row else [])
    if oracle:
        write_csv(d / "oracle.csv", "oracle", r.oracle_rows)


def _nan_totals():
    return [math.nan] * 5


def _write_scan(path: Path, values, results) -> bool:
    if len(values) < 3 or any(not r.profile_rows for r in results):
        return False
    j = np.asarray(values, dtype=float)
    try:
        ds = [row[0] for row in results[0].profile_rows]
        c = np.array([[row[1] for row in r.profile_rows] for r in results])
        deriv, _, _ = finite_differences(j, c)
    except ValueError as exc:
        log.info("no scan.csv: %s", exc)
        return False
    rows = [[float(j[a]), int(ds[b]), float(c[a, b]), float(deriv[a, b])]
            for a in range(j.size) for b in range(len(ds))]
    write_csv(path, "scan", rows)
    return True


def prepare_run_dir(cfg: ExperimentConfig, resume: bool) -> Path:
    run_dir = cfg.run_dir
    if run_dir.exists() and any(run_dir.iterdir()) and not resume:
        raise RunDirectoryExists(f"{run_dir} already holds outputs; pass --resume {cfg.run_id} or pick a new run_id")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.toml").write_text(cfg.source or "")
    return run_dir


def execute(cfg: ExperimentConfig, workers: int = 1, resume: bool = False, oracle: bool = False,
            command: str = "ground") -> tuple:
    """Run every point of ``cfg``; returns (exit code, list of PointResult)."""
    started = now()
    run_dir = prepare_run_dir(cfg, resume)
    specs = cfg.points()
    sweep = cfg.sweep is not None
    dirs = [run_dir / f"point_{k:03d}" if sweep else run_dir for k in range(len(specs))]

    results: list = [None] * len(specs)
    jobs = []
    for k, (spec, d) in enumerate(zip(specs, dirs)):
        done = d / "result.json"
        if resume and done.exists():
            prev = PointResult.from_json(done.read_text())
            if prev.status != "failed":
                results[k] = prev
                log.info("point %d already complete, skipped", k)
                continue
        d.mkdir(parents=True, exist_ok=True)
        m = cfg.measure
        jobs.append((k, spec, cfg.dmrg, m.resolve_d_max(spec), m.discard, m.threshold, d, resume, oracle))

    def record(r: PointResult):
        # the parent is the only writer; results land as they complete so an
        # interrupted sweep can be resumed
        results[r.index] = r
        d = dirs[r.index]
        (d / "result.json").write_text(r.to_json())
        shutil.rmtree(d / "checkpoint", ignore_errors=True)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_point_job, j) for j in jobs]
            for fut in as_completed(futures):
                record(fut.result())
    else:
        for j in jobs:
            record(_point_job(j))

    for r, d in zip(results, dirs):
        _write_point(d, r, oracle)

    if sweep:
        key = cfg.sweep.parameter
        order = sorted(range(len(specs)), key=lambda k: cfg.sweep.values[k])
        write_csv(run_dir / "points.csv", "points", [
            [k, key, cfg.sweep.values[k], results[k].status, results[k].converged, results[k].energy]
            for k in order
        ])
        write_csv(run_dir / "totals.csv", "totals",
                  [results[k].totals_row or _nan_totals() for k in order])
        if key == "j_xy":
            _write_scan(run_dir / "scan.csv", [cfg.sweep.values[k] for k in order], [results[k] for k in order])

    code = EXIT_OK
    if any(r.status == "failed" for r in results):
        code = EXIT_GENERIC
    elif any(r.status == "unconverged" for r in results):
        code = EXIT_CONVERGENCE
    elif oracle and not all(r.oracle_ok for r in results):
        code = EXIT_ORACLE
    runs = [{"index": r.index, "status": r.status, "converged": r.converged, "oracle_ok": r.oracle_ok,
             "error": r.error, "model": r.spec} for r in results]
    write_manifest(run_dir, cfg.to_dict(), cfg.source, started, runs, command, code)
    return code, results
