"""CSV schemas, writers, readers and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

INTERFACE_VERSION = "1"

SCHEMAS = {
    "profile": ("d", "c_d", "spread", "n_pairs"),
    "totals": ("n", "c_total", "tau_total", "xi", "c1"),
    "scan": ("j_xy", "d", "c_d", "dc_d_dj"),
    "fits": ("name", "coef", "value", "stderr_proxy", "r_squared"),
    "energy": ("energy", "energy_per_site", "converged", "sweeps_used", "max_truncation_error"),
    "points": ("index", "parameter", "value", "status", "converged", "energy"),
    "oracle": ("quantity", "dmrg", "ed", "abs_diff", "tolerance", "ok"),
}

_INT_COLS = {"d", "n_pairs", "n", "xi", "index", "sweeps_used"}
_BOOL_COLS = {"converged", "ok"}
_TEXT_COLS = {"name", "coef", "parameter", "status", "quantity"}


class SchemaError(ValueError):
    pass


def fmt(x) -> str:
    """17 significant digits for floats (exact round trip), plain ints and bools."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def render(kind: str, rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCHEMAS[kind])
    for r in rows:
        if len(r) != len(SCHEMAS[kind]):
            raise ValueError(f"{kind} row has {len(r)} fields, schema has {len(SCHEMAS[kind])}")
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, kind: str, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(render(kind, rows))
    tmp.replace(path)
    return path


def _parse(col: str, raw: str, where: str):
    if col in _TEXT_COLS:
        return raw
    if col in _BOOL_COLS:
        if raw not in ("true", "false"):
            raise SchemaError(f"{where}: column {col!r} expects true/false, got {raw!r}")
        return raw == "true"
    if col in _INT_COLS:
        if raw == "nan":
            return float("nan")
        try:
            return int(raw)
        except ValueError:
            raise SchemaError(f"{where}: column {col!r} expects an integer, got {raw!r}") from None
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(f"{where}: column {col!r} expects a number, got {raw!r}") from None


def read_csv(path, kind: Optional[str] = None):
    """Parse a CSV written by this package. Returns (kind, list of row dicts)."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = tuple(rows[0])
    if kind is None:
        matches = [k for k, cols in SCHEMAS.items() if cols == header]
        if not matches:
            raise SchemaError(f"{path}: unrecognized header {','.join(header)}")
        kind = matches[0]
    elif header != SCHEMAS[kind]:
        want = SCHEMAS[kind]
        missing = [c for c in want if c not in header]
        extra = [c for c in header if c not in want]
        detail = []
        if missing:
            detail.append("missing column(s) " + ", ".join(missing))
        if extra:
            detail.append("unexpected column(s) " + ", ".join(extra))
        if not detail:
            detail.append("columns out of order")
        raise SchemaError(f"{path}: not a {kind} file: " + "; ".join(detail))
    out = []
    cols = SCHEMAS[kind]
    for lineno, r in enumerate(rows[1:], start=2):
        where = f"{path}:{lineno}"
        if len(r) != len(cols):
            raise SchemaError(f"{where}: {len(r)} fields, expected {len(cols)}")
        out.append({c: _parse(c, v, where) for c, v in zip(cols, r)})
    return kind, out


def _check_rows(kind: str, rows, path) -> None:
    for k, r in enumerate(rows, start=2):
        where = f"{path}:{k}"
        if kind == "profile":
            if r["d"] < 1 or not 0.0 <= r["c_d"] <= 1.0 or r["spread"] < 0 or r["n_pairs"] < 1:
                raise SchemaError(f"{where}: profile values out of range")
        elif kind == "totals":
            if not math.isnan(r["c_total"]) and r["tau_total"] > r["c_total"] + 1e-12:
                raise SchemaError(f"{where}: tau_total exceeds c_total")
        elif kind == "scan":
            if r["d"] < 1 or not 0.0 <= r["c_d"] <= 1.0:
                raise SchemaError(f"{where}: scan values out of range")
        elif kind == "fits":
            if not math.isnan(r["r_squared"]) and r["r_squared"] > 1.0 + 1e-12:
                raise SchemaError(f"{where}: r_squared above 1")
    if kind in ("profile",):
        ds = [r["d"] for r in rows]
        if ds != sorted(set(ds)):
            raise SchemaError(f"{path}: distances not strictly increasing")


def validate_file(path) -> str:
    kind, rows = read_csv(path)
    _check_rows(kind, rows, path)
    return kind


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(run_dir, config: dict, config_text: Optional[str], started: str, runs: list,
                   command: str, exit_code: int) -> Path:
    """Manifest with a hash for every file under ``run_dir`` except itself."""
    from . import __version__
    from ._accel import backend

    run_dir = Path(run_dir)
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json" and not p.name.endswith(".tmp"):
            files[p.relative_to(run_dir).as_posix()] = sha256(p)
    doc = {
        "tool": "lrxxz",
        "tool_version": __version__,
        "interface_version": INTERFACE_VERSION,
        "kernel_backend": backend(),
        "command": command,
        "exit_code": exit_code,
        "started": started,
        "finished": now(),
        "config": config,
        "config_text": config_text,
        "runs": runs,
        "files": files,
    }
    path = run_dir / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str))
    os.replace(tmp, path)
    return path


def validate_tree(root) -> list:
    """Validate every CSV under ``root`` and the manifest hashes. Returns problems."""
    root = Path(root)
    problems = []
    targets = [root] if root.is_file() else sorted(root.rglob("*.csv"))
    for p in targets:
        if p.suffix != ".csv":
            continue
        try:
            validate_file(p)
        except SchemaError as exc:
            problems.append(str(exc))
    if root.is_dir():
        for man in sorted(root.rglob("manifest.json")):
            doc = json.loads(man.read_text())
            base = man.parent
            listed = set(doc.get("files", {}))
            for rel, digest in doc.get("files", {}).items():
                f = base / rel
                if not f.exists():
                    problems.append(f"{man}: listed file {rel} is missing")
                elif sha256(f) != digest:
                    problems.append(f"{man}: hash mismatch for {rel}")
            nested = [m.parent for m in base.rglob("manifest.json") if m != man]
            for f in sorted(base.rglob("*.csv")):
                if any(d in f.parents for d in nested):
                    continue
                rel = f.relative_to(base).as_posix()
                if rel not in listed:
                    problems.append(f"{man}: {rel} is not in the inventory")
    return problems
