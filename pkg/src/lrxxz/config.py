"""Experiment configuration files (TOML).

The grammar is documented in docs/formats.md. Every error names the offending
block and key; TOML syntax errors carry the line and column from the parser.
"""
from __future__ import annotations

import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dmrg import PRESETS, DmrgConfig
from .entanglement import DEFAULT_THRESHOLD
from .mpo import ModelSpec

SWEEP_PARAMETERS = ("alpha", "h_x", "j_xy", "length")
INFINITE_D_MAX = 100

ENV_OUTPUT_DIR = "LRXXZ_OUTPUT_DIR"
ENV_MAX_WORKERS = "LRXXZ_MAX_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeasureConfig:
    d_max: Optional[int] = None
    discard: int = 0
    threshold: float = DEFAULT_THRESHOLD

    def resolve_d_max(self, spec: ModelSpec) -> int:
        if self.d_max is not None:
            return self.d_max
        if spec.infinite:
            return INFINITE_D_MAX
        return spec.length - 2 * self.discard - 1


@dataclass(frozen=True)
class SweepAxis:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    dmrg: DmrgConfig
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    sweep: Optional[SweepAxis] = None
    output_dir: Path = Path("runs")
    run_id: str = "run"
    source: Optional[str] = None  # raw file text, echoed into outputs

    @property
    def run_dir(self) -> Path:
        return self.output_dir / self.run_id

    def points(self) -> list:
        """ModelSpec per sweep value, in the order given (or the single model)."""
        if self.sweep is None:
            return [self.model]
        key = self.sweep.parameter
        return [self.model.with_(**{key: v}) for v in self.sweep.values]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "output_dir": str(self.output_dir),
            "model": self.model.to_dict(),
            "dmrg": self.dmrg.to_dict(),
            "measure": asdict(self.measure),
            "sweep": None if self.sweep is None else {"parameter": self.sweep.parameter, "values": list(self.sweep.values)},
        }


def _take(block: dict, where: str, allowed) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(extra)}")
    return dict(block)


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    return v


def _model(raw: dict) -> ModelSpec:
    names = [f.name for f in fields(ModelSpec)]
    b = _take(raw, "model", names)
    if "decay" not in b:
        raise ConfigError("[model] missing key: decay")
    for k in ("alpha", "j_xy", "j_z", "h_x"):
        if k in b:
            b[k] = float(_number(b[k], f"model.{k}"))
    if "length" in b:
        n = b["length"]
        if n == "inf":
            b["length"] = None
        elif isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError(f"model.length: expected an integer or \"inf\", got {n!r}")
    try:
        return ModelSpec(**b)
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None


def _dmrg(raw: dict, preset: Optional[str]) -> DmrgConfig:
    names = [f.name for f in fields(DmrgConfig)]
    b = _take(raw, "dmrg", names + ["preset"])
    name = preset or b.pop("preset", None)
    b.pop("preset", None)
    if name is not None and name not in PRESETS:
        raise ConfigError(f"dmrg.preset: unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    base = PRESETS[name] if name else DmrgConfig()
    for k, v in b.items():
        if k != "compress_mpo":
            _number(v, f"dmrg.{k}")
    try:
        return base.with_(**b)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[dmrg] {exc}") from None


def _measure(raw: dict) -> MeasureConfig:
    b = _take(raw, "measure", ("d_max", "discard", "threshold"))
    for k in ("d_max", "discard"):
        if k in b and (isinstance(b[k], bool) or not isinstance(b[k], int) or b[k] < 0):
            raise ConfigError(f"measure.{k}: expected a non-negative integer")
    if "d_max" in b and b["d_max"] < 1:
        raise ConfigError("measure.d_max: must be >= 1")
    if "threshold" in b and not _number(b["threshold"], "measure.threshold") > 0:
        raise ConfigError("measure.threshold: must be > 0")
    return MeasureConfig(**b)


def _sweep(raw: dict) -> SweepAxis:
    b = _take(raw, "sweep", ("parameter", "values"))
    p = b.get("parameter")
    if p not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep.parameter: must be one of {SWEEP_PARAMETERS}, got {p!r}")
    vals = b.get("values")
    if not isinstance(vals, list) or not vals:
        raise ConfigError("sweep.values: expected a non-empty list")
    for i, v in enumerate(vals):
        _number(v, f"sweep.values[{i}]")
    if p == "length" and not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
        raise ConfigError("sweep.values: lengths must be integers")
    if len(set(vals)) != len(vals):
        raise ConfigError("sweep.values: duplicate entries")
    return SweepAxis(p, tuple(vals))


def parse_config(text: str, preset: Optional[str] = None, seed: Optional[int] = None,
                 base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    top = _take(raw, "top level", ("run_id", "output_dir", "model", "dmrg", "measure", "sweep"))
    if "model" not in top:
        raise ConfigError("missing [model] block")
    model = _model(top["model"])
    dmrg = _dmrg(top.get("dmrg", {}), preset)
    if seed is not None:
        dmrg = dmrg.with_(seed=int(seed))
    measure = _measure(top.get("measure", {}))
    sweep = _sweep(top["sweep"]) if "sweep" in top else None
    run_id = top.get("run_id", "run")
    if not isinstance(run_id, str) or not run_id.strip() or "/" in run_id or run_id in (".", ".."):
        raise ConfigError("run_id: must be a non-empty name without '/'")
    out = os.environ.get(ENV_OUTPUT_DIR) or top.get("output_dir", "runs")
    if not isinstance(out, str):
        raise ConfigError("output_dir: expected a string")
    out = Path(out)
    if base_dir is not None and not out.is_absolute() and not os.environ.get(ENV_OUTPUT_DIR):
        out = base_dir / out
    cfg = ExperimentConfig(model, dmrg, measure, sweep, out, run_id, text)
    # catch impossible points now rather than halfway through a sweep
    for spec in cfg.points():
        if not spec.infinite:
            d_max = measure.resolve_d_max(spec)
            if d_max < 1 or 2 * measure.discard + d_max + 1 > spec.length:
                raise ConfigError(
                    f"measure: d_max={d_max} with discard={measure.discard} does not fit N={spec.length}"
                )
    return cfg


def load_config(path, preset: Optional[str] = None, seed: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return parse_config(text, preset, seed, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def worker_cap(requested: Optional[int]) -> int:
    cap = os.environ.get(ENV_MAX_WORKERS)
    n = requested if requested is not None else 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)
