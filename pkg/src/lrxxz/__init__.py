"""Ground states and two-spin entanglement of XXZ chains with long-range couplings."""

__version__ = "0.1.0"

from .mpo import ModelSpec, build_mpo  # noqa: E402
from .dmrg import DmrgConfig, PRESETS, GroundStateResult, solve, fdmrg_ground, idmrg_ground  # noqa: E402
from .ed import ed_ground  # noqa: E402
from .entanglement import concurrence, profile, totals, monogamy_checks  # noqa: E402

__all__ = [
    "ModelSpec", "build_mpo", "DmrgConfig", "PRESETS", "GroundStateResult", "solve", "fdmrg_ground",
    "idmrg_ground", "ed_ground", "concurrence", "profile", "totals", "monogamy_checks",
]
