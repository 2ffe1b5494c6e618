"""Two-spin entanglement: concurrence, tangles, distance profiles, monogamy."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .ed import DenseGroundState, ed_rdm, ed_rdm1
from .mps import MPS, UnitCellMPS, pair_rdms, single_site_rdm

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-9
NOISE_FLOOR_MIN = 1e-12
CONTAMINATION = 1e-3

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
R_NEGATIVE_CLIP = 1e-12
R_NEGATIVE_FAIL = 1e-8
# singular values carry ~eps absolute error, so smaller differences are rounding
C_RESOLUTION = 16 * np.finfo(float).eps


class DensityMatrixError(ValueError):
    """Input is not a valid density matrix."""


class NumericalValidityError(ArithmeticError):
    """R = rho (YY) rho* (YY) has an eigenvalue clearly below zero."""


def validate_density_matrix(rho, dim: Optional[int] = None) -> np.ndarray:
    """Check hermiticity (1e-12), unit trace (1e-10) and positivity (-1e-10).

    Accepts a single matrix or a stack; returns the complex array.
    """
    r = np.asarray(rho, dtype=np.complex128)
    if r.ndim < 2 or r.shape[-1] != r.shape[-2] or r.shape[-1] not in (2, 4):
        raise DensityMatrixError(f"expected 2x2 or 4x4 matrices, got shape {r.shape}")
    if dim is not None and r.shape[-1] != dim:
        raise DensityMatrixError(f"expected {dim}x{dim} matrices, got {r.shape[-1]}x{r.shape[-1]}")
    if not np.all(np.isfinite(r)):
        raise DensityMatrixError("density matrix has non-finite entries")
    herm = np.max(np.abs(r - np.conj(np.swapaxes(r, -1, -2))))
    if herm > HERMITIAN_TOL:
        raise DensityMatrixError(f"not Hermitian (deviation {herm:.2e})")
    tr = np.trace(r, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0)) > TRACE_TOL:
        raise DensityMatrixError(f"trace differs from 1 by {np.max(np.abs(tr - 1.0)):.2e}")
    pmin = np.min(np.linalg.eigvalsh(r))
    if pmin < -POSITIVITY_TOL:
        raise DensityMatrixError(f"negative eigenvalue {pmin:.2e}")
    return r


def r_eigenvalues(rho) -> np.ndarray:
    """Eigenvalues of R = rho (sy x sy) rho* (sy x sy), real parts, descending.

    ``rho*`` is the entrywise conjugate in the S^z product basis. Works on a
    single 4x4 matrix or a stack.
    """
    r = np.asarray(rho, dtype=np.complex128)
    big_r = r @ kernels.YY @ np.conj(r) @ kernels.YY
    lam = np.linalg.eigvals(big_r).real
    return -np.sort(-lam, axis=-1)


def concurrence_from_r(rho) -> np.ndarray:
    """Textbook route: sqrt of the R eigenvalues. Accurate to ~1e-8 only."""
    lam = r_eigenvalues(rho)
    if np.min(lam) < -R_NEGATIVE_FAIL:
        raise NumericalValidityError(f"R has eigenvalue {np.min(lam):.2e}")
    s = np.sqrt(np.clip(lam, 0.0, None))
    return np.maximum(0.0, s[..., 0] - s[..., 1] - s[..., 2] - s[..., 3])


def concurrences(rhos) -> np.ndarray:
    """Wootters concurrence of a ``(k, 4, 4)`` stack of two-qubit states.

    The square roots of the R eigenvalues are taken as the singular values of
    ``V^T (sy x sy) V`` with ``rho = V V^dagger``; they agree with the direct
    route but resolve small values to machine precision. The R spectrum is
    still formed to enforce the validity bound: eigenvalues below -1e-8 raise,
    those in [-1e-12, 0) count as zero. Results below ``C_RESOLUTION`` are
    reported as exactly 0.
    """
    r = np.asarray(rhos)
    r = validate_density_matrix(r[None] if r.ndim == 2 else r, 4).reshape(-1, 4, 4)
    lam_min = np.min(r_eigenvalues(r), axis=-1)
    bad = lam_min < -R_NEGATIVE_FAIL
    if np.any(bad):
        raise NumericalValidityError(f"R has eigenvalue {lam_min[bad].min():.2e}")
    s, _ = kernels.concurrence_batch(r)
    c = s[:, 0] - s[:, 1] - s[:, 2] - s[:, 3]
    c[c <= C_RESOLUTION] = 0.0
    return np.clip(c, 0.0, 1.0)


def concurrence(rho) -> float:
    r = validate_density_matrix(rho, 4)
    if r.ndim != 2:
        raise DensityMatrixError(f"expected a single 4x4 matrix, got shape {r.shape}")
    return float(concurrences(r)[0])


def two_tangle(rho) -> float:
    return concurrence(rho) ** 2


def one_tangle(rho) -> float:
    """Linear entropy 2 (1 - Tr rho^2) of a single-qubit state."""
    r = validate_density_matrix(rho, 2)
    val = 2.0 * (1.0 - float(np.real(np.trace(r @ r))))
    return min(max(val, 0.0), 1.0)


# ---------------------------------------------------------------------------
# ground-state handles
# ---------------------------------------------------------------------------


def _unwrap(gs):
    """Return (state, noise_floor, length) for any supported ground-state handle."""
    floor = NOISE_FLOOR_MIN
    state = gs
    if hasattr(gs, "state") and hasattr(gs, "max_truncation_error"):
        state = gs.state
        floor = noise_floor(gs.max_truncation_error)
    if isinstance(state, UnitCellMPS):
        return state, floor, None
    if isinstance(state, (MPS, DenseGroundState)):
        return state, floor, len(state) if isinstance(state, MPS) else state.n
    raise TypeError(f"unsupported ground-state handle {type(gs).__name__}")


def noise_floor(truncation_error: float) -> float:
    """Absolute precision of C_d for a given discarded Schmidt weight.

    RDM entries, and hence concurrences, carry errors of the order of the
    discarded amplitude, i.e. the square root of the discarded weight.
    """
    return max(float(np.sqrt(max(truncation_error, 0.0))), NOISE_FLOOR_MIN)


def _pair_rdms(state, pairs) -> dict:
    if isinstance(state, DenseGroundState):
        return {(i, j): ed_rdm(state, i, j) for i, j in pairs}
    return pair_rdms(state, pairs)


def _rdm1(state, i) -> np.ndarray:
    if isinstance(state, DenseGroundState):
        return ed_rdm1(state, i)
    if isinstance(state, UnitCellMPS):
        return state.rdm1(i)
    return single_site_rdm(state, i)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcurrenceProfile:
    distances: np.ndarray
    values: np.ndarray
    spread: np.ndarray
    n_pairs: np.ndarray
    source: str
    n_discarded_boundary: int
    threshold: float
    noise_floor: float
    length: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=int)
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape:
            raise ValueError("distances and values differ in length")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("distances must be strictly increasing")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("concurrence values must lie in [0, 1]")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spread", np.asarray(self.spread, dtype=float))
        object.__setattr__(self, "n_pairs", np.asarray(self.n_pairs, dtype=int))

    @property
    def tangles(self) -> np.ndarray:
        return self.values**2

    @property
    def contaminated(self) -> np.ndarray:
        """Points whose pair-to-pair spread exceeds 1e-3 of the mean."""
        return self.spread > CONTAMINATION * self.values

    @property
    def c1(self) -> float:
        hit = np.nonzero(self.distances == 1)[0]
        return float(self.values[hit[0]]) if hit.size else float("nan")

    @classmethod
    def from_values(cls, values, threshold=DEFAULT_THRESHOLD, noise_floor=NOISE_FLOOR_MIN, length=None):
        """Profile from a bare list C_1, C_2, ... (synthetic data, CSV input)."""
        v = np.asarray(values, dtype=float)
        return cls(
            np.arange(1, v.size + 1), v, np.zeros(v.size), np.ones(v.size, dtype=int),
            "synthetic", 0, threshold, noise_floor, length,
        )


def profile(gs, d_max: int, discard: int = 0, threshold: float = DEFAULT_THRESHOLD) -> ConcurrenceProfile:
    """C_d for d = 1..d_max averaged over all retained pairs at distance d.

    Finite chains drop ``discard`` sites at each end and use every pair inside
    the remaining window; the max-min spread over those pairs is kept. For a
    unit-cell state every offset within the cell is used.
    """
    state, floor, n = _unwrap(gs)
    if d_max < 1 or discard < 0:
        raise ValueError("need d_max >= 1 and discard >= 0")
    if n is None:
        pairs_by_d = {d: [(i, i + d) for i in range(state.cell)] for d in range(1, d_max + 1)}
        source = "infinite-bulk"
    else:
        if 2 * discard + d_max + 1 > n:
            raise ValueError(
                f"window too small: need 2*discard + d_max + 1 <= N, got 2*{discard} + {d_max} + 1 > {n}"
            )
        lo, hi = discard, n - discard
        pairs_by_d = {d: [(i, i + d) for i in range(lo, hi - d)] for d in range(1, d_max + 1)}
        source = "finite-interior"
    all_pairs = [p for ps in pairs_by_d.values() for p in ps]
    rdms = _pair_rdms(state, all_pairs)
    cs = dict(zip(all_pairs, concurrences(np.array([rdms[p] for p in all_pairs]))))
    vals, spread, counts = [], [], []
    for d in range(1, d_max + 1):
        c = np.array([cs[p] for p in pairs_by_d[d]])
        vals.append(float(np.mean(c)))
        spread.append(float(np.max(c) - np.min(c)))
        counts.append(c.size)
    prof = ConcurrenceProfile(
        np.arange(1, d_max + 1), np.clip(vals, 0.0, 1.0), spread, counts, source, discard,
        threshold, floor, n, meta={"xi_convention": "largest d with C_d >= threshold"},
    )
    if np.any(prof.contaminated):
        log.info("boundary-contaminated distances: %s", prof.distances[prof.contaminated].tolist())
    log.info("profile noise floor %.2e", floor)
    return prof


def truncation_length(p: ConcurrenceProfile) -> int:
    """Largest d with C_d >= threshold, 0 if none."""
    above = p.distances[p.values >= p.threshold]
    return int(above.max()) if above.size else 0


@dataclass(frozen=True)
class TotalsRecord:
    n: int
    total_concurrence: float
    total_two_tangle: float
    xi: int
    c1: float = float("nan")
    # for infinite chains ``n`` counts distances (= xi); this counts sites
    n_sites: Optional[int] = None

    def __post_init__(self):
        if self.total_two_tangle > self.total_concurrence + 1e-15:
            raise ValueError("total two-tangle exceeds total concurrence")


def totals(p: ConcurrenceProfile, n: Optional[int] = None) -> TotalsRecord:
    """C = sum C_d and tau = sum C_d^2; infinite profiles are summed up to xi."""
    xi = truncation_length(p)
    if p.source == "infinite-bulk":
        sel = p.distances <= xi
        count = xi
        sites = xi + 1
    else:
        sel = np.ones(p.distances.size, dtype=bool)
        count = n if n is not None else (p.length if p.length is not None else int(p.distances.max()) + 1)
        sites = count
    c = float(np.sum(p.values[sel]))
    tau = float(np.sum(p.tangles[sel]))
    return TotalsRecord(int(count), c, tau, xi, p.c1, sites)


def reference_ratios(rec: TotalsRecord) -> dict:
    """Diagnostics for C ~ N tau (finite), C ~ xi tau and tau ~ C_1 ~ 1/xi."""
    out = {}
    if rec.total_two_tangle > 0:
        out["c_over_n_tau"] = rec.total_concurrence / (rec.n * rec.total_two_tangle)
        if rec.xi > 0:
            out["c_over_xi_tau"] = rec.total_concurrence / (rec.xi * rec.total_two_tangle)
    if np.isfinite(rec.c1) and rec.c1 > 0:
        out["tau_over_c1"] = rec.total_two_tangle / rec.c1
        out["c1_times_xi"] = rec.c1 * rec.xi
    return out


# ---------------------------------------------------------------------------
# monogamy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonogamyReport:
    n: int
    ckw_margins: np.ndarray
    fully_connected: bool
    kbi_margin: Optional[float]
    pair_concurrence: np.ndarray
    tol: float = 1e-8

    @property
    def ckw_ok(self) -> bool:
        return bool(np.min(self.ckw_margins) >= -self.tol)

    @property
    def kbi_ok(self) -> bool:
        return self.kbi_margin is None or self.kbi_margin >= -self.tol

    @property
    def ok(self) -> bool:
        return self.ckw_ok and self.kbi_ok


def monogamy_checks(gs, tol: float = 1e-8) -> MonogamyReport:
    """CKW for every focus site and the KBI bound if all pairs are entangled.

    The CKW margin at site i is ``one_tangle(rho_i) - sum_j tau(rho_ij)``. The
    KBI margin is ``2/N - max C_ij`` and is only evaluated when every pair has
    C_ij > 0. Negative margins beyond ``tol`` are reported, not raised.
    """
    state, _, n = _unwrap(gs)
    if n is None:
        raise ValueError("monogamy checks need a finite chain")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rdms = _pair_rdms(state, pairs)
    cs = concurrences(np.array([rdms[p] for p in pairs]))
    cmat = np.zeros((n, n))
    for (i, j), c in zip(pairs, cs):
        cmat[i, j] = cmat[j, i] = c
    margins = np.array([one_tangle(_rdm1(state, i)) - np.sum(cmat[i] ** 2) for i in range(n)])
    connected = bool(np.all(cs > 0))
    kbi = 2.0 / n - float(np.max(cs)) if connected else None
    rep = MonogamyReport(n, margins, connected, kbi, cmat, tol)
    if not rep.ok:
        log.warning("monogamy violation: min CKW margin %.3e, KBI margin %s", margins.min(), kbi)
    return rep
