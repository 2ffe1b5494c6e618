"""Decay-law fits, derivative scans and total-entanglement distribution fits.

All power-law and exponential forms are fitted as straight lines in log space
with ordinary least squares, so results are deterministic and independent of
input order up to rounding.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .entanglement import ConcurrenceProfile, TotalsRecord, profile

log = logging.getLogger(__name__)

FLOOR_FACTOR = 10.0
DEFAULT_STEP = 1e-2
GRID_TOL = 1e-12


class FitDegenerateError(ValueError):
    """The data cannot determine the model (no decay, zero spread, all zeros)."""


class InconclusiveError(ValueError):
    """The sampled range does not bracket the feature being located."""


class ScanError(RuntimeError):
    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("unconverged scan points at j_xy = " + ", ".join(f"{j:.6g}" for j in self.failed))


@dataclass(frozen=True)
class FitResult:
    model_name: str
    coefficients: dict
    residual: float
    r_squared: float
    n_points: int
    domain: tuple
    stderr: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.r_squared > 1.0 + 1e-12:
            raise ValueError(f"r_squared {self.r_squared} exceeds 1")
        if self.n_points < len(self.coefficients) + 1 and not self.meta.get("composite"):
            raise ValueError("fewer points than coefficients + 1")

    def __getitem__(self, name):
        return self.coefficients[name]

    def rows(self):
        """(name, coef, value, stderr_proxy, r_squared) tuples for CSV output."""
        return [
            (self.model_name, k, float(v), float(self.stderr.get(k, float("nan"))), float(self.r_squared))
            for k, v in self.coefficients.items()
        ]

    def report(self) -> str:
        lines = [f"fit {self.model_name}: {self.n_points} points over {self.domain}"]
        for k, v in self.coefficients.items():
            err = self.stderr.get(k)
            tail = f" +/- {err:.3g}" if err is not None and np.isfinite(err) else ""
            lines.append(f"  {k:>10s} = {v:.10g}{tail}")
        lines.append(f"  r_squared = {self.r_squared:.10f}   rms residual = {self.residual:.3e}")
        for k, v in self.meta.items():
            lines.append(f"  [{k}] {v}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# least squares core
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Line:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    rms: float
    r2: float
    n: int


def _r_squared(ss_res: float, ss_tot: float) -> float:
    if ss_tot <= 0.0:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return min(1.0, 1.0 - ss_res / ss_tot)


def _line_fit(x, y) -> _Line:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.lexsort((y, x))  # makes the sums order independent
    x, y = x[order], y[order]
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 points for a line fit, got {n}")
    if np.ptp(x) == 0.0:
        raise FitDegenerateError("all abscissae coincide")
    a = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    ss_res = float(res @ res)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    sigma2 = ss_res / (n - 2) if n > 2 else 0.0
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return _Line(
        float(coef[0]), float(coef[1]), float(np.sqrt(cov[0, 0])), float(np.sqrt(cov[1, 1])),
        float(np.sqrt(ss_res / n)), _r_squared(ss_res, ss_tot), n,
    )


def _above_floor(p: ConcurrenceProfile, min_d: int = 1):
    cut = FLOOR_FACTOR * p.noise_floor
    keep = (p.values > cut) & (p.distances >= min_d)
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        log.info("excluded %d profile points below %.3g (10x noise floor)", dropped, cut)
    return p.distances[keep].astype(float), p.values[keep], dropped, cut


# ---------------------------------------------------------------------------
# decay laws
# ---------------------------------------------------------------------------


def fit_exponential_decay(p: ConcurrenceProfile) -> FitResult:
    """Fit C_d = C1 * exp(-d / xi_fit) on points above 10x the noise floor."""
    d, c, dropped, cut = _above_floor(p)
    if d.size < 4:
        raise ValueError(f"need >= 4 points above {cut:.3g}, got {d.size}")
    ln = _line_fit(d, np.log(c))
    if ln.slope >= 0.0:
        raise FitDegenerateError(f"no decay: log-slope {ln.slope:.3g} >= 0")
    c1 = float(np.exp(ln.intercept))
    xi = -1.0 / ln.slope
    return FitResult(
        "exp_decay", {"C1": c1, "xi_fit": xi}, ln.rms, ln.r2, ln.n,
        (float(d.min()), float(d.max())),
        {"C1": c1 * ln.intercept_err, "xi_fit": ln.slope_err / ln.slope**2},
        {"excluded_below_floor": dropped, "cutoff": cut},
    )


def fit_power_law(p: ConcurrenceProfile, c1: float) -> FitResult:
    """Fit C_d = p_coef * c1 * d**(-q) with the prefactor scaled by the measured C_1."""
    if not c1 > 0.0:
        raise FitDegenerateError(f"C_1 must be positive, got {c1}")
    d, c, dropped, cut = _above_floor(p, min_d=1)
    if d.size < 4:
        raise ValueError(f"need >= 4 points above {cut:.3g}, got {d.size}")
    ln = _line_fit(np.log(d), np.log(c / c1))
    if ln.slope >= 0.0:
        raise FitDegenerateError(f"no decay: log-log slope {ln.slope:.3g} >= 0")
    pc = float(np.exp(ln.intercept))
    return FitResult(
        "power_law", {"p_coef": pc, "q": -ln.slope}, ln.rms, ln.r2, ln.n,
        (float(d.min()), float(d.max())),
        {"p_coef": pc * ln.intercept_err, "q": ln.slope_err},
        {"excluded_below_floor": dropped, "cutoff": cut, "c1": c1},
    )


# ---------------------------------------------------------------------------
# derivative scan around the transition
# ---------------------------------------------------------------------------


def uniform_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive grid start, start+step, ..., stop without float drift."""
    n = int(round((stop - start) / step))
    if n < 2 or abs(start + n * step - stop) > 1e-9 * max(1.0, abs(stop)):
        raise ValueError(f"[{start}, {stop}] is not a whole number (>= 2) of steps {step}")
    return start + step * np.arange(n + 1)


@dataclass(frozen=True)
class DerivativeScan:
    coupling_values: np.ndarray
    distances: np.ndarray
    c_d_values: np.ndarray  # (len(coupling_values), len(distances))
    derivative: np.ndarray
    step: float
    one_sided: np.ndarray  # True at the two endpoints
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        j = np.asarray(self.coupling_values, dtype=float)
        _check_grid(j)
        if np.shape(self.c_d_values) != (j.size, len(self.distances)):
            raise ValueError("c_d_values must be (n_j, n_d)")

    def column(self, d: int) -> np.ndarray:
        return self.derivative[:, list(self.distances).index(d)]


def _check_grid(j: np.ndarray) -> float:
    if j.ndim != 1 or j.size < 3:
        raise ValueError("grid needs at least 3 points")
    dj = np.diff(j)
    if np.any(dj <= 0):
        raise ValueError("grid must be strictly increasing")
    h = float((j[-1] - j[0]) / (j.size - 1))
    if np.max(np.abs(dj - h)) > GRID_TOL * max(1.0, np.max(np.abs(j))):
        raise ValueError("grid spacing is not uniform within 1e-12")
    return h


def finite_differences(j, values):
    """Centered differences inside, one-sided at the two ends."""
    j = np.asarray(j, dtype=float)
    h = _check_grid(j)
    v = np.asarray(values, dtype=float)
    deriv = np.gradient(v, h, axis=0, edge_order=1)
    flags = np.zeros(j.size, dtype=bool)
    flags[[0, -1]] = True
    return deriv, flags, h


def bias_bound(values, step: float) -> float:
    """Rough truncation bias h^2/6 max|f'''| of the centered difference."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] < 4:
        return float("nan")
    third = np.diff(v, n=3, axis=0) / step**3
    return float(step**2 / 6.0 * np.max(np.abs(third)))


def central_discard(length: int, d_max: int) -> int:
    """Boundary sites to drop so that only a central window of d_max + 1 sites remains."""
    return max(0, (length - d_max - 1) // 2)


def _measure_point(args):
    spec, d_list, cfg, discard = args
    from .dmrg import solve

    res = solve(spec, cfg)
    d_max = max(d_list)
    if discard is None:
        discard = central_discard(spec.length, d_max)
    prof = profile(res, d_max, discard=discard)
    vals = [float(prof.values[list(prof.distances).index(d)]) for d in d_list]
    return vals, bool(res.converged), float(res.energy)


def derivative_scan(
    template,
    d_list: Sequence[int],
    j_grid,
    cfg=None,
    discard: Optional[int] = None,
    workers: int = 1,
    evaluate: Optional[Callable] = None,
) -> DerivativeScan:
    """C_d(J_xy) on a uniform grid and its first derivative in J_xy.

    One ground state is solved per grid point (``template.with_(j_xy=J)``),
    independent points fan out over ``workers`` processes and are collected
    in grid order. By default pairs are taken from a central window of the
    chain. ``evaluate(spec) -> (values, converged, energy)`` replaces the
    solver, e.g. with exact diagonalization.
    """
    j = np.asarray(j_grid, dtype=float)
    _check_grid(j)
    d_list = [int(d) for d in d_list]
    if not d_list or min(d_list) < 1:
        raise ValueError("distances must be >= 1")
    specs = [template.with_(j_xy=float(x)) for x in j]
    if evaluate is not None:
        results = [evaluate(s) for s in specs]
    else:
        from .dmrg import DmrgConfig

        cfg = cfg if cfg is not None else DmrgConfig()
        jobs = [(s, d_list, cfg, discard) for s in specs]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_measure_point, jobs))
        else:
            results = [_measure_point(a) for a in jobs]
    failed = [float(x) for x, r in zip(j, results) if not r[1]]
    if failed:
        raise ScanError(failed)
    values = np.array([r[0] for r in results], dtype=float)
    deriv, flags, h = finite_differences(j, values)
    meta = {
        "energies": [r[2] for r in results],
        "bias_bound": bias_bound(values, h),
        "step": h,
        "discard": discard,
    }
    return DerivativeScan(j, np.array(d_list), values, deriv, h, flags, meta)


def critical_point(scan: DerivativeScan, d: int = 1) -> tuple:
    """J* from the grid maximum of |dC_d/dJ| refined by a three-point parabola.

    Returns (j_star, grid_index). At an endpoint no refinement is made.
    """
    g = np.abs(scan.column(d))
    k = int(np.argmax(g))
    j = scan.coupling_values
    if k == 0 or k == j.size - 1:
        return float(j[k]), k
    ym, y0, yp = g[k - 1], g[k], g[k + 1]
    curv = ym - 2.0 * y0 + yp
    shift = 0.0 if curv == 0.0 else 0.5 * (ym - yp) / curv
    shift = float(np.clip(shift, -0.5, 0.5))
    return float(j[k] + shift * scan.step), k


def fit_log_scaling(scan: DerivativeScan, j_star: float, window: int = 2, side: str = "both") -> FitResult:
    """Fit dC_d/dJ = k_d ln|J - J*| + c_d per distance, then k_d = m d + m'.

    Points with |J - J*| <= window * step are dropped. ``side`` restricts the
    fit to J below or above J*.
    """
    if window < 2:
        raise ValueError("exclusion half-width must be at least 2 grid steps")
    if side not in ("both", "below", "above"):
        raise ValueError(f"side must be both/below/above, got {side!r}")
    dj = scan.coupling_values - j_star
    keep = np.abs(dj) > window * scan.step * (1.0 + 1e-9)
    if side == "below":
        keep &= dj < 0
    elif side == "above":
        keep &= dj > 0
    if np.count_nonzero(keep) < 3:
        raise ValueError(f"only {np.count_nonzero(keep)} grid points left after excluding the window")
    if len(scan.distances) < 3:
        raise ValueError("need at least 3 distances to fit k_d against d")
    x = np.log(np.abs(dj[keep]))
    coefs, errs, per_d_r2, offsets = {}, {}, {}, {}
    ks = []
    for col, d in enumerate(scan.distances):
        ln = _line_fit(x, scan.derivative[keep, col])
        coefs[f"k_{d}"] = ln.slope
        errs[f"k_{d}"] = ln.slope_err
        per_d_r2[int(d)] = ln.r2
        offsets[int(d)] = ln.intercept
        ks.append(ln.slope)
    outer = _line_fit(np.asarray(scan.distances, dtype=float), np.array(ks))
    coefs["m"] = outer.slope
    coefs["m_prime"] = outer.intercept
    errs["m"] = outer.slope_err
    errs["m_prime"] = outer.intercept_err
    jk = scan.coupling_values[keep]
    return FitResult(
        "log_scaling", coefs, outer.rms, outer.r2, int(np.count_nonzero(keep)) * len(scan.distances),
        (float(jk.min()), float(jk.max())), errs,
        {"j_star": j_star, "window_steps": window, "side": side, "per_distance_r2": per_d_r2,
         "offsets": offsets, "composite": True},
    )


# ---------------------------------------------------------------------------
# total-entanglement relations
# ---------------------------------------------------------------------------


def _power_fit(x, y, name, a_key, b_key, extra=None) -> FitResult:
    ln = _line_fit(np.log(x), np.log(y))
    a = float(np.exp(ln.intercept))
    return FitResult(
        name, {a_key: a, b_key: ln.slope}, ln.rms, ln.r2, ln.n,
        (float(np.min(x)), float(np.max(x))),
        {a_key: a * ln.intercept_err, b_key: ln.slope_err}, extra or {},
    )


def fit_kbi_fine_grained(records: Sequence[TotalsRecord]) -> FitResult:
    """Fit C = a * (xi * tau)**b over a parameter sweep of infinite-chain totals."""
    x = np.array([r.xi * r.total_two_tangle for r in records], dtype=float)
    y = np.array([r.total_concurrence for r in records], dtype=float)
    ok = (x > 0) & (y > 0)
    if np.count_nonzero(ok) < 5:
        raise ValueError(f"need >= 5 records with positive totals, got {np.count_nonzero(ok)}")
    x, y = x[ok], y[ok]
    if np.ptp(x) <= 1e-6 * np.max(x):
        raise FitDegenerateError("xi * tau has no spread across the records")
    return _power_fit(x, y, "kbi_fine", "a", "b", {"dropped_nonpositive": int(np.count_nonzero(~ok))})


def fit_piecewise_distribution(records: Sequence[TotalsRecord], min_branch: int = 4) -> FitResult:
    """Two power laws C = a_i (N tau)**b_i split at N_c = argmax_N C.

    The branch N <= N_c gives (a1, b1) and N > N_c gives (a2, b2). Equal maxima
    resolve to the smaller N and are flagged in ``meta``.
    """
    recs = sorted(records, key=lambda r: r.n)
    n = np.array([r.n for r in recs], dtype=float)
    if np.any(np.diff(n) == 0):
        raise ValueError("duplicate chain lengths")
    c = np.array([r.total_concurrence for r in recs], dtype=float)
    tau = np.array([r.total_two_tangle for r in recs], dtype=float)
    if not np.all((c > 0) & (tau > 0)):
        raise FitDegenerateError("totals must be positive for a log-log fit")
    peak = c.max()
    hits = np.nonzero(c == peak)[0]
    k = int(hits[0])
    if k == 0 or k == n.size - 1:
        raise InconclusiveError(f"maximum of C at N={int(n[k])} lies on the edge of the sampled range")
    lo, hi = slice(0, k + 1), slice(k + 1, None)
    if k + 1 < min_branch or n.size - k - 1 < min_branch:
        raise InconclusiveError(
            f"N_c={int(n[k])} leaves {k + 1} / {n.size - k - 1} points on the two branches (need {min_branch})"
        )
    x = n * tau
    f1 = _power_fit(x[lo], c[lo], "branch1", "a1", "b1")
    f2 = _power_fit(x[hi], c[hi], "branch2", "a2", "b2")
    coefs = {**f1.coefficients, **f2.coefficients, "n_c": float(n[k])}
    y_all = np.log(c)
    pred = np.concatenate([
        np.log(f1["a1"]) + f1["b1"] * np.log(x[lo]),
        np.log(f2["a2"]) + f2["b2"] * np.log(x[hi]),
    ])
    res = y_all - pred
    ss_tot = float(np.sum((y_all - y_all.mean()) ** 2))
    return FitResult(
        "piecewise", coefs, float(np.sqrt(np.mean(res**2))), _r_squared(float(res @ res), ss_tot), n.size,
        (float(n.min()), float(n.max())), {**f1.stderr, **f2.stderr},
        {"tie": bool(hits.size > 1), "branch_r2": (f1.r_squared, f2.r_squared)},
    )


def proportionality_check(records: Sequence[TotalsRecord], c1_values: Sequence[float]) -> FitResult:
    """Zero-intercept fit tau = slope * C_1 over an N sweep.

    r_squared is the uncentered form 1 - SS_res / sum(tau^2) appropriate for a
    line through the origin. Interior extrema of C_1 against N are reported.
    """
    if len(records) != len(c1_values):
        raise ValueError("records and c1_values differ in length")
    if len(records) < 3:
        raise ValueError("need at least 3 points")
    order = np.argsort([r.n for r in records], kind="stable")
    n = np.array([records[i].n for i in order], dtype=float)
    tau = np.array([records[i].total_two_tangle for i in order], dtype=float)
    c1 = np.array([c1_values[i] for i in order], dtype=float)
    sxx = float(np.sort(c1 * c1).sum())
    if sxx == 0.0 or not np.any(tau):
        raise FitDegenerateError("all-zero data")
    slope = float(np.sort(c1 * tau).sum()) / sxx
    res = tau - slope * c1
    ss_res = float(np.sort(res * res).sum())
    r2 = _r_squared(ss_res, float(np.sort(tau * tau).sum()))
    dof = max(1, n.size - 1)
    err = float(np.sqrt(ss_res / dof / sxx))
    dc = np.diff(c1)
    turns = [int(n[i + 1]) for i in range(dc.size - 1) if dc[i] * dc[i + 1] < 0]
    return FitResult(
        "proportionality", {"slope": slope}, float(np.sqrt(ss_res / n.size)), r2, n.size,
        (float(n.min()), float(n.max())), {"slope": err},
        {"c1_interior_extrema_at_n": turns, "c1_monotone": not turns},
    )


# ---------------------------------------------------------------------------
# synthetic generators and summaries
# ---------------------------------------------------------------------------


def synthetic_piecewise(a1, b1, a2, b2, n_c, ns=None, peak=3.0, slope=0.01) -> list:
    """Noise-free totals obeying the two-branch law exactly, peaked at ``n_c``.

    C(N) is a tent with its apex at n_c; tau is then solved from the branch
    law that applies at each N. The default range is N = 50..150, widened to
    keep at least 10 points on either side of n_c.
    """
    if ns is None:
        ns = range(min(50, n_c - 10), max(150, n_c + 10) + 1)
    out = []
    for n in ns:
        c = peak - slope * abs(n - n_c)
        a, b = (a1, b1) if n <= n_c else (a2, b2)
        tau = (c / a) ** (1.0 / b) / n
        out.append(TotalsRecord(int(n), c, tau, 0))
    return out


def synthetic_kbi(a, b, xs) -> list:
    return [TotalsRecord(1, a * x**b, x / 10.0, 10) for x in xs]


def format_piecewise_row(label: str, fit: FitResult) -> str:
    """One summary row: label, a1/a2(N_c), b1/b2 at two decimals."""
    c = fit.coefficients
    return f"{label} & {c['a1']:.2f}/{c['a2']:.2f}({int(c['n_c'])}) & {c['b1']:.2f}/{c['b2']:.2f}"


def ratio_table(records: Sequence[TotalsRecord]) -> list:
    """Per-record diagnostics C/(N tau), C/(xi tau), tau/C_1 and C_1 xi."""
    from .entanglement import reference_ratios

    return [{"n": r.n, "xi": r.xi, **reference_ratios(r)} for r in records]
