"""Acceptance gates. Each test carries a ``criterion`` marker and the run ends
with one PASS/FAIL line per criterion (see conftest.py).

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import math

import numpy as np
import pytest

from lrxxz.analysis import (
    critical_point,
    derivative_scan,
    fit_exponential_decay,
    fit_kbi_fine_grained,
    fit_log_scaling,
    fit_piecewise_distribution,
    fit_power_law,
    synthetic_kbi,
    synthetic_piecewise,
    uniform_grid,
)
from lrxxz.config import parse_config
from lrxxz.dmrg import DmrgConfig, solve
from lrxxz.ed import ed_ground, kron_hamiltonian
from lrxxz.entanglement import monogamy_checks, profile, truncation_length
from lrxxz.mpo import ModelSpec, build_elri_mpo, build_mpo, build_plri_mpo
from lrxxz.runner import execute

pytestmark = pytest.mark.slow


def crit(n, title):
    return pytest.mark.criterion(n, title)


def note(record_property, text):
    record_property("detail", text)


# ---------------------------------------------------------------------------
# 1, 8, 9: small-chain oracle equivalence and what it feeds
# ---------------------------------------------------------------------------

ORACLE_SPECS = [
    ModelSpec("exponential", 0.0, 1.0, 1.0, 0.5, 8),
    ModelSpec("exponential", 0.3, 1.0, 1.0, 1.0, 10),
    ModelSpec("exponential", 1.0, 1.0, 1.0, 10.0, 8),
    ModelSpec("exponential", 3.0, 1.0, 1.0, 0.5, 10),
    ModelSpec("power_law", 0.0, 1.0, 1.0, 1.0, 8),
    ModelSpec("power_law", 0.3, 1.0, 1.0, 10.0, 10),
    ModelSpec("power_law", 1.0, 1.0, 1.0, 0.5, 8),
    ModelSpec("power_law", 3.0, 1.0, 1.0, 1.0, 10),
    ModelSpec("power_law", 0.3, 1.0, 1.0, 0.5, 8),
    ModelSpec("uniform", 0.0, 1.0, 1.0, 0.5, 8),
    ModelSpec("uniform", 0.0, 1.0, 1.0, 1.0, 10),
    ModelSpec("uniform", 0.0, 1.0, 1.0, 10.0, 8),
]
ORACLE_CFG = DmrgConfig(chi_max=64, trunc_eps=1e-14, energy_rel_tol=1e-12)


@pytest.fixture(scope="module")
def oracle_runs():
    out = []
    for spec in ORACLE_SPECS:
        res = solve(spec, ORACLE_CFG)
        out.append((spec, res, ed_ground(spec, pin=res.pin)))
    return out


@crit(1, "oracle equivalence")
def test_criterion_1_oracle_equivalence(oracle_runs, record_property):
    worst_e = worst_c = 0.0
    skipped = 0
    for spec, res, gs in oracle_runs:
        assert res.converged, spec
        rel = abs(res.energy - gs.energy) / abs(gs.energy)
        assert rel <= 1e-8, (spec, res.energy, gs.energy)
        worst_e = max(worst_e, rel)
        if gs.degenerate:
            skipped += 1
            continue
        n = spec.length
        a = profile(res, n - 1).values
        b = profile(gs, n - 1).values
        diff = float(np.max(np.abs(a - b)))
        assert diff <= 1e-6, (spec, diff)
        worst_c = max(worst_c, diff)
    note(record_property, f"max rel energy diff {worst_e:.1e}, max C_d diff {worst_c:.1e}, "
                          f"{skipped} degenerate spec(s) skipped of {len(oracle_runs)}")


@crit(8, "monogamy and KBI bounds")
def test_criterion_8_ckw_on_oracle_states(oracle_runs, record_property):
    worst = math.inf
    for spec, res, _ in oracle_runs:
        rep = monogamy_checks(res)
        assert rep.ckw_ok, (spec, rep.ckw_margins.min())
        worst = min(worst, float(rep.ckw_margins.min()))
    note(record_property, f"min CKW margin {worst:.2e} over {len(oracle_runs)} ground states")


@crit(8, "monogamy and KBI bounds")
def test_criterion_8_kbi_on_uniform_chains(oracle_runs, record_property):
    for spec, res, _ in oracle_runs:
        if spec.decay != "uniform":
            continue
        n = spec.length
        rep = monogamy_checks(res)
        cs = rep.pair_concurrence[np.triu_indices(n, 1)]
        assert np.ptp(cs) <= 1e-8, spec
        assert cs.max() <= 2 / n + 1e-8, spec
        note(record_property, f"uniform N={n} h={spec.h_x}: C={cs.max():.6f} <= 2/N={2 / n:.6f}")


def _config_text(spec, run_id):
    return f"""
run_id = "{run_id}"
[model]
decay = "{spec.decay}"
alpha = {spec.alpha}
j_xy = {spec.j_xy}
j_z = {spec.j_z}
h_x = {spec.h_x}
length = {spec.length}
[dmrg]
chi_max = 64
trunc_eps = 1e-14
energy_rel_tol = 1e-12
seed = 7
"""


@crit(9, "determinism")
def test_criterion_9_byte_identical_reruns(tmp_path, record_property):
    n_files = 0
    for k, spec in enumerate(ORACLE_SPECS):
        bodies = []
        for rerun in ("first", "second"):
            cfg = parse_config(_config_text(spec, f"c{k}"), base_dir=tmp_path / rerun)
            code, _ = execute(cfg)
            assert code == 0
            bodies.append({p.name: p.read_bytes() for p in sorted(cfg.run_dir.glob("*.csv"))})
        assert bodies[0] == bodies[1], spec
        n_files += len(bodies[0])
    note(record_property, f"{n_files} CSV files identical across two runs")


# ---------------------------------------------------------------------------
# 2: MPO construction
# ---------------------------------------------------------------------------


@crit(2, "MPO master property")
def test_criterion_2_mpo_master_property(record_property):
    worst = 0.0
    for decay in ("exponential", "power_law", "uniform", "nearest_neighbor"):
        for n in range(3, 11):
            spec = ModelSpec(decay, 0.8, 0.9, -0.7, 0.4, n)
            diff = float(np.max(np.abs(build_mpo(spec).to_dense() - kron_hamiltonian(spec))))
            assert diff <= 1e-12, (decay, n, diff)
            worst = max(worst, diff)
        assert set(build_elri_mpo(ModelSpec("exponential", 0.8, 1, 1, 0.4, 9)).bond_dims) == {5}
    assert build_plri_mpo(ModelSpec("power_law", 1.0, 1, 1, 0.5, 4)).bond_dims == (11, 8, 5)
    note(record_property, f"max entrywise deviation {worst:.1e}")


# ---------------------------------------------------------------------------
# 3: exponential decay on the infinite chain
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def infinite_profiles():
    out = {}
    for alpha in (0.05, 0.1, 0.2):
        res = solve(ModelSpec("exponential", alpha, 1.0, 1.0, 10.0, None), DmrgConfig(chi_max=128))
        out[alpha] = profile(res, 100)
    return out


@crit(3, "exponential decay, infinite chain")
def test_criterion_3_xi_decreases_with_alpha(infinite_profiles, record_property):
    xis = [truncation_length(infinite_profiles[a]) for a in (0.05, 0.1, 0.2)]
    note(record_property, f"xi = {xis} for alpha = 0.05, 0.1, 0.2")
    assert xis[0] > xis[1] > xis[2]


@crit(3, "exponential decay, infinite chain")
def test_criterion_3_log_linear_fit_quality(infinite_profiles, record_property):
    p = infinite_profiles[0.1]
    fit = fit_exponential_decay(p)
    note(record_property, f"alpha=0.1: r^2 = {fit.r_squared:.4f} over {fit.n_points} points "
                          f"(floor {p.noise_floor:.1e}), xi_fit = {fit['xi_fit']:.3f}")
    assert fit.r_squared > 0.99


# ---------------------------------------------------------------------------
# 4, 5: transition scan and log scaling
# ---------------------------------------------------------------------------

J_GRID = uniform_grid(-1.3, -0.7, 0.01)
SCAN_D = [1, 2, 3, 4, 5, 6]


@pytest.fixture(scope="module")
def transition_scan():
    tmpl = ModelSpec("exponential", 1.0, -1.0, 1.0, 0.0, 48)
    return derivative_scan(tmpl, SCAN_D, J_GRID, DmrgConfig(chi_max=128))


@crit(4, "transition detection")
def test_criterion_4_critical_point(transition_scan, record_property):
    j_star, _ = critical_point(transition_scan, d=1)
    ferro = transition_scan.coupling_values > -1.0 + 1e-9
    c_max = float(np.max(transition_scan.c_d_values[ferro]))
    note(record_property, f"J* = {j_star:.4f}; max C_d on the ferromagnetic side {c_max:.1e}")
    assert abs(j_star + 1.0) <= 0.05
    assert c_max < 1e-6


@crit(5, "log-scaling fit")
def test_criterion_5_synthetic_recovery(record_property):
    j = uniform_grid(-1.3, -0.7, 0.01)
    from lrxxz.analysis import DerivativeScan

    ds = np.arange(1, 7)
    k = -0.3838 * ds + 1.3724
    deriv = k[None, :] * np.log(np.abs(j + 1.0) + 1e-300)[:, None] + 0.05 * ds[None, :]
    scan = DerivativeScan(j, ds, np.zeros_like(deriv), deriv, 0.01, np.zeros(j.size, bool))
    fit = fit_log_scaling(scan, -1.0)
    note(record_property, f"synthetic m = {fit['m']:.10f}, m' = {fit['m_prime']:.10f}")
    assert abs(fit["m"] + 0.3838) <= 1e-6 and abs(fit["m_prime"] - 1.3724) <= 1e-6


@crit(5, "log-scaling fit")
def test_criterion_5_scan_slope_negative(transition_scan, record_property):
    j_star, _ = critical_point(transition_scan, d=1)
    fit = fit_log_scaling(transition_scan, j_star, side="below")
    note(record_property, f"scan fit (XY side): m = {fit['m']:.4f}, m' = {fit['m_prime']:.4f}")
    assert fit["m"] < 0


# ---------------------------------------------------------------------------
# 6: algebraic decay
# ---------------------------------------------------------------------------


@crit(6, "power-law decay")
def test_criterion_6_power_law(record_property):
    res = solve(ModelSpec("power_law", 0.05, 1.0, 1.0, 10.0, 60), DmrgConfig(chi_max=128))
    p = profile(res, 19, discard=20)
    fit = fit_power_law(p, p.c1)
    note(record_property, f"q = {fit['q']:.4f}, r^2 = {fit.r_squared:.4f}")
    assert fit["q"] > 0 and fit.r_squared > 0.95


# ---------------------------------------------------------------------------
# 7: fit recovery
# ---------------------------------------------------------------------------

PIECEWISE_ROWS = [
    (0.96, 0.50, 0.98, 0.52, 55),
    (0.96, 0.50, 0.98, 0.53, 98),
    (0.91, 0.49, 0.96, 0.55, 44),
    (0.91, 0.49, 0.96, 0.57, 74),
    (0.80, 0.46, 0.91, 0.62, 59),
    (0.77, 0.45, 0.97, 0.71, 105),
    (0.90, 0.49, 0.97, 0.58, 107),
]


@crit(7, "fit recovery")
def test_criterion_7_fit_recovery(record_property):
    kbi = fit_kbi_fine_grained(synthetic_kbi(0.9, 0.55, np.linspace(0.2, 5.0, 12)))
    assert abs(kbi["a"] - 0.9) <= 1e-4 and abs(kbi["b"] - 0.55) <= 1e-4
    worst = 0.0
    for row in PIECEWISE_ROWS:
        f = fit_piecewise_distribution(synthetic_piecewise(*row))
        got = (f["a1"], f["b1"], f["a2"], f["b2"], f["n_c"])
        worst = max(worst, max(abs(g - w) for g, w in zip(got, row)))
    assert worst <= 1e-4
    note(record_property, f"{len(PIECEWISE_ROWS)} piecewise tuples, max deviation {worst:.1e}")
