import numpy as np
import pytest

from lrxxz.dmrg import DmrgConfig, PRESETS, fdmrg_ground, idmrg_ground, pinning_field, solve
from lrxxz.ed import ed_ground, kron_hamiltonian
from lrxxz.entanglement import profile
from lrxxz.mpo import SX, SY, SZ, ModelSpec, build_mpo
from lrxxz.mps import pair_rdms, single_site_rdm

EXACT = DmrgConfig(chi_max=64, trunc_eps=1e-14)


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec("exponential", 1.0, 1.0, 1.0, 1.0, 8),
        ModelSpec("power_law", 0.5, 1.0, 1.0, 1.0, 10),  # quasi-degenerate flip-parity pair
        ModelSpec("uniform", 0.0, -0.6, 1.0, 0.5, 9),
        ModelSpec("exponential", 0.3, -1.2, 1.0, 0.0, 8),  # pinned
    ],
    ids=["elri", "plri-cat", "uniform", "pinned"],
)
def test_energy_matches_exact_diagonalization(spec):
    res = solve(spec, EXACT)
    ref = ed_ground(spec, pin=res.pin)
    assert res.converged
    assert abs(res.energy - ref.energy) <= 1e-9 * abs(ref.energy)


def test_field_only_chain_is_exact():
    res = solve(ModelSpec("uniform", 0.0, 0.0, 0.0, 2.0, 12), DmrgConfig(chi_max=8))
    assert res.energy == pytest.approx(-12.0, abs=1e-12)
    assert res.state.bond_dims == (1,) * 11 or max(res.state.bond_dims) <= 2


def test_ground_state_variance_is_small():
    spec = ModelSpec("power_law", 0.8, 1.0, 0.5, 0.7, 8)
    res = solve(spec, EXACT)
    v = res.state.to_dense()
    v = v / np.linalg.norm(v)
    h = kron_hamiltonian(spec, pin=res.pin)
    hv = h @ v
    var = np.vdot(hv, hv).real - np.vdot(v, hv).real ** 2
    assert var < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_result_independent_of_seed(seed):
    spec = ModelSpec("exponential", 0.5, 1.0, 1.0, 0.8, 12)
    ref = solve(spec, DmrgConfig(chi_max=64, seed=0)).energy
    assert solve(spec, DmrgConfig(chi_max=64, seed=seed)).energy == pytest.approx(ref, rel=1e-9)


def test_sweep_energies_do_not_rise():
    res = fdmrg_ground(build_mpo(ModelSpec("power_law", 0.3, 1.0, 1.0, 2.0, 16)), DmrgConfig(chi_max=24))
    e = np.array(res.energy_history)
    assert np.all(np.diff(e) <= 1e-9 * abs(e[-1]))


def test_truncation_error_is_worst_sweep():
    res = fdmrg_ground(build_mpo(ModelSpec("power_law", 0.3, 1.0, 1.0, 2.0, 16)), DmrgConfig(chi_max=8))
    assert res.max_truncation_error == pytest.approx(max(res.truncation_history))
    assert res.max_truncation_error > 0


def test_unconverged_flag():
    res = fdmrg_ground(build_mpo(ModelSpec("power_law", 0.3, 1.0, 1.0, 2.0, 12)), DmrgConfig(max_sweeps=1))
    assert not res.converged and res.sweeps_used == 1


def test_checkpoint_resume_reaches_same_energy(tmp_path):
    op = build_mpo(ModelSpec("exponential", 0.5, 1.0, 1.0, 1.5, 14))
    cfg = DmrgConfig(chi_max=32)
    fresh = fdmrg_ground(op, cfg)
    part = fdmrg_ground(op, cfg.with_(max_sweeps=1), checkpoint=tmp_path)
    assert (tmp_path / "state.mps").exists() and not part.converged
    done = fdmrg_ground(op, cfg, checkpoint=tmp_path, resume=True)
    assert done.converged
    assert done.energy == pytest.approx(fresh.energy, rel=1e-10)
    assert len(done.energy_history) > 1


def test_config_validation_and_presets():
    with pytest.raises(ValueError):
        DmrgConfig(chi_max=1)
    with pytest.raises(ValueError):
        DmrgConfig(trunc_eps=-1)
    with pytest.raises(ValueError):
        DmrgConfig(energy_rel_tol=0)
    assert PRESETS["paper"].chi_max == 500 and PRESETS["paper"].max_sweeps == 200
    assert PRESETS["desk"].chi_max == 128 and PRESETS["desk"].max_sweeps == 60


def test_pinning_only_without_field():
    assert pinning_field(ModelSpec("uniform", 0.0, 2.0, 1.0, 0.0, 4)) == pytest.approx(2e-6)
    assert pinning_field(ModelSpec("uniform", 0.0, 2.0, 1.0, 0.1, 4)) == 0.0


def test_infinite_field_only_density():
    res = idmrg_ground(ModelSpec("exponential", 1.0, 0.0, 0.0, 4.0, None), DmrgConfig(chi_max=8))
    assert res.converged
    assert res.energy == pytest.approx(-2.0, abs=1e-12)


def _local_energy(spec, state, i, r_max):
    pairs = [(i, i + r) for r in range(1, r_max + 1)]
    rdms = pair_rdms(state, pairs)
    bond = spec.j_xy * (np.kron(SX, SX) + np.kron(SY, SY)).real - spec.j_z * np.kron(SZ, SZ).real
    e = spec.h_x * np.trace(single_site_rdm(state, i) @ SX).real
    for (a, b), rho in rdms.items():
        e += float(spec.coupling(b - a)) * np.trace(rho @ bond).real
    return e


def test_infinite_chain_matches_finite_bulk():
    spec = ModelSpec("exponential", 3.0, 1.0, 1.0, 1.0, None)
    inf = idmrg_ground(spec, DmrgConfig(chi_max=64))
    assert inf.converged
    # boundary corrections decay like exp(-0.57 d); 26 sites in they are ~1e-10
    fin = solve(spec.with_(length=56), DmrgConfig(chi_max=64))
    e_bulk = _local_energy(spec, fin.state, 26, 12)
    assert inf.energy == pytest.approx(e_bulk, abs=1e-9)
    c_inf = profile(inf, 3).values
    c_fin = profile(fin, 3, discard=26).values
    np.testing.assert_allclose(c_inf, c_fin, atol=1e-6)
