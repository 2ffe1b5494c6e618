import numpy as np
import pytest

from lrxxz.ed import (
    SizeError,
    ed_ground,
    ed_rdm,
    ed_rdm1,
    ground_state_from_vector,
    kron_hamiltonian,
    sparse_hamiltonian,
)
from lrxxz.mpo import ModelSpec


def test_two_site_spectrum_analytic():
    # H = J_xy (SxSx + SySy) - J_z SzSz on two sites, f(1) = 1
    jxy, jz = 0.8, 1.3
    h = kron_hamiltonian(ModelSpec("nearest_neighbor", 0.0, jxy, jz, 0.0, 2))
    expected = sorted([-jz / 4, -jz / 4, jz / 4 + jxy / 2, jz / 4 - jxy / 2])
    np.testing.assert_allclose(np.linalg.eigvalsh(h), expected, atol=1e-14)


@pytest.mark.parametrize("n", [4, 9, 12])
def test_field_only_energy(n):
    gs = ed_ground(ModelSpec("uniform", 0.0, 0.0, 0.0, 3.0, n))
    assert gs.energy == pytest.approx(-1.5 * n, abs=1e-10)
    assert not gs.degenerate


def test_sparse_path_matches_dense_path():
    spec = ModelSpec("power_law", 0.6, 1.0, 1.0, 0.7, 10)
    dense = ed_ground(spec).energy
    h = sparse_hamiltonian(spec.with_(length=11))
    big = ed_ground(spec.with_(length=11))
    assert big.energy == pytest.approx(np.linalg.eigvalsh(h.toarray())[0], abs=1e-10)
    assert dense == pytest.approx(np.linalg.eigvalsh(kron_hamiltonian(spec))[0], abs=1e-10)


def test_degenerate_flag_for_zero_field_ferromagnet():
    gs = ed_ground(ModelSpec("uniform", 0.0, 0.0, 1.0, 0.0, 6))
    assert gs.degenerate


def test_rdms_of_ghz_state():
    n = 5
    v = np.zeros(2**n)
    v[0] = v[-1] = 1
    gs = ground_state_from_vector(v, n)
    rho = ed_rdm(gs, 1, 3)
    np.testing.assert_allclose(rho, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)
    np.testing.assert_allclose(ed_rdm1(gs, 2), np.eye(2) / 2, atol=1e-15)


def test_size_limits_and_bad_indices():
    with pytest.raises(SizeError):
        ed_ground(ModelSpec("uniform", 0.0, 1.0, 1.0, 1.0, 15))
    gs = ed_ground(ModelSpec("uniform", 0.0, 1.0, 1.0, 1.0, 4))
    with pytest.raises(ValueError):
        ed_rdm(gs, 2, 1)
    with pytest.raises(ValueError):
        ed_rdm1(gs, 4)
