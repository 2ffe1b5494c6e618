import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrxxz.ed import ed_rdm, ed_rdm1, ground_state_from_vector, kron_hamiltonian
from lrxxz.mpo import ModelSpec, build_mpo
from lrxxz.mps import (
    MPS,
    StructureError,
    UnitCellMPS,
    canonicalize,
    expectation,
    pair_rdms,
    read_mps,
    single_site_rdm,
    two_site_rdm,
    write_mps,
)


@given(n=st.integers(2, 7), bond=st.integers(1, 4), seed=st.integers(0, 1000), center=st.data())
def test_canonicalize_keeps_state_and_isometries(n, bond, seed, center):
    psi = MPS.random(n, bond=bond, seed=seed)
    c = center.draw(st.integers(0, n - 1))
    phi = canonicalize(psi, c)
    v, w = psi.to_dense(), phi.to_dense()
    np.testing.assert_allclose(w, v / np.linalg.norm(v), atol=1e-12)
    for k, t in enumerate(phi.tensors):
        if k < c:
            m = t.reshape(-1, t.shape[2])
            np.testing.assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)
        elif k > c:
            m = t.reshape(t.shape[0], -1)
            np.testing.assert_allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=1e-12)


def test_rdms_match_dense_reference():
    n = 6
    psi = MPS.random(n, bond=3, seed=4)
    v = psi.to_dense()
    gs = ground_state_from_vector(v, n)
    for i in range(n):
        np.testing.assert_allclose(single_site_rdm(psi, i), ed_rdm1(gs, i), atol=1e-12)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    many = pair_rdms(psi, pairs)
    for i, j in pairs:
        np.testing.assert_allclose(two_site_rdm(psi, i, j), ed_rdm(gs, i, j), atol=1e-12)
        np.testing.assert_allclose(many[(i, j)], ed_rdm(gs, i, j), atol=1e-12)


def test_expectation_matches_dense():
    spec = ModelSpec("power_law", 0.5, 1.0, 1.0, 0.4, 6)
    psi = MPS.random(6, bond=3, seed=2)
    v = psi.to_dense()
    v = v / np.linalg.norm(v)
    ref = np.vdot(v, kron_hamiltonian(spec) @ v).real
    assert expectation(psi, build_mpo(spec)) == pytest.approx(ref, abs=1e-12)


def test_from_dense_roundtrip():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(2**5) + 1j * rng.standard_normal(2**5)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(MPS.from_dense(v, 5).to_dense(), v, atol=1e-12)


def test_binary_roundtrip_and_corruption(tmp_path):
    psi = canonicalize(MPS.random(5, bond=3, seed=1), 2)
    p = tmp_path / "s.mps"
    write_mps(psi, p)
    back = read_mps(p)
    assert back.center == 2
    for a, b in zip(psi.tensors, back.tensors):
        np.testing.assert_array_equal(a, b)
    raw = p.read_bytes()
    (tmp_path / "bad.mps").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="not an MPS"):
        read_mps(tmp_path / "bad.mps")
    (tmp_path / "long.mps").write_bytes(raw + b"\0")
    with pytest.raises(ValueError, match="trailing"):
        read_mps(tmp_path / "long.mps")


def test_structure_errors():
    with pytest.raises(StructureError):
        MPS((np.ones((1, 2, 2)), np.ones((3, 2, 1))))
    with pytest.raises(StructureError):
        MPS((np.ones((2, 2, 1)),))


def _ghz_cell():
    a = np.zeros((2, 2, 2))
    a[0, 0, 0] = a[1, 1, 1] = 1.0
    return [a, a]


def test_unit_cell_cat_state_rdms():
    # |up...> + |down...>: degenerate transfer spectrum, RDMs must still be the GHZ ones
    psi = UnitCellMPS(_ghz_cell(), right_guess=np.eye(2) / 2)
    rho = psi.pair_rdms([(0, 5)])[(0, 5)]
    np.testing.assert_allclose(rho, np.diag([0.5, 0, 0, 0.5]), atol=1e-12)
    np.testing.assert_allclose(psi.rdm1(1), np.eye(2) / 2, atol=1e-12)


def test_unit_cell_product_state():
    up = np.zeros((1, 2, 1))
    up[0, 0, 0] = 1
    psi = UnitCellMPS([up, up])
    np.testing.assert_allclose(psi.rdm1(0), np.diag([1.0, 0.0]), atol=1e-14)
    assert psi.transfer_eigenvalue == pytest.approx(1.0)
