import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrxxz.ed import kron_hamiltonian, sparse_hamiltonian
from lrxxz.mpo import (
    MPO,
    ModelSpec,
    UnsupportedModelError,
    build_elri_mpo,
    build_mpo,
    build_nn_mpo,
    build_plri_mpo,
    build_uniform_mpo,
    compress_mpo,
    elri_bulk_tensor,
    plri_bond_dim,
    realify_bulk,
    realify_mpo,
)

DECAYS = ["exponential", "power_law", "uniform", "nearest_neighbor"]


@pytest.mark.parametrize("decay", DECAYS)
@pytest.mark.parametrize("n", range(3, 11))
def test_mpo_contracts_to_kron_hamiltonian(decay, n):
    spec = ModelSpec(decay, 0.7, -0.8, 1.1, 0.6, n)
    np.testing.assert_allclose(build_mpo(spec).to_dense(), kron_hamiltonian(spec), atol=1e-12, rtol=0)


@given(
    decay=st.sampled_from(DECAYS),
    n=st.integers(2, 7),
    alpha=st.floats(0, 4),
    jxy=st.floats(-2, 2),
    jz=st.floats(-2, 2),
    h=st.floats(-10, 10),
    pin=st.sampled_from([0.0, 1e-6, -0.3]),
)
def test_mpo_master_property_random_parameters(decay, n, alpha, jxy, jz, h, pin):
    spec = ModelSpec(decay, alpha, jxy, jz, h, n)
    op = build_mpo(spec, pin=pin)
    ref = kron_hamiltonian(spec, pin=pin)
    np.testing.assert_allclose(op.to_dense(), ref, atol=1e-12 * max(1, np.abs(ref).max()), rtol=0)
    # the sparse bit-kernel Hamiltonian is a second, independent construction
    np.testing.assert_allclose(sparse_hamiltonian(spec, pin).toarray(), ref, atol=1e-12, rtol=0)


@pytest.mark.parametrize("n", [3, 6, 10])
def test_elri_bond_is_five(n):
    op = build_elri_mpo(ModelSpec("exponential", 1.0, 1.0, 1.0, 0.5, n))
    assert set(op.bond_dims) == {5}


def test_plri_expanded_bonds_for_four_sites():
    op = build_plri_mpo(ModelSpec("power_law", 1.0, 1.0, 1.0, 0.5, 4))
    assert op.bond_dims == (11, 8, 5)
    assert [plri_bond_dim(4, k) for k in (1, 2, 3)] == [11, 8, 5]


def test_uniform_is_plri_at_alpha_zero():
    a = build_uniform_mpo(ModelSpec("uniform", 0.0, 1.0, 1.0, 0.3, 6)).to_dense()
    b = build_plri_mpo(ModelSpec("power_law", 0.0, 1.0, 1.0, 0.3, 6)).to_dense()
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_nn_builder_is_elri_with_vanishing_tail():
    a = build_nn_mpo(ModelSpec("nearest_neighbor", 0.0, 1.0, 0.5, 0.3, 6)).to_dense()
    ref = kron_hamiltonian(ModelSpec("nearest_neighbor", 0.0, 1.0, 0.5, 0.3, 6))
    np.testing.assert_allclose(a, ref, atol=1e-14)


@pytest.mark.parametrize("decay", DECAYS)
def test_compression_and_real_gauge_preserve_operator(decay):
    spec = ModelSpec(decay, 0.4, 1.0, 1.0, 1.0, 8)
    op = build_mpo(spec)
    c = compress_mpo(op)
    r = realify_mpo(c)
    assert r is not None and r.is_real
    assert max(c.bond_dims) <= max(op.bond_dims)
    np.testing.assert_allclose(c.to_dense(), op.to_dense(), atol=1e-12)
    np.testing.assert_allclose(r.to_dense(), op.to_dense(), atol=1e-12)


def test_plri_compression_shrinks_large_chain():
    op = build_plri_mpo(ModelSpec("power_law", 0.5, 1.0, 1.0, 1.0, 30))
    assert max(compress_mpo(op).bond_dims) < max(op.bond_dims)


def test_realify_returns_none_for_complex_operator():
    t = np.zeros((1, 2, 2, 1), dtype=complex)
    t[0, :, :, 0] = [[0, -1j], [1j, 0]]
    assert realify_mpo(MPO((t,))) is None


def _chain_from_bulk(w, n):
    # left boundary picks channel 0, right boundary the last channel
    acc = w[0]
    for _ in range(n - 1):
        acc = np.einsum("abw,wcdx->acbdx", acc, w)
        s = acc.shape
        acc = acc.reshape(s[0] * s[1], s[2] * s[3], s[4])
    return acc[:, :, -1]


@pytest.mark.parametrize("n", [2, 4, 6])
def test_bulk_tensor_and_its_real_gauge_generate_the_chain(n):
    spec = ModelSpec("exponential", 0.5, 0.9, 1.2, 0.2, None)
    w = elri_bulk_tensor(spec, np.exp(-spec.alpha))
    wr = realify_bulk(w)
    assert wr.dtype == np.float64 and wr.shape == (5, 2, 2, 5)
    ref = kron_hamiltonian(spec.with_(length=n))
    np.testing.assert_allclose(_chain_from_bulk(w, n), ref, atol=1e-12)
    np.testing.assert_allclose(_chain_from_bulk(wr, n), ref, atol=1e-12)


def test_unsupported_models():
    with pytest.raises(UnsupportedModelError):
        ModelSpec("power_law", 1.0, 1.0, 1.0, 1.0, None)
    with pytest.raises(ValueError):
        ModelSpec("cubic", 1.0)
    with pytest.raises(ValueError):
        ModelSpec("exponential", -1.0, length=4)
    with pytest.raises(ValueError):
        ModelSpec("exponential", 1.0, length=1)
