import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrxxz import kernels
from lrxxz._accel import HAVE_NUMBA
from lrxxz.mpo import ModelSpec

from conftest import random_rho

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba disabled")


def _coo_dense(n, coo):
    r, c, v = coo
    h = np.zeros((2**n, 2**n))
    np.add.at(h, (r, c), v)
    return h


@needs_numba
@given(
    n=st.integers(2, 7),
    decay=st.sampled_from(["exponential", "power_law", "uniform", "nearest_neighbor"]),
    alpha=st.floats(0, 3),
    h=st.floats(-5, 5),
    pin=st.floats(-1, 1),
)
def test_xxz_numba_equals_numpy(n, decay, alpha, h, pin):
    spec = ModelSpec(decay, alpha, 0.7, 1.3, h, n)
    pi, pj, pw = spec.pairs()
    args = (n, pi.astype(np.int64), pj.astype(np.int64), pw, spec.j_xy, spec.j_z, spec.h_x, pin)
    a = _coo_dense(n, kernels._xxz_coo_numba(*args))
    b = _coo_dense(n, kernels.xxz_coo_numpy(*args))
    np.testing.assert_allclose(a, b, atol=1e-14)


@needs_numba
def test_concurrence_numba_equals_numpy(rng):
    rhos = np.array([random_rho(rng, rank=k % 4 + 1) for k in range(50)])
    s1, p1 = kernels._concurrence_batch_numba(rhos, kernels.YY)
    s2, p2 = kernels.concurrence_batch_numpy(rhos)
    np.testing.assert_allclose(s1, s2, atol=1e-14)
    np.testing.assert_allclose(p1, p2, atol=1e-14)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, LRXXZ_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from lrxxz._accel import backend; print(backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_numpy_backend_gives_same_physics():
    code = (
        "from lrxxz.ed import ed_ground; from lrxxz.mpo import ModelSpec;"
        "print(repr(ed_ground(ModelSpec('power_law', 0.5, 1.0, 1.0, 1.0, 8)).energy))"
    )
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, LRXXZ_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)
