"""Hot inner loops, each with a numba and a numpy implementation.

The public names (``xxz_coo``, ``concurrence_batch``) dispatch on
``lrxxz._accel.HAVE_NUMBA``; the ``*_numpy`` variants are always importable so
tests and ``benchmarks/bench_kernels.py`` can compare both paths.
"""
from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

# sigma^y (x) sigma^y in the (uu, ud, du, dd) basis
YY = np.array(
    [[0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]]
)


# ---------------------------------------------------------------------------
# Sparse Hamiltonian assembly in the S^z product basis.
#
# Basis index x = sum_k b_k 2^(n-1-k) with b_k = 0 for up, 1 for down, so site 0
# is the most significant bit (same ordering as np.kron(site0, site1, ...)).
# ---------------------------------------------------------------------------


@njit
def _xxz_coo_numba(n, pi, pj, pw, j_xy, j_z, h_x, pin):
    dim = 1 << n
    npair = pi.shape[0]
    cap = dim * (1 + npair + n)
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    c = 0
    for x in range(dim):
        diag = 0.0
        for p in range(npair):
            i = pi[p]
            j = pj[p]
            bi = (x >> (n - 1 - i)) & 1
            bj = (x >> (n - 1 - j)) & 1
            szi = 0.5 - bi
            szj = 0.5 - bj
            diag -= pw[p] * j_z * szi * szj
            if bi != bj and j_xy != 0.0:
                rows[c] = x ^ ((1 << (n - 1 - i)) | (1 << (n - 1 - j)))
                cols[c] = x
                vals[c] = 0.5 * pw[p] * j_xy
                c += 1
        if pin != 0.0:
            diag -= pin * (0.5 - ((x >> (n - 1)) & 1))
        if h_x != 0.0:
            for k in range(n):
                rows[c] = x ^ (1 << (n - 1 - k))
                cols[c] = x
                vals[c] = 0.5 * h_x
                c += 1
        rows[c] = x
        cols[c] = x
        vals[c] = diag
        c += 1
    return rows[:c], cols[:c], vals[:c]


def xxz_coo_numpy(n, pi, pj, pw, j_xy, j_z, h_x, pin):
    dim = 1 << n
    x = np.arange(dim, dtype=np.int64)
    bits = [(x >> (n - 1 - k)) & 1 for k in range(n)]
    diag = np.zeros(dim)
    rows, cols, vals = [], [], []
    for i, j, w in zip(pi, pj, pw):
        bi, bj = bits[i], bits[j]
        diag -= w * j_z * (0.5 - bi) * (0.5 - bj)
        if j_xy != 0.0:
            sel = x[bi != bj]
            rows.append(sel ^ ((1 << (n - 1 - i)) | (1 << (n - 1 - j))))
            cols.append(sel)
            vals.append(np.full(sel.size, 0.5 * w * j_xy))
    if pin != 0.0:
        diag -= pin * (0.5 - bits[0])
    if h_x != 0.0:
        for k in range(n):
            rows.append(x ^ (1 << (n - 1 - k)))
            cols.append(x)
            vals.append(np.full(dim, 0.5 * h_x))
    rows.append(x)
    cols.append(x)
    vals.append(diag)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def xxz_coo(n, pi, pj, pw, j_xy, j_z, h_x, pin=0.0):
    """COO triplets of the long-range XXZ Hamiltonian.

    ``pi, pj, pw`` list the coupled pairs (i < j) and their decay weights.
    Duplicated (row, col) entries are meant to be summed by the caller.
    """
    pi = np.ascontiguousarray(pi, dtype=np.int64)
    pj = np.ascontiguousarray(pj, dtype=np.int64)
    pw = np.ascontiguousarray(pw, dtype=np.float64)
    args = (int(n), pi, pj, pw, float(j_xy), float(j_z), float(h_x), float(pin))
    if HAVE_NUMBA:
        return _xxz_coo_numba(*args)
    return xxz_coo_numpy(*args)


# ---------------------------------------------------------------------------
# Wootters concurrence for a stack of two-qubit density matrices.
#
# sqrt(lambda_k) of R = rho YY rho* YY are the singular values of the complex
# symmetric matrix tau = V^T YY V with rho = V V^dagger. Working with tau keeps
# the small sqrt(lambda) accurate to ~1e-16 * |tau| instead of ~1e-8.
# ---------------------------------------------------------------------------


@njit
def _concurrence_batch_numba(rhos, yy):
    k = rhos.shape[0]
    out = np.empty((k, 4), dtype=np.float64)
    pmin = np.empty(k, dtype=np.float64)
    yyc = yy.astype(np.complex128)
    for m in range(k):
        rho = 0.5 * (rhos[m] + rhos[m].conj().T)
        p, e = np.linalg.eigh(rho)
        pmin[m] = p[0]
        v = np.empty((4, 4), dtype=np.complex128)
        for c in range(4):
            s = np.sqrt(p[c]) if p[c] > 0.0 else 0.0
            for r in range(4):
                v[r, c] = e[r, c] * s
        tau = v.T @ (yyc @ v)
        _, sv, _ = np.linalg.svd(tau)
        out[m] = sv
    return out, pmin


def concurrence_batch_numpy(rhos, yy=YY):
    rho = 0.5 * (rhos + np.conj(np.swapaxes(rhos, -1, -2)))
    p, e = np.linalg.eigh(rho)
    v = e * np.sqrt(np.clip(p, 0.0, None))[:, None, :]
    tau = np.swapaxes(v, -1, -2) @ (yy @ v)
    return np.linalg.svd(tau, compute_uv=False), p[:, 0]


def concurrence_batch(rhos):
    """Return ``(sqrt_lambdas, min_rho_eigs)`` for a ``(k, 4, 4)`` stack.

    ``sqrt_lambdas`` is ``(k, 4)`` in descending order.
    """
    rhos = np.ascontiguousarray(rhos, dtype=np.complex128).reshape(-1, 4, 4)
    if HAVE_NUMBA:
        return _concurrence_batch_numba(rhos, YY)
    return concurrence_batch_numpy(rhos)
