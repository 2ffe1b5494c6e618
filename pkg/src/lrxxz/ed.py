"""Exact diagonalization of the long-range XXZ chain (N <= 14).

This is the reference every DMRG result is checked against, so it shares no
code with the MPO machinery: the Hamiltonian is assembled term by term in the
S^z product basis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import kernels
from .mpo import ModelSpec

MAX_SITES = 14
DENSE_LIMIT = 10
DEGENERACY_GAP = 1e-8

_I = np.eye(2)
_SX = np.array([[0.0, 0.5], [0.5, 0.0]])
_SY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
_SZ = np.array([[0.5, 0.0], [0.0, -0.5]])


class SizeError(ValueError):
    """Chain too long for exact diagonalization."""


@dataclass(frozen=True)
class DenseGroundState:
    n: int
    energy: float
    vector: np.ndarray
    gap: float
    degenerate: bool


def _embed(ops: dict, n: int) -> np.ndarray:
    return reduce(np.kron, [ops.get(k, _I) for k in range(n)])


def kron_hamiltonian(spec: ModelSpec, pin: float = 0.0) -> np.ndarray:
    """Dense H built by Kronecker-embedding every pair and site term.

    Deliberately naive; used as the independent reference for small chains.
    """
    n = _check_size(spec, DENSE_LIMIT)
    dim = 2**n
    h = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(n):
        for j in range(i + 1, n):
            f = float(spec.coupling(j - i))
            if f == 0.0:
                continue
            h += f * spec.j_xy * (_embed({i: _SX, j: _SX}, n) + _embed({i: _SY, j: _SY}, n))
            h -= f * spec.j_z * _embed({i: _SZ, j: _SZ}, n)
        h += spec.h_x * _embed({i: _SX}, n)
    if pin:
        h -= pin * _embed({0: _SZ}, n)
    return h


def sparse_hamiltonian(spec: ModelSpec, pin: float = 0.0) -> scipy.sparse.csr_matrix:
    """Sparse real H from the bit-basis assembly kernel."""
    n = _check_size(spec, MAX_SITES)
    pi, pj, pw = spec.pairs()
    rows, cols, vals = kernels.xxz_coo(n, pi, pj, pw, spec.j_xy, spec.j_z, spec.h_x, pin)
    dim = 2**n
    return scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()


def _check_size(spec: ModelSpec, limit: int) -> int:
    if spec.infinite:
        raise SizeError("exact diagonalization needs a finite chain")
    if spec.length > limit:
        raise SizeError(f"N={spec.length} exceeds the exact-diagonalization limit of {limit}")
    return spec.length


def ed_ground(spec: ModelSpec, pin: float = 0.0) -> DenseGroundState:
    """Lowest eigenpair of H; ``degenerate`` is set when the gap is below 1e-8."""
    n = _check_size(spec, MAX_SITES)
    if n <= DENSE_LIMIT:
        h = sparse_hamiltonian(spec, pin).toarray()
        evals, evecs = scipy.linalg.eigh(h, subset_by_index=[0, 1])
        scale = max(1.0, float(np.max(np.sum(np.abs(h), axis=0))))
    else:
        h = sparse_hamiltonian(spec, pin)
        rng = np.random.default_rng(0)
        evals, evecs = scipy.sparse.linalg.eigsh(h, k=2, which="SA", tol=1e-13, v0=rng.standard_normal(2**n))
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
        scale = max(1.0, float(scipy.sparse.linalg.norm(h, ord=1)))
    e0 = float(evals[0])
    v = evecs[:, 0].astype(np.complex128)
    v /= np.linalg.norm(v)
    # fix the global phase: largest-magnitude amplitude real positive
    k = int(np.argmax(np.abs(v)))
    v *= np.abs(v[k]) / v[k]
    resid = np.linalg.norm(h @ v - e0 * v)
    if resid > 1e-9 * scale:
        raise RuntimeError(f"ED residual {resid:.3e} exceeds 1e-9 * |H|")
    gap = float(evals[1] - evals[0])
    return DenseGroundState(n, e0, v, gap, gap < DEGENERACY_GAP)


def ed_rdm(gs: DenseGroundState, i: int, j: int) -> np.ndarray:
    """Exact 4x4 RDM of sites i < j, basis (uu, ud, du, dd) with site i left."""
    n = gs.n
    if not 0 <= i < j < n:
        raise ValueError(f"need 0 <= i < j < N, got i={i}, j={j}, N={n}")
    psi = gs.vector.reshape([2] * n)
    psi = np.moveaxis(psi, (i, j), (0, 1)).reshape(4, -1)
    return psi @ psi.conj().T


def ed_rdm1(gs: DenseGroundState, i: int) -> np.ndarray:
    n = gs.n
    if not 0 <= i < n:
        raise ValueError(f"site {i} out of range for N={n}")
    psi = np.moveaxis(gs.vector.reshape([2] * n), i, 0).reshape(2, -1)
    return psi @ psi.conj().T


def ground_state_from_vector(vector, n: int) -> DenseGroundState:
    """Wrap an arbitrary normalized state (e.g. a GHZ vector) for the RDM helpers."""
    v = np.asarray(vector, dtype=np.complex128).reshape(-1)
    if v.size != 2**n:
        raise ValueError("vector length must be 2^n")
    return DenseGroundState(n, float("nan"), v / np.linalg.norm(v), float("nan"), False)
