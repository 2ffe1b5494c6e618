"""Truncated SVD and a restarted Lanczos lowest-eigenpair solver."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg


class DecompositionError(RuntimeError):
    """SVD failed to converge."""

    def __init__(self, shape):
        super().__init__(f"SVD did not converge for a {shape[0]}x{shape[1]} matrix")
        self.shape = tuple(shape)


class LanczosConvergenceError(RuntimeError):
    """Lanczos ran out of iterations; carries the best pair found."""

    def __init__(self, eigenvalue, eigenvector, residual, iterations):
        super().__init__(
            f"Lanczos did not converge in {iterations} matvecs "
            f"(residual {residual:.3e}, best eigenvalue {eigenvalue:.15g})"
        )
        self.eigenvalue = eigenvalue
        self.eigenvector = eigenvector
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    truncation_error: float

    @property
    def rank(self) -> int:
        return self.singular_values.size


def as_matrix(m) -> np.ndarray:
    """Validate and coerce to a finite 2-d float64 or complex128 array."""
    a = np.asarray(m)
    a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def truncated_svd(m, chi_max: int, eps: float = 0.0) -> SvdResult:
    """SVD keeping at most ``chi_max`` values with normalized weight >= ``eps``.

    The weight of singular value ``s_k`` is ``s_k**2 / sum(s**2)``. At least one
    value is always kept. ``truncation_error`` is the discarded weight.
    """
    a = as_matrix(m)
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    try:
        u, s, vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(a.shape) from exc
    order = np.argsort(-s, kind="stable")
    s = s[order]
    total = float(np.sum(s * s))
    if total == 0.0:
        keep = 1
        terr = 0.0
    else:
        w = s * s / total
        keep = int(min(chi_max, max(1, np.count_nonzero(w >= eps))))
        terr = float(np.sum(w[keep:])) if keep < s.size else 0.0
    sel = order[:keep]
    return SvdResult(u[:, sel], s[:keep].copy(), vh[sel, :], min(max(terr, 0.0), 1.0))


def _check_hermitian(apply, dim, rng, trials=2, tol=1e-10):
    for _ in range(trials):
        u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        au, av = apply(u), apply(v)
        lhs, rhs = np.vdot(u, av), np.vdot(au, v)
        scale = max(1.0, np.linalg.norm(au) * np.linalg.norm(v))
        if abs(lhs - rhs) > tol * scale:
            raise ValueError(f"linear map is not Hermitian: |<u,Av>-<Au,v>| = {abs(lhs - rhs):.3e}")


def lanczos_lowest(
    apply: Callable[[np.ndarray], np.ndarray],
    v0,
    tol: float = 1e-10,
    max_iter: int = 2000,
    krylov_dim: int = 200,
    check_hermitian: bool = True,
    seed: int = 0,
) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of a Hermitian map by restarted Lanczos.

    The Krylov basis is fully reorthogonalized and capped at ``krylov_dim``
    vectors; on reaching the cap the iteration restarts from the current Ritz
    vector. A real start vector keeps everything in real arithmetic, so
    ``apply`` must then map real vectors to real vectors. Convergence is
    ``|A v - lam v| <= tol * |A|_est`` where ``|A|_est`` is the largest Ritz
    value magnitude seen. ``max_iter`` counts matvecs.
    """
    v = np.array(v0).ravel()
    v = v.astype(np.complex128 if np.iscomplexobj(v) else np.float64)
    dim = v.size
    nrm = np.linalg.norm(v)
    if dim == 0 or nrm == 0.0 or not np.isfinite(nrm):
        raise ValueError("start vector must be nonzero and finite")
    v /= nrm
    if check_hermitian:
        _check_hermitian(apply, dim, np.random.default_rng(seed))
    m = max(2, min(krylov_dim, dim))
    anorm = 0.0
    matvecs = 0
    theta, x, resid = np.nan, v, np.inf
    while True:
        basis = np.empty((m, dim), dtype=v.dtype)
        basis[0] = v
        alphas, betas = [], []
        for k in range(m):
            w = apply(basis[k])
            matvecs += 1
            a = float(np.vdot(basis[k], w).real)
            alphas.append(a)
            w = w - a * basis[k]
            if k > 0:
                w -= betas[-1] * basis[k - 1]
            # two passes of classical Gram-Schmidt
            for _ in range(2):
                c = (basis[: k + 1] @ w.conj()).conj()
                w -= c @ basis[: k + 1]
            b = float(np.linalg.norm(w))
            if k == 0:
                evals, evecs = np.array([a]), np.ones((1, 1))
            else:
                evals, evecs = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
            anorm = max(anorm, float(np.max(np.abs(evals))), abs(a) + b)
            theta = float(evals[0])
            y = evecs[:, 0]
            resid = abs(b * y[-1])
            invariant = b <= 1e-14 * max(anorm, 1e-300)
            if resid <= tol * anorm or invariant or matvecs >= max_iter or k == m - 1:
                x = y @ basis[: k + 1]
                x /= np.linalg.norm(x)
                break
            betas.append(b)
            basis[k + 1] = w / b
        if resid <= tol * anorm or invariant:
            return theta, x
        if matvecs >= max_iter:
            raise LanczosConvergenceError(theta, x, resid, matvecs)
        v = x
