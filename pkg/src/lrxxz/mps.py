"""Matrix product states: canonical form, reduced density matrices, I/O.

Site tensors have shape ``(left_bond, 2, right_bond)`` with physical index 0 =
spin up (S^z = +1/2) and 1 = spin down. A dense state vector is indexed with
site 0 as the most significant qubit.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .linalg import truncated_svd
from .mpo import MPO


class StructureError(ValueError):
    """Inconsistent bond dimensions in an MPS."""


class HermiticityError(ValueError):
    """An expectation value that should be real has a large imaginary part."""


def _qr_pos(a: np.ndarray):
    """QR with a non-negative real diagonal in R (unique for full column rank)."""
    q, r = np.linalg.qr(a)
    d = np.diagonal(r).copy()
    ph = np.ones_like(d)
    nz = np.abs(d) > 0
    ph[nz] = d[nz] / np.abs(d[nz])
    q = q * ph[None, :]
    r = np.conj(ph)[:, None] * r
    return q, r


@dataclass(frozen=True)
class MPS:
    tensors: tuple
    center: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        if not ts:
            raise StructureError("empty MPS")
        for k, t in enumerate(ts):
            if t.ndim != 3 or t.shape[1] != 2:
                raise StructureError(f"site {k}: tensor shape {t.shape} is not (Dl, 2, Dr)")
            if k and ts[k - 1].shape[2] != t.shape[0]:
                raise StructureError(
                    f"bond {k - 1}-{k}: right dim {ts[k - 1].shape[2]} != left dim {t.shape[0]}"
                )
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise StructureError("boundary bonds of a finite MPS must have dimension 1")
        if self.center is not None and not 0 <= self.center < len(ts):
            raise StructureError(f"canonical center {self.center} out of range")
        object.__setattr__(self, "tensors", ts)

    def __len__(self):
        return len(self.tensors)

    @property
    def bond_dims(self) -> tuple:
        return tuple(t.shape[2] for t in self.tensors[:-1])

    # -- constructors -----------------------------------------------------

    @classmethod
    def product(cls, local_states: Sequence) -> "MPS":
        """Product state from a list of 2-component local vectors."""
        ts = []
        for v in local_states:
            v = np.asarray(v, dtype=np.complex128)
            ts.append((v / np.linalg.norm(v)).reshape(1, 2, 1))
        return cls(tuple(ts), center=0)

    @classmethod
    def random(cls, n: int, bond: int = 2, seed: int = 0, noise: float = 1.0) -> "MPS":
        """Seeded random state: a random product state plus ``noise`` times a
        random bond-``bond`` perturbation, right-canonical with center 0."""
        rng = np.random.default_rng(seed)
        ts = []
        for k in range(n):
            dl = 1 if k == 0 else min(bond, 2**k, 2 ** (n - k))
            dr = 1 if k == n - 1 else min(bond, 2 ** (k + 1), 2 ** (n - k - 1))
            t = noise * (rng.standard_normal((dl, 2, dr)) + 1j * rng.standard_normal((dl, 2, dr))) / np.sqrt(2)
            t[0, :, 0] += rng.standard_normal(2) + 1j * rng.standard_normal(2)
            ts.append(t)
        return canonicalize(cls(tuple(ts)), 0)

    @classmethod
    def from_dense(cls, vec, n: int, chi_max: int = 2**30, eps: float = 0.0) -> "MPS":
        """Exact (or truncated) MPS of a 2^n vector by successive SVDs."""
        v = np.asarray(vec, dtype=np.complex128).reshape(-1)
        if v.size != 2**n:
            raise ValueError(f"vector of size {v.size} is not 2^{n}")
        ts = []
        rest = v.reshape(1, -1)
        for k in range(n - 1):
            dl = rest.shape[0]
            res = truncated_svd(rest.reshape(dl * 2, -1), chi_max, eps)
            ts.append(res.left.reshape(dl, 2, -1))
            rest = res.singular_values[:, None] * res.right
        ts.append(rest.reshape(rest.shape[0], 2, 1))
        psi = cls(tuple(ts), center=n - 1)
        nrm = np.linalg.norm(ts[-1])
        return psi._replace_tensor(n - 1, ts[-1] / nrm) if nrm else psi

    def _replace_tensor(self, k: int, t) -> "MPS":
        ts = list(self.tensors)
        ts[k] = t
        return MPS(tuple(ts), self.center, dict(self.meta))

    # -- dense helpers ----------------------------------------------------

    def to_dense(self) -> np.ndarray:
        if len(self) > 20:
            raise ValueError("dense contraction is limited to N <= 20")
        acc = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            acc = (acc @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return acc.reshape(-1)

    def norm_squared(self) -> float:
        env = np.ones((1, 1), dtype=np.complex128)
        for t in self.tensors:
            env = _transfer_left(env, t)
        return float(env[0, 0].real)

    # -- serialization ----------------------------------------------------

    def save(self, path) -> None:
        write_mps(self, path)

    @classmethod
    def load(cls, path) -> "MPS":
        return read_mps(path)


def _transfer_left(env: np.ndarray, t: np.ndarray) -> np.ndarray:
    """env'[b', b] = sum conj(t[a', s, b']) env[a', a] t[a, s, b]."""
    x = np.tensordot(env, t, axes=(1, 0))  # (a', s, b)
    return np.tensordot(t.conj(), x, axes=([0, 1], [0, 1]))


def _transfer_right(env: np.ndarray, t: np.ndarray) -> np.ndarray:
    """env'[a, a'] = sum t[a, s, b] env[b, b'] conj(t[a', s, b'])."""
    x = np.tensordot(t, env, axes=(2, 0))  # (a, s, b')
    return np.tensordot(x, t.conj(), axes=([1, 2], [1, 2]))


def canonicalize(psi: MPS, center: int) -> MPS:
    """Mixed canonical form with the orthogonality center at ``center``.

    Sites left of ``center`` become left isometries, sites right of it right
    isometries, and the state is normalized. Bond dimensions may shrink where
    they exceed the local Hilbert-space bound.
    """
    n = len(psi)
    if not 0 <= center < n:
        raise ValueError(f"center {center} out of range for N={n}")
    ts = list(psi.tensors)
    for k in range(center):
        dl, _, dr = ts[k].shape
        q, r = _qr_pos(ts[k].reshape(dl * 2, dr))
        ts[k] = q.reshape(dl, 2, q.shape[1])
        ts[k + 1] = np.tensordot(r, ts[k + 1], axes=(1, 0))
    for k in range(n - 1, center, -1):
        dl, _, dr = ts[k].shape
        q, r = _qr_pos(ts[k].reshape(dl, 2 * dr).T)
        ts[k] = q.T.reshape(q.shape[1], 2, dr)
        ts[k - 1] = np.tensordot(ts[k - 1], r.T, axes=(2, 0))
    nrm = np.linalg.norm(ts[center])
    if nrm == 0:
        raise ValueError("MPS has zero norm")
    ts[center] = ts[center] / nrm
    return MPS(tuple(ts), center, dict(psi.meta))


# ---------------------------------------------------------------------------
# Reduced density matrices
# ---------------------------------------------------------------------------


class _Environments:
    """Cached left/right norm environments of an MPS (no canonical form needed)."""

    def __init__(self, psi: MPS):
        self.psi = psi
        n = len(psi)
        c = psi.center
        ts = psi.tensors
        self.left = [None] * (n + 1)
        self.right = [None] * (n + 1)
        self.left[0] = np.ones((1, 1), dtype=np.complex128)
        self.right[n] = np.ones((1, 1), dtype=np.complex128)
        for k in range(n):
            if c is not None and k < c:
                d = ts[k].shape[2]
                self.left[k + 1] = np.eye(d, dtype=np.complex128)
            else:
                self.left[k + 1] = _transfer_left(self.left[k], ts[k])
        for k in range(n - 1, -1, -1):
            if c is not None and k > c:
                d = ts[k].shape[0]
                self.right[k] = np.eye(d, dtype=np.complex128)
            else:
                self.right[k] = _transfer_right(self.right[k + 1], ts[k])
        self.norm = float(self.left[n][0, 0].real)

    def rdm1(self, i: int) -> np.ndarray:
        t = self.psi.tensors[i]
        x = np.tensordot(self.left[i], t, axes=(1, 0))  # (a', s, b)
        x = np.tensordot(x, self.right[i + 1], axes=(2, 0))  # (a', s, b')
        rho = np.tensordot(x, t.conj(), axes=([0, 2], [0, 2]))  # (s, s')
        return rho / self.norm

    def rdm2_from(self, i: int, js: Iterable[int]) -> dict:
        """Two-site RDMs for (i, j) over increasing ``js`` with one ladder pass."""
        out = _ladder_rdms(self.psi.tensors.__getitem__, self.left[i], i, js, self.right.__getitem__)
        return {j: rho / self.norm for j, rho in out.items()}


def _ladder_rdms(tensor, lenv, i, js, renv_after) -> dict:
    """Unnormalized RDMs of (i, j) for sorted ``js``.

    ``tensor(k)`` returns site k, ``lenv`` is the (bra, ket) environment left of
    site i and ``renv_after(j + 1)`` the (ket, bra) environment right of j.
    """
    js = sorted(set(js))
    out = {}
    if not js:
        return out
    t = tensor(i)
    # ladder[s, s', b, b'] with b ket, b' bra
    x = np.tensordot(lenv, t, axes=(1, 0))  # (a', s, b)
    ladder = np.tensordot(x, t.conj(), axes=(0, 0)).transpose(0, 2, 1, 3)
    k = i + 1
    for j in js:
        while k < j:
            tk = tensor(k)
            y = np.tensordot(ladder, tk, axes=(2, 0))  # (s, s', b', u, c)
            ladder = np.tensordot(y, tk.conj(), axes=([2, 3], [0, 1]))  # (s, s', c, c')
            k += 1
        tj = tensor(j)
        y = np.tensordot(ladder, tj, axes=(2, 0))  # (s, s', b', u, c)
        y = np.tensordot(y, renv_after(j + 1), axes=(4, 0))  # (s, s', b', u, c')
        rho = np.tensordot(y, tj.conj(), axes=([2, 4], [0, 2]))  # (s, s', u, u')
        out[j] = rho.transpose(0, 2, 1, 3).reshape(4, 4)
    return out


def single_site_rdm(psi: MPS, i: int) -> np.ndarray:
    """2x2 reduced density matrix of site ``i``."""
    if not 0 <= i < len(psi):
        raise ValueError(f"site {i} out of range for N={len(psi)}")
    return _Environments(psi).rdm1(i)


def two_site_rdm(psi: MPS, i: int, j: int) -> np.ndarray:
    """4x4 reduced density matrix of sites i < j, basis (uu, ud, du, dd), site i left.

    Cost is linear in ``j - i``: the ladder between the sites is contracted
    directly instead of forming the global state.
    """
    if not 0 <= i < j < len(psi):
        raise ValueError(f"need 0 <= i < j < N, got i={i}, j={j}, N={len(psi)}")
    return _Environments(psi).rdm2_from(i, [j])[j]


def pair_rdms(psi: MPS, pairs: Iterable[tuple]) -> dict:
    """Batch version of :func:`two_site_rdm` sharing environments and ladders.

    Also accepts a :class:`UnitCellMPS`, for which sites are unbounded.
    """
    if isinstance(psi, UnitCellMPS):
        return psi.pair_rdms(pairs)
    env = _Environments(psi)
    by_i = {}
    for i, j in pairs:
        if not 0 <= i < j < len(psi):
            raise ValueError(f"need 0 <= i < j < N, got ({i}, {j})")
        by_i.setdefault(i, []).append(j)
    out = {}
    for i, js in by_i.items():
        for j, rho in env.rdm2_from(i, js).items():
            out[(i, j)] = rho
    return out


def expectation(psi: MPS, op: MPO) -> float:
    """<psi|op|psi> / <psi|psi> for a Hermitian MPO."""
    if len(psi) != len(op):
        raise ValueError(f"MPS has {len(psi)} sites but MPO has {len(op)}")
    env = np.ones((1, 1, 1), dtype=np.complex128)  # (bra, w, ket)
    for t, w in zip(psi.tensors, op.tensors):
        env = env_left(env, t, w)
    val = env[0, 0, 0]
    nrm = psi.norm_squared()
    val = val / nrm
    if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
        raise HermiticityError(f"expectation value has imaginary part {val.imag:.3e}")
    return float(val.real)


def env_left(env: np.ndarray, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Extend a (bra, mpo, ket) left environment by one site."""
    x = np.tensordot(env, t, axes=(2, 0))  # (a', v, s, b)
    x = np.tensordot(x, w, axes=([1, 2], [0, 2]))  # (a', b, s', w)
    return np.tensordot(t.conj(), x, axes=([0, 1], [0, 2])).transpose(0, 2, 1)  # (b', w, b)


def env_right(env: np.ndarray, t: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Extend a (bra, mpo, ket) right environment by one site."""
    x = np.tensordot(t, env, axes=(2, 2))  # (a, s, b', w)
    x = np.tensordot(x, w, axes=([1, 3], [2, 3]))  # (a, b', v, s')
    return np.tensordot(t.conj(), x, axes=([1, 2], [3, 1])).transpose(0, 2, 1)  # (a', v, a)


# ---------------------------------------------------------------------------
# Translation-invariant unit cell
# ---------------------------------------------------------------------------


def _dominant_fixed_point(apply, v0: np.ndarray, tol: float = 1e-13, floor: float = 1e-9, max_iter: int = 20000):
    """Power iteration for the dominant fixed point of a transfer map.

    Power iteration (rather than a Krylov eigensolver) keeps the component of
    ``v0`` when the dominant eigenvalue is degenerate, as it is for a cat
    state; a good ``v0`` also makes it converge in a few steps. Stops on the
    eigen-residual reaching ``tol``, or on a plateau below ``floor`` (rounding
    in a non-canonical cell can keep the residual from going lower).
    """
    v = v0 / np.linalg.norm(v0)
    best, best_at = np.inf, 0
    for k in range(max_iter):
        w = apply(v)
        eta = np.vdot(v, w)
        res = np.linalg.norm(w - eta * v) / abs(eta)
        if res <= tol:
            return eta, v
        if res < 0.5 * best:
            best, best_at = res, k
        elif k - best_at > 200 and best <= floor:
            return eta, v
        v = w / np.linalg.norm(w)
    raise RuntimeError(f"transfer-matrix fixed point not converged in {max_iter} iterations (residual {best:.2e})")


def _hermitian_positive(m: np.ndarray) -> np.ndarray:
    tr = np.trace(m)
    m = m * (abs(tr) / tr)
    return 0.5 * (m + m.conj().T)


class UnitCellMPS:
    """Infinite MPS repeating ``tensors`` periodically.

    The tensors need not be in canonical form: expectation values use the
    dominant left and right fixed points of the unit-cell transfer matrix,
    and the tensors are rescaled so that its leading eigenvalue is 1. The
    optional guesses (identity by default) select the fixed point when the
    leading eigenvalue is degenerate. Site indices are arbitrary integers;
    site k uses ``tensors[k % cell]``.
    """

    length = None

    def __init__(self, tensors, meta: Optional[dict] = None, left_guess=None, right_guess=None):
        ts = [np.asarray(t, dtype=np.complex128) for t in tensors]
        m = len(ts)
        if not m:
            raise StructureError("empty unit cell")
        for k, t in enumerate(ts):
            nxt = ts[(k + 1) % m]
            if t.ndim != 3 or t.shape[1] != 2:
                raise StructureError(f"cell site {k}: tensor shape {t.shape} is not (Dl, 2, Dr)")
            if t.shape[2] != nxt.shape[0]:
                raise StructureError(f"cell bond {k}: {t.shape[2]} != {nxt.shape[0]}")
        self.meta = dict(meta or {})
        chi = ts[0].shape[0]

        def left_map(e):
            for t in ts:
                e = _transfer_left(e, t)
            return e

        def right_map(e):
            for t in reversed(ts):
                e = _transfer_right(e, t)
            return e

        eye = np.eye(chi, dtype=np.complex128)
        lg = eye if left_guess is None else np.asarray(left_guess, dtype=np.complex128)
        rg = eye if right_guess is None else np.asarray(right_guess, dtype=np.complex128)
        eta, l = _dominant_fixed_point(left_map, lg)
        _, r = _dominant_fixed_point(right_map, rg)
        scale = abs(eta) ** (-1.0 / (2 * m))
        self.tensors = tuple(t * scale for t in ts)
        l, r = _hermitian_positive(l), _hermitian_positive(r)
        self.left_fixed = l / np.trace(l @ r)
        self.right_fixed = r
        self.transfer_eigenvalue = complex(eta)

    @property
    def cell(self) -> int:
        return len(self.tensors)

    def __len__(self):
        return self.cell

    @property
    def bond_dims(self) -> tuple:
        return tuple(t.shape[2] for t in self.tensors)

    def tensor(self, k: int) -> np.ndarray:
        return self.tensors[k % self.cell]

    def _left_env(self, i: int) -> np.ndarray:
        e = self.left_fixed
        for k in range(i % self.cell):
            e = _transfer_left(e, self.tensors[k])
        return e

    def _right_env(self, j: int) -> np.ndarray:
        """Environment to the right of bond (j - 1, j)."""
        e = self.right_fixed
        for k in range(self.cell - 1, (j - 1) % self.cell, -1):
            e = _transfer_right(e, self.tensors[k])
        return e

    def rdm1(self, i: int) -> np.ndarray:
        t = self.tensor(i)
        x = np.tensordot(self._left_env(i), t, axes=(1, 0))
        x = np.tensordot(x, self._right_env(i + 1), axes=(2, 0))
        rho = np.tensordot(x, t.conj(), axes=([0, 2], [0, 2]))
        return rho / np.trace(rho)

    def pair_rdms(self, pairs: Iterable[tuple]) -> dict:
        by_i = {}
        for i, j in pairs:
            if j <= i:
                raise ValueError(f"need i < j, got ({i}, {j})")
            by_i.setdefault(i, []).append(j)
        out = {}
        for i, js in by_i.items():
            ladders = _ladder_rdms(self.tensor, self._left_env(i), i, js, self._right_env)
            for j, rho in ladders.items():
                out[(i, j)] = rho / np.trace(rho)
        return out


# ---------------------------------------------------------------------------
# Binary checkpoint format
# ---------------------------------------------------------------------------

MAGIC = b"LRXXZMPS"
FORMAT_VERSION = 1
_SCALAR_CODES = {np.dtype(np.complex128): 1}


def write_mps(psi: MPS, path) -> None:
    """Write ``psi`` in the versioned little-endian format (see docs/formats.md)."""
    n = len(psi)
    dims = [1] + [t.shape[2] for t in psi.tensors]
    center = -1 if psi.center is None else psi.center
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIBi", FORMAT_VERSION, n, 1, center))
        fh.write(struct.pack(f"<{n + 1}I", *dims))
        for t in psi.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def read_mps(path) -> MPS:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not an MPS checkpoint")
    version, n, code, center = struct.unpack_from("<IIBi", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    if code != 1:
        raise ValueError(f"{path}: unknown scalar code {code}")
    off = 8 + struct.calcsize("<IIBi")
    dims = struct.unpack_from(f"<{n + 1}I", data, off)
    off += 4 * (n + 1)
    ts = []
    for k in range(n):
        shape = (dims[k], 2, dims[k + 1])
        cnt = int(np.prod(shape))
        ts.append(np.frombuffer(data, dtype="<c16", count=cnt, offset=off).reshape(shape).copy())
        off += 16 * cnt
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MPS(tuple(ts), None if center < 0 else center)
