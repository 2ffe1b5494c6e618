"""Model description and matrix product operators for the long-range XXZ chain.

    H = sum_{i<j} f(r_ij) [J_xy (Sx_i Sx_j + Sy_i Sy_j) - J_z Sz_i Sz_j] + h_x sum_i Sx_i

with f(r) = exp(-alpha (r - 1)) (exponential), r**-alpha (power law), 1
(uniform) or [r == 1] (nearest neighbor). MPO tensors are indexed
``(left_bond, ket, bra, right_bond)`` and follow the upper-triangular
"not started / carriers / done" layout: bond index 0 is the identity string
before any operator, the last index is the identity string after a completed
term.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

DECAYS = ("exponential", "power_law", "uniform", "nearest_neighbor")

I2 = np.eye(2, dtype=np.complex128)
SX = np.array([[0, 1], [1, 0]], dtype=np.complex128) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128) / 2


class UnsupportedModelError(ValueError):
    """The requested model/algorithm combination is not available."""


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the Hamiltonian. ``length=None`` means an infinite chain."""

    decay: str
    alpha: float = 0.0
    j_xy: float = 1.0
    j_z: float = 1.0
    h_x: float = 0.0
    length: Optional[int] = None

    def __post_init__(self):
        if self.decay not in DECAYS:
            raise ValueError(f"decay must be one of {DECAYS}, got {self.decay!r}")
        for name in ("alpha", "j_xy", "j_z", "h_x"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.length is None:
            if self.decay != "exponential":
                raise UnsupportedModelError("infinite chains are only supported for exponential decay")
        elif int(self.length) != self.length or self.length < 2:
            raise ValueError("length must be an integer >= 2")

    @property
    def infinite(self) -> bool:
        return self.length is None

    def coupling(self, r):
        """Decay weight f(r) for distances r >= 1."""
        r = np.asarray(r, dtype=float)
        if self.decay == "exponential":
            return np.exp(-self.alpha * (r - 1.0))
        if self.decay == "power_law":
            return r ** (-self.alpha)
        if self.decay == "uniform":
            return np.ones_like(r)
        return (r == 1.0).astype(float)

    def pairs(self):
        """Arrays ``(i, j, weight)`` over all i < j of a finite chain."""
        n = self._finite_length()
        i, j = np.triu_indices(n, k=1)
        return i, j, self.coupling(j - i)

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def _finite_length(self) -> int:
        if self.length is None:
            raise UnsupportedModelError("operation needs a finite chain length")
        return int(self.length)


def _as_scalar_array(t) -> np.ndarray:
    t = np.asarray(t)
    return t.astype(np.complex128 if np.iscomplexobj(t) else np.float64)


@dataclass(frozen=True)
class MPO:
    tensors: tuple

    def __post_init__(self):
        ts = tuple(_as_scalar_array(t) for t in self.tensors)
        for k, t in enumerate(ts):
            if t.ndim != 4 or t.shape[1:3] != (2, 2):
                raise ValueError(f"MPO tensor {k} has shape {t.shape}")
            if k and ts[k - 1].shape[3] != t.shape[0]:
                raise ValueError(f"MPO bond {k - 1}-{k} mismatch: {ts[k - 1].shape[3]} vs {t.shape[0]}")
        object.__setattr__(self, "tensors", ts)

    def __len__(self):
        return len(self.tensors)

    @property
    def is_real(self) -> bool:
        return all(t.dtype == np.float64 for t in self.tensors)

    @property
    def bond_dims(self) -> tuple:
        """Dimensions of the internal bonds (length N - 1)."""
        return tuple(t.shape[3] for t in self.tensors[:-1])

    def to_dense(self) -> np.ndarray:
        """Full 2^N x 2^N matrix (small chains only)."""
        n = len(self.tensors)
        if n > 12:
            raise ValueError("dense contraction is limited to N <= 12")
        acc = self.tensors[0][0]  # (ket, bra, w)
        for t in self.tensors[1:]:
            acc = np.einsum("abw,wcdx->acbdx", acc, t)
            s = acc.shape
            acc = acc.reshape(s[0] * s[1], s[2] * s[3], s[4])
        return acc[:, :, 0]


def _check_decay(spec: ModelSpec, allowed):
    if spec.decay not in allowed:
        raise ValueError(f"builder expects decay in {allowed}, got {spec.decay!r}")


def _add_pin(t: np.ndarray, pin: float, row: int, col: int):
    if pin:
        t[row, :, :, col] -= pin * SZ


def elri_bulk_tensor(spec: ModelSpec, decay_factor: float) -> np.ndarray:
    """5x5 finite-state-machine tensor with carrier factor ``decay_factor``."""
    w = np.zeros((5, 2, 2, 5), dtype=np.complex128)
    w[0, :, :, 0] = I2
    w[0, :, :, 1] = SX
    w[0, :, :, 2] = SY
    w[0, :, :, 3] = SZ
    w[0, :, :, 4] = spec.h_x * SX
    for c in (1, 2, 3):
        w[c, :, :, c] = decay_factor * I2
    w[1, :, :, 4] = spec.j_xy * SX
    w[2, :, :, 4] = spec.j_xy * SY
    w[3, :, :, 4] = -spec.j_z * SZ
    w[4, :, :, 4] = I2
    return w


def _finite_from_bulk(bulk: np.ndarray, n: int, pin: float) -> MPO:
    first = bulk[:1].copy()
    _add_pin(first, pin, 0, 4)
    last = bulk[:, :, :, 4:].copy()
    if n == 1:
        raise ValueError("length must be >= 2")
    return MPO((first,) + tuple(bulk for _ in range(n - 2)) + (last,))


def build_elri_mpo(spec: ModelSpec, pin: float = 0.0) -> MPO:
    """Bond-5 MPO for exponential decay.

    Each S^gamma placed at site i is carried rightwards with a factor
    exp(-alpha) per intermediate site and closed with J at site j, giving the
    weight exp(-alpha (j - i - 1)). For an infinite chain the returned MPO holds
    a two-site unit cell of bulk tensors. ``pin`` adds ``-pin * Sz`` on site 0.
    """
    _check_decay(spec, ("exponential",))
    bulk = elri_bulk_tensor(spec, math.exp(-spec.alpha))
    if spec.infinite:
        return MPO((bulk, bulk))
    return _finite_from_bulk(bulk, spec.length, pin)


def build_nn_mpo(spec: ModelSpec, pin: float = 0.0) -> MPO:
    _check_decay(spec, ("nearest_neighbor",))
    return _finite_from_bulk(elri_bulk_tensor(spec, 0.0), spec._finite_length(), pin)


def plri_bond_dim(n: int, k: int) -> int:
    """Dimension of the bond between sites k and k+1 (1-indexed)."""
    return 2 + 3 * (n - k)


def _expanded_mpo(spec: ModelSpec, weights: np.ndarray, pin: float) -> MPO:
    # Bond k (between sites k and k+1, 1-indexed) carries channel (r, gamma) for
    # r = 1..N-k: an S^gamma already weighted by f(distance) that is closed r
    # sites further right. Index of (r, gamma) is 1 + 3 (r - 1) + gamma.
    n = spec._finite_length()
    ops = (SX, SY, SZ)
    close = (spec.j_xy * SX, spec.j_xy * SY, -spec.j_z * SZ)
    tensors = []
    for k in range(1, n + 1):
        dl = 1 if k == 1 else plri_bond_dim(n, k - 1)
        dr = 1 if k == n else plri_bond_dim(n, k)
        t = np.zeros((dl, 2, 2, dr), dtype=np.complex128)
        last_l, last_r = dl - 1, dr - 1
        if k < n:
            t[0, :, :, 0] = I2
            for r in range(1, n - k + 1):
                for g in range(3):
                    t[0, :, :, 1 + 3 * (r - 1) + g] = weights[r] * ops[g]
        t[0, :, :, last_r] = spec.h_x * SX
        if k == 1:
            _add_pin(t, pin, 0, last_r)
        if k > 1:
            for g in range(3):
                t[1 + g, :, :, last_r] = close[g]
            for r in range(2, n - k + 2):
                for g in range(3):
                    t[1 + 3 * (r - 1) + g, :, :, 1 + 3 * (r - 2) + g] = I2
            t[last_l, :, :, last_r] = I2
        tensors.append(t)
    return MPO(tuple(tensors))


def build_plri_mpo(spec: ModelSpec, pin: float = 0.0) -> MPO:
    """Expanded MPO routing each 1/r^alpha coupling through its own channel.

    Bond k carries ``2 + 3 (N - k)`` states (N = 4 gives bonds 11, 8, 5).
    """
    _check_decay(spec, ("power_law",))
    if spec.infinite:
        raise UnsupportedModelError("power-law decay needs a finite chain (use fdmrg)")
    n = spec.length
    return _expanded_mpo(spec, np.r_[0.0, spec.coupling(np.arange(1, n))], pin)


def build_uniform_mpo(spec: ModelSpec, pin: float = 0.0) -> MPO:
    """All-to-all equal couplings: the power-law MPO at alpha = 0."""
    _check_decay(spec, ("uniform",))
    n = spec._finite_length()
    return _expanded_mpo(spec, np.ones(n), pin)


def build_mpo(spec: ModelSpec, pin: float = 0.0) -> MPO:
    builder = {
        "exponential": build_elri_mpo,
        "power_law": build_plri_mpo,
        "uniform": build_uniform_mpo,
        "nearest_neighbor": build_nn_mpo,
    }[spec.decay]
    return builder(spec, pin=pin)


def compress_mpo(mpo: MPO, rtol: float = 1e-13) -> MPO:
    """Reduce MPO bond dimensions without changing the operator.

    A QR sweep brings the MPO to left-orthonormal form; a right-to-left SVD
    sweep then drops operator-Schmidt values below ``rtol`` times the largest
    at each bond. Meant for finite-state-machine MPOs whose expanded channels
    are numerically low rank (power-law couplings).
    """
    ts = [t.copy() for t in mpo.tensors]
    n = len(ts)
    for k in range(n - 1):
        dl, _, _, dr = ts[k].shape
        q, r = np.linalg.qr(ts[k].reshape(dl * 4, dr))
        ts[k] = q.reshape(dl, 2, 2, q.shape[1])
        ts[k + 1] = np.tensordot(r, ts[k + 1], axes=(1, 0))
    for k in range(n - 1, 0, -1):
        dl, _, _, dr = ts[k].shape
        u, s, vh = np.linalg.svd(ts[k].reshape(dl, 4 * dr), full_matrices=False)
        keep = max(1, int(np.count_nonzero(s > rtol * s[0])))
        ts[k] = vh[:keep].reshape(keep, 2, 2, dr)
        ts[k - 1] = np.tensordot(ts[k - 1], u[:, :keep] * s[:keep], axes=(3, 0))
    return MPO(tuple(ts))


def realify_mpo(mpo: MPO, tol: float = 1e-12) -> Optional[MPO]:
    """Gauge-transform an MPO of a real operator into real tensors.

    At each bond the column space of the left tensor must be closed under
    complex conjugation (true for a minimal MPO of a real operator); a real
    orthonormal basis of it replaces the tensor and the complex change of basis
    moves right. Returns ``None`` when no real gauge is found.
    """
    if mpo.is_real:
        return mpo
    ts = [t.copy() for t in mpo.tensors]
    n = len(ts)
    for k in range(n - 1):
        dl, _, _, dr = ts[k].shape
        m = ts[k].reshape(dl * 4, dr)
        scale = np.linalg.norm(m)
        u, s, _ = np.linalg.svd(np.hstack([m.real, m.imag]), full_matrices=False)
        r = max(1, int(np.count_nonzero(s > tol * s[0])))
        if r > dr:
            return None
        b = u[:, :r]
        c = b.T @ m
        if np.linalg.norm(b @ c - m) > tol * max(scale, 1.0) * 10:
            return None
        ts[k] = b.reshape(dl, 2, 2, r)
        ts[k + 1] = np.tensordot(c, ts[k + 1], axes=(1, 0))
    last = ts[-1]
    if np.max(np.abs(last.imag)) > tol * max(1.0, float(np.max(np.abs(last)))) * 10:
        return None
    ts[-1] = last.real
    return MPO(tuple(t.real if np.iscomplexobj(t) else t for t in ts))


def realify_bulk(w: np.ndarray) -> np.ndarray:
    """Real gauge of the 5x5 exponential-decay bulk tensor.

    Rotates carrier channels (Sx, Sy) into (S+, S-): starts become S+ and S-,
    closers become J_xy S-/2 and J_xy S+/2, carriers are unchanged.
    """
    t = np.eye(5, dtype=np.complex128)
    t[1:3, 1:3] = [[1, 1], [1j, -1j]]
    tinv = np.linalg.inv(t)
    out = np.einsum("ab,bstc,cd->astd", tinv, w, t)
    if np.max(np.abs(out.imag)) > 1e-14:
        raise ValueError("bulk tensor is not real in the (S+, S-) gauge")
    return out.real.copy()
