"""Numerical substrate: seeded sampling and the small linear algebra used by the
analysis code.

Arrays are plain float64 numpy arrays throughout.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, RankError, ShapeError

DTYPE = np.float64


class Rng:
    """Seeded random stream backed by PCG64.

    Two instances built from the same seed produce bit-identical streams as
    long as the call sequence is identical. ``child`` derives independent,
    reproducible sub-streams (per epoch, per sample, ...) without consuming
    state from the parent.
    """

    def __init__(self, seed=0, _keys=()):
        self.seed = int(seed)
        self._keys = tuple(int(k) for k in _keys)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed & (2**64 - 1), *self._keys]))
        )

    def child(self, *keys):
        return Rng(self.seed, self._keys + tuple(keys))

    def normal(self, mean=0.0, sd=1.0, shape=()):
        if sd < 0:
            raise ParameterError(f"normal sd must be >= 0, got {sd}")
        if sd == 0:
            return np.full(shape, float(mean), dtype=DTYPE)
        return self._gen.normal(mean, sd, size=shape)

    def uniform(self, lo=0.0, hi=1.0, shape=()):
        if lo > hi:
            raise ParameterError(f"uniform needs lo <= hi, got ({lo}, {hi})")
        return self._gen.uniform(lo, hi, size=shape)

    def bernoulli(self, p, shape=()):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"bernoulli p must lie in [0, 1], got {p}")
        return (self._gen.random(size=shape) < p).astype(DTYPE)

    def gamma(self, shape_k, scale=1.0, shape=()):
        if shape_k <= 0 or scale <= 0:
            raise ParameterError(f"gamma needs shape_k > 0 and scale > 0, got ({shape_k}, {scale})")
        size = int(np.prod(shape, dtype=np.int64))
        return (_marsaglia_tsang(self._gen, shape_k, size) * scale).reshape(shape)

    def integers(self, lo, hi, shape=None):
        """Uniform integers in [lo, hi)."""
        return self._gen.integers(lo, hi, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size, replace=False):
        return self._gen.choice(a, size=size, replace=replace)


def _marsaglia_tsang(gen, k, size):
    # k < 1: sample Gamma(k + 1) and scale by U^(1/k)
    boost = k < 1
    kk = k + 1.0 if boost else k
    d = kk - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size, dtype=DTYPE)
    todo = np.arange(size)
    while todo.size:
        x = gen.standard_normal(todo.size)
        u = gen.random(todo.size)
        v = (1.0 + c * x) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ok &= np.log(u) < 0.5 * x * x + d - d * v + d * np.log(np.where(ok, v, 1.0))
        out[todo[ok]] = d * v[ok]
        todo = todo[~ok]
    if boost:
        out *= gen.random(size) ** (1.0 / k)
    return out


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    sd: float = 1.0


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class Gamma:
    shape_k: float = 1.0
    scale: float = 1.0


@dataclass(frozen=True)
class Bernoulli:
    p: float = 0.5


def sample(rng, dist, shape):
    """Draw i.i.d. samples of ``dist`` with the given shape."""
    if isinstance(dist, Normal):
        return rng.normal(dist.mean, dist.sd, shape)
    if isinstance(dist, Uniform):
        return rng.uniform(dist.lo, dist.hi, shape)
    if isinstance(dist, Gamma):
        return rng.gamma(dist.shape_k, dist.scale, shape)
    if isinstance(dist, Bernoulli):
        return rng.bernoulli(dist.p, shape)
    raise ParameterError(f"unknown distribution {dist!r}")


def matmul(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _check_symmetric(s, tol=1e-10):
    s = np.asarray(s, dtype=DTYPE)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"expected a square matrix, got {s.shape}")
    scale = max(1.0, np.abs(s).max(initial=0.0))
    if np.abs(s - s.T).max(initial=0.0) > tol * scale:
        raise ContractError("matrix is not symmetric")
    return s


def sym_eig(s):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(eigenvalues, vectors)`` with eigenvectors as columns.
    """
    s = _check_symmetric(s)
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    order = np.argsort(w, kind="stable")[::-1]
    return w[order], v[:, order]


def jacobi_eig(s, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigensolver, eigenvalues descending.

    Slow (pure Python sweep loop) but independent of LAPACK; the tests use it
    to cross-check :func:`sym_eig`. Stops when the off-diagonal Frobenius norm
    falls below ``tol * ||S||_F``.
    """
    a = _check_symmetric(s).copy()
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    v = np.eye(d)
    norm = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * max(norm, 1e-300):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")[::-1]
    return w[order], v[:, order]


def orthonormal_basis(u, rtol=1e-10):
    """Householder QR basis for the column space of ``u``."""
    u = np.asarray(u, dtype=DTYPE)
    if u.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {u.shape}")
    q, r = np.linalg.qr(u, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= rtol * max(diag.max(), 1e-300):
        raise RankError("input does not have full column rank")
    return q


def principal_angles(u, v):
    """Principal angles (radians, ascending) between the column spaces of u and v."""
    u = np.asarray(u, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if u.shape != v.shape or u.shape[1] > u.shape[0]:
        raise ShapeError(f"need two n x m matrices with m <= n, got {u.shape} and {v.shape}")
    qu = orthonormal_basis(u)
    qv = orthonormal_basis(v)
    cross = qu.T @ qv
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), -1.0, 1.0)
    # arccos is ill-conditioned near 0; small angles come from the sines of
    # the part of qv outside span(qu) instead
    sin = np.clip(np.linalg.svd(qv - qu @ cross, compute_uv=False)[::-1], 0.0, 1.0)
    angles = np.where(cos * cos >= 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sort(angles)
