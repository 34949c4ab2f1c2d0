"""Capacity loads, the PCA reference solution and representation scoring."""
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numkit import principal_angles, sym_eig


def _positive(**kw):
    for name, v in kw.items():
        if v <= 0:
            raise ParameterError(f"{name} must be positive, got {v}")


def decoder_load(n, m, C_d, N):
    """Constraints per free parameter when representations are learned: N n / (C_d + N m)."""
    _positive(n=n, m=m, N=N)
    if C_d < 0:
        raise ParameterError("C_d must be >= 0")
    return N * n / (C_d + N * m)


def encoder_load(m, N, C_e):
    """Constraints per encoder weight with fixed target representations: m N / C_e."""
    _positive(m=m, N=N, C_e=C_e)
    return m * N / C_e


def load_relation(n, m, alpha_e):
    """Decoder load implied by an encoder load when both nets have the same size."""
    _positive(n=n, m=m, alpha_e=alpha_e)
    return (n / m) * alpha_e / (1.0 + alpha_e)


@dataclass
class LoadReport:
    n: int
    m: int
    N: int
    C_d: int
    C_e: int
    alpha_d: float
    alpha_e: float

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def table(self):
        rows = [("input dim n", self.n), ("representation dim m", self.m), ("training samples N", self.N),
                ("decoder params C_d", self.C_d), ("encoder params C_e", self.C_e),
                ("decoder load", f"{self.alpha_d:.4f}"), ("encoder load", f"{self.alpha_e:.4f}")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def load_report(decoder, encoder, N):
    """Loads for a decoder/encoder pair, with parameter counts taken from the networks.

    Frozen weights still count: a load describes the architecture. Without
    an encoder, C_e is taken equal to C_d.
    """
    m = int(np.prod(decoder.input_shape))
    n = int(np.prod(decoder.output_shape))
    C_d = decoder.param_count(trainable_only=False)
    C_e = encoder.param_count(trainable_only=False) if encoder is not None else C_d
    return LoadReport(n=n, m=m, N=int(N), C_d=C_d, C_e=C_e,
                      alpha_d=decoder_load(n, m, C_d, N), alpha_e=encoder_load(m, N, C_e))


def pca(X, m):
    """Top-``m`` principal directions from the exact covariance eigendecomposition.

    Returns ``(components (n x m, orthonormal columns), mean (n,), eigenvalues (m,))``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"pca expects an N x n matrix, got {X.shape}")
    N, n = X.shape
    if N < 2 or not 1 <= m <= min(N, n):
        raise ParameterError(f"need N >= 2 and 1 <= m <= min(N, n); got N={N}, n={n}, m={m}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / N
    w, V = sym_eig(cov)
    if w[m - 1] <= 1e-12 * max(w[0], 1e-300):
        warnings.warn("data variance is (near) zero along some retained component", RuntimeWarning)
    return V[:, :m], mean, w[:m]


def subspace_angles_to_pca(weight, X, m=None):
    """Principal angles between a linear decoder's column space and the PCA subspace."""
    weight = np.asarray(weight, dtype=np.float64)
    m = weight.shape[1] if m is None else m
    comps, _, _ = pca(X, m)
    return principal_angles(weight, comps)


def pcc(u, v):
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 2:
        raise ShapeError("pcc needs two vectors of equal length >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    su = np.sqrt(du @ du)
    sv = np.sqrt(dv @ dv)
    if su == 0 or sv == 0:
        raise ParameterError("correlation is undefined for a constant vector")
    return float(np.clip((du @ dv) / (su * sv), -1.0, 1.0))


@dataclass
class RepresentationScore:
    per_dim: np.ndarray
    mean: float
    constant: np.ndarray
    signs: np.ndarray


def representation_score(Z_true, Z_learned, align_sign=True):
    """Per-dimension PCC between matching columns, and their mean.

    Column j of ``Z_learned`` is compared with column j of ``Z_true`` (no
    permutation search). A decoder can flip a unit's sign together with its
    outgoing weights without changing its output, so by default each
    dimension is scored by |PCC|; ``signs`` records the raw signs. Constant
    columns score 0, are flagged in ``constant`` and left out of the mean.
    """
    Z_true = np.asarray(Z_true, dtype=np.float64)
    Z_learned = np.asarray(Z_learned, dtype=np.float64)
    if Z_true.shape != Z_learned.shape or Z_true.ndim != 2:
        raise ShapeError(f"shapes differ: {Z_true.shape} vs {Z_learned.shape}")
    m = Z_true.shape[1]
    per = np.zeros(m)
    constant = np.zeros(m, dtype=bool)
    for j in range(m):
        try:
            per[j] = pcc(Z_true[:, j], Z_learned[:, j])
        except ParameterError:
            constant[j] = True
    signs = np.sign(per)
    if align_sign:
        per = np.abs(per)
    kept = per[~constant]
    mean = float(kept.mean()) if kept.size else 0.0
    return RepresentationScore(per, mean, constant, signs)
