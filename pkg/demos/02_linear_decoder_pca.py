"""
A linear decoder finds the principal subspace
=============================================

With a linear decoder and squared error, training weights and
representations together minimizes the same objective as PCA, so the
decoder's columns should span the top principal directions (they need not
be orthogonal or ordered). We draw rank-3 data in 20 dimensions with a
little noise, train a bias-free linear decoder without any encoder, and
measure the principal angles between its column space and the PCA subspace.

Usage::

    python demos/02_linear_decoder_pca.py
"""
import numpy as np

from encfree.analysis import pca, subspace_angles_to_pca
from encfree.architectures import linear_decoder
from encfree.numkit import Rng
from encfree.trainers import TrainConfig, train_decoder

rng = Rng(0)
basis = rng.normal(0.0, 1.0, (20, 3))
X = rng.normal(0.0, 1.0, (500, 3)) @ basis.T + rng.normal(0.0, 0.01, (500, 20))
X -= X.mean(axis=0)

cfg = TrainConfig(epochs=200, weight_lr=1e-3, weight_decay=0.0, latent_lr=1e-3, eval_every=20, seed=0)
decoder, table, log = train_decoder(X, linear_decoder(Rng(0).child(100), 3, 20), cfg)

for r in log.records:
    print(f"epoch {r['epoch']:>4}  mse {r['loss']:.3e}")

W = decoder.parameters()[0].value
angles = subspace_angles_to_pca(W, X, 3)
print()
print("principal angles (rad):", np.array2string(angles, precision=2))

# the noise floor: reconstruction error of the exact rank-3 PCA projection
components = pca(X, 3)[0]
resid = X - X @ components @ components.T
print("PCA residual mse      :", f"{np.mean(resid ** 2):.3e}")
print("decoder residual mse  :", f"{log.last('train')['loss']:.3e}")
