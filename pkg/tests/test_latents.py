import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from encfree.autonet import Network
from encfree.autonet.gradcheck import numeric_grad, relative_error
from encfree.autonet.losses import mse_loss
from encfree.errors import ContractError, DivergenceError, ShapeError
from encfree.latents import LatentTable, infer_latents, init_latents, latent_step
from encfree.numkit import Rng


def linear_decoder(W):
    n, m = W.shape
    net = Network.from_specs([{"kind": "dense", "in_features": m, "out_features": n, "bias": False}], (m,))
    net.parameters()[0].value = np.array(W, dtype=float)
    net.freeze()
    return net


def test_init_examples():
    assert not init_latents(5, 3, Rng(0), scale=0.0).Z.any()
    assert np.array_equal(init_latents(4, 2, Rng(7)).Z, init_latents(4, 2, Rng(7)).Z)
    z = init_latents(1000, 100, Rng(1), scale=0.1).Z
    assert abs(z.std() / 0.1 - 1) < 0.05
    assert not init_latents(3, 2, Rng(0)).velocity.any()


def test_latent_step_examples():
    t = LatentTable(np.ones((3, 2)), lr=0.5, momentum=0.0)
    before = t.Z.copy()
    latent_step(t, [], np.zeros((0, 2)))
    assert np.array_equal(t.Z, before)
    latent_step(t, [1], np.array([[2.0, -4.0]]))
    assert t.Z[1].tolist() == [0.0, 3.0]
    assert np.array_equal(t.Z[[0, 2]], before[[0, 2]])


def test_latent_step_rejects_duplicates_and_bad_shapes():
    t = LatentTable(np.zeros((3, 2)))
    with pytest.raises(ContractError):
        latent_step(t, [1, 1], np.zeros((2, 2)))
    with pytest.raises(ContractError):
        latent_step(t, [3], np.zeros((1, 2)))
    with pytest.raises(ShapeError):
        latent_step(t, [0], np.zeros((1, 3)))


@given(st.integers(0, 1000), st.lists(st.integers(0, 19), min_size=0, max_size=20, unique=True))
def test_row_isolation(seed, batch):
    r = np.random.default_rng(seed)
    t = LatentTable(r.normal(size=(20, 3)), lr=0.1, momentum=0.9)
    t.velocity = r.normal(size=(20, 3))
    z0, v0 = t.Z.copy(), t.velocity.copy()
    latent_step(t, batch, r.normal(size=(len(batch), 3)))
    rest = np.setdiff1d(np.arange(20), batch)
    assert np.array_equal(t.Z[rest], z0[rest])
    assert np.array_equal(t.velocity[rest], v0[rest])


def test_momentum_persists_per_row():
    t = LatentTable(np.zeros((2, 1)), lr=1.0, momentum=0.5)
    latent_step(t, [0], np.array([[1.0]]))
    latent_step(t, [1], np.array([[1.0]]))
    latent_step(t, [0], np.array([[1.0]]))
    assert t.Z[:, 0].tolist() == [-2.5, -1.0]


def test_infer_zero_steps_returns_initialisation():
    dec = linear_decoder(np.eye(3)[:, :2])
    Z, _ = infer_latents(dec, np.ones((4, 3)), steps=0, rng=Rng(3))
    assert np.array_equal(Z, Rng(3).child(0).normal(0.0, 0.1, (4, 2)))


def test_infer_recovers_codes_in_output_space():
    r = np.random.default_rng(0)
    W = r.normal(size=(8, 3))
    dec = linear_decoder(W)
    z0 = r.normal(size=(5, 3))
    X = z0 @ W.T
    lam = np.linalg.eigvalsh(W.T @ W).max()
    Z, final = infer_latents(dec, X, steps=3000, lr=0.5 / lam, momentum=0.9, rng=Rng(1))
    assert np.linalg.norm(Z @ W.T - X) < 1e-6 * np.linalg.norm(X)
    assert final.max() < 1e-12


def test_loss_non_increasing_below_step_bound():
    r = np.random.default_rng(2)
    W = r.normal(size=(6, 2))
    dec = linear_decoder(W)
    X = r.normal(size=(3, 6))
    lam = np.linalg.eigvalsh(W.T @ W).max()
    # sum reduction: Hessian is 2 WᵀW, so the bound is lr < 1/λ_max
    lr = 0.9 / lam
    losses = [infer_latents(dec, X, steps=s, lr=lr, momentum=0.0, rng=Rng(4))[1].sum() for s in range(30)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_decoder_untouched_and_must_be_frozen():
    dec = linear_decoder(np.random.default_rng(0).normal(size=(4, 2)))
    before = dec.checksum()
    infer_latents(dec, np.ones((3, 4)), steps=20, rng=Rng(0))
    assert dec.checksum() == before
    dec.unfreeze()
    with pytest.raises(ContractError):
        infer_latents(dec, np.ones((3, 4)), steps=1, rng=Rng(0))


def test_divergence_reports_step():
    dec = linear_decoder(np.full((3, 2), 10.0))
    with pytest.raises(DivergenceError) as err:
        infer_latents(dec, np.ones((2, 3)), steps=500, lr=10.0, momentum=0.0, rng=Rng(0))
    assert err.value.step is not None


def test_chunking_does_not_change_results():
    dec = linear_decoder(np.random.default_rng(5).normal(size=(4, 2)))
    X = np.random.default_rng(6).normal(size=(10, 4))
    a = infer_latents(dec, X, steps=30, rng=Rng(2), chunk_size=3)[0]
    b = infer_latents(dec, X, steps=30, rng=Rng(2), chunk_size=100)[0]
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_restarts_keep_the_best_solution():
    dec = linear_decoder(np.random.default_rng(1).normal(size=(4, 2)))
    X = np.random.default_rng(2).normal(size=(6, 4))
    _, one = infer_latents(dec, X, steps=3, rng=Rng(0), restarts=1)
    _, three = infer_latents(dec, X, steps=3, rng=Rng(0), restarts=3)
    assert np.all(three <= one)


def test_latent_gradient_matches_finite_differences_through_decoder():
    rng = Rng(3)
    net = Network.from_specs([{"kind": "dense", "in_features": 3, "out_features": 6}, {"kind": "relu"},
                              {"kind": "dense", "in_features": 6, "out_features": 5}], (3,), rng=rng)
    z = rng.normal(0, 1, (4, 3))
    x = rng.normal(0, 1, (4, 5))
    out, cache = net.forward(z)
    _, dz = net.backward(cache, mse_loss(out, x, "sum")[1], param_grads=False)
    assert relative_error(dz, numeric_grad(lambda: mse_loss(net(z), x, "sum")[0], z)) < 1e-4
