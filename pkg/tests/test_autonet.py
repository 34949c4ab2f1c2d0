import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from encfree.architectures import mnist_decoder, mnist_encoder, sim_decoder
from encfree.autonet import Network, backward, forward, param_count
from encfree.autonet.gradcheck import (LAYER_KINDS, check_latent_gradient, check_layer, check_loss, numeric_grad,
                                       random_layer, relative_error)
from encfree.autonet.layers import Conv2d, ConvTranspose2d, Dense, LeakyReLU, MaskedDense, ReLU, Reshape, Sigmoid
from encfree.autonet.losses import bce_loss, mse_loss, per_sample_loss
from encfree.errors import ContractError, ParameterError, ShapeError
from encfree.numkit import Rng
from encfree.optimize import Adam, SGD


def naive_conv2d(x, w, b, stride, pad):
    bsz, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    y = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    y[n, o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return y


def naive_conv_transpose2d(x, w, b, stride, pad):
    # scatter definition: every input pixel stamps a weighted kernel
    bsz, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    full = np.zeros((bsz, cout, (h - 1) * stride + k, (wd - 1) * stride + k))
    for n in range(bsz):
        for c in range(cin):
            for i in range(h):
                for j in range(wd):
                    full[n, :, i * stride:i * stride + k, j * stride:j * stride + k] += x[n, c, i, j] * w[c]
    y = full[:, :, pad:full.shape[2] - pad, pad:full.shape[3] - pad]
    if b is not None:
        y = y + b[None, :, None, None]
    return y


# forward examples

def test_identity_dense_passes_input_and_gradient():
    layer = Dense(3, 3)
    layer.params["weight"].value = np.eye(3)
    x = np.array([[1.0, -2.0, 3.5]])
    y, cache = layer.forward(x)
    assert np.array_equal(y, x)
    g = np.array([[0.3, 0.1, -4.0]])
    assert np.array_equal(layer.backward(cache, g)[1], g)


def test_relu_example_and_dead_unit_gradient():
    y, cache = ReLU().forward(np.array([[-1.0, 0.0, 2.0]]))
    assert y.tolist() == [[0.0, 0.0, 2.0]]
    _, dx = ReLU().backward(cache, np.ones((1, 3)))
    assert dx[0, 0] == 0.0 and dx[0, 2] == 1.0


def test_conv2d_28_to_14():
    net = Network([Conv2d(1, 4, 4, stride=2, padding=1, rng=Rng(0))], (1, 28, 28))
    assert net.output_shape == (4, 14, 14)
    assert net(np.zeros((2, 1, 28, 28))).shape == (2, 4, 14, 14)


def test_leaky_relu_and_sigmoid_values():
    y, _ = LeakyReLU(0.1).forward(np.array([[-2.0, 3.0]]))
    np.testing.assert_allclose(y, [[-0.2, 3.0]])
    y, _ = Sigmoid().forward(np.array([[0.0, 800.0, -800.0]]))
    np.testing.assert_allclose(y, [[0.5, 1.0, 0.0]])


@pytest.mark.parametrize("seed", range(6))
def test_conv2d_matches_naive_loops(seed):
    r = np.random.default_rng(seed)
    k, s, p = int(r.integers(1, 5)), int(r.integers(1, 3)), int(r.integers(0, 3))
    x = r.normal(size=(2, 3, k + 4, k + 3))
    layer = Conv2d(3, 2, k, s, p, rng=Rng(seed))
    layer.params["bias"].value = r.normal(size=2)
    w, b = layer.params["weight"].value, layer.params["bias"].value
    np.testing.assert_allclose(layer.forward(x)[0], naive_conv2d(x, w, b, s, p), atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_conv_transpose2d_matches_naive_scatter(seed):
    r = np.random.default_rng(seed)
    k, s = int(r.integers(2, 5)), int(r.integers(1, 3))
    p = int(r.integers(0, k))
    x = r.normal(size=(2, 3, 4, 3))
    layer = ConvTranspose2d(3, 2, k, s, p, rng=Rng(seed))
    layer.params["bias"].value = r.normal(size=2)
    w, b = layer.params["weight"].value, layer.params["bias"].value
    np.testing.assert_allclose(layer.forward(x)[0], naive_conv_transpose2d(x, w, b, s, p), atol=1e-12)


def test_output_size_formulas():
    assert ConvTranspose2d(2, 1, 4, 2, 1).output_shape((2, 7, 7)) == (1, 14, 14)
    assert Conv2d(1, 1, 3, 1, 0).output_shape((1, 5, 6)) == (1, 3, 4)
    with pytest.raises(ShapeError):
        Conv2d(1, 1, 5, 1, 0).output_shape((1, 3, 3))
    with pytest.raises(ShapeError):
        ConvTranspose2d(1, 1, 1, 1, 1).output_shape((1, 1, 1))


@given(st.integers(0, 10_000))
def test_conv_adjointness(seed):
    r = np.random.default_rng(seed)
    k, s = int(r.integers(1, 5)), int(r.integers(1, 4))
    p = int(r.integers(0, k))
    ci, co = int(r.integers(1, 4)), int(r.integers(1, 4))
    ho = int(r.integers(1, 5))
    h = (ho - 1) * s - 2 * p + k
    if h < 1:
        return
    conv = Conv2d(ci, co, k, s, p, bias=False)
    convt = ConvTranspose2d(co, ci, k, s, p, bias=False)
    w = r.normal(size=(co, ci, k, k))
    conv.params["weight"].value = w
    convt.params["weight"].value = w.copy()
    x = r.normal(size=(2, ci, h, h))
    y = r.normal(size=(2, co, ho, ho))
    cx = conv.forward(x)[0]
    assert cx.shape == y.shape
    lhs = np.sum(cx * y)
    rhs = np.sum(x * convt.forward(y)[0])
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


# gradient soundness

@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_layer_gradients_match_finite_differences(kind):
    rng = Rng(11)
    worst = max(check_layer(*random_layer(kind, rng), rng) for _ in range(20))
    assert worst < 1e-4


@pytest.mark.parametrize("kind", ["mse", "bce"])
def test_loss_gradients_match_finite_differences(kind):
    rng = Rng(12)
    assert max(check_loss(kind, rng) for _ in range(20)) < 1e-5


def test_latent_gradient_through_two_layer_decoder():
    rng = Rng(13)
    assert max(check_latent_gradient(rng) for _ in range(20)) < 1e-4


def test_mnist_decoder_latent_gradient_spot_check():
    rng = Rng(5)
    net = Network.from_specs([{"kind": "dense", "in_features": 3, "out_features": 2 * 2 * 2},
                              {"kind": "relu"}, {"kind": "reshape", "target_shape": [2, 2, 2]},
                              {"kind": "conv_transpose2d", "in_channels": 2, "out_channels": 1,
                               "kernel_size": 4, "stride": 2, "padding": 1}], (3,), rng=rng)
    z = rng.normal(0, 1, (2, 3))
    t = rng.uniform(0, 1, (2, 1, 4, 4))
    out, cache = forward(net, z)
    _, g = bce_loss(out, t, "sum")
    _, dz = backward(net, cache, g)
    num = numeric_grad(lambda: bce_loss(net(z), t, "sum")[0], z)
    assert relative_error(dz, num) < 1e-4


def test_gradcheck_detects_a_wrong_gradient():
    layer = Dense(3, 2, rng=Rng(0))
    x = np.ones((1, 3))
    real = layer.backward
    layer.backward = lambda c, dy: ({k: 2 * v for k, v in real(c, dy)[0].items()}, real(c, dy)[1])
    assert check_layer(layer, x, Rng(0)) > 0.1


# losses

def test_mse_examples():
    assert mse_loss(np.ones((2, 2)), np.ones((2, 2)))[0] == 0.0
    assert mse_loss([[0.0]], [[1.0]])[0] == 1.0
    loss, grad = mse_loss(np.array([[1.0, 3.0]]), np.zeros((1, 2)))
    assert loss == 5.0 and grad.tolist() == [[1.0, 3.0]]
    with pytest.raises(ShapeError):
        mse_loss(np.ones(3), np.ones(4))


def test_mse_grad_random_4x7():
    r = np.random.default_rng(0)
    p, t = r.normal(size=(4, 7)), r.normal(size=(4, 7))
    num = numeric_grad(lambda: mse_loss(p, t)[0], p)
    assert relative_error(mse_loss(p, t)[1], num) < 1e-6


def test_bce_examples():
    np.testing.assert_allclose(bce_loss([[0.0]], [[0.5]])[0], np.log(2), rtol=1e-15)
    assert bce_loss([[50.0]], [[1.0]])[0] < 1e-20
    assert np.isfinite(bce_loss([[1e4, -1e4]], [[0.0, 1.0]])[0])
    with pytest.raises(ParameterError):
        bce_loss([[0.0]], [[1.5]])


def test_bce_grad_random_batch():
    r = np.random.default_rng(1)
    lg, t = r.normal(0, 3, size=(5, 6)), r.uniform(size=(5, 6))
    num = numeric_grad(lambda: bce_loss(lg, t)[0], lg)
    assert relative_error(bce_loss(lg, t)[1], num) < 1e-5


def test_sum_reduction_is_mean_times_count():
    r = np.random.default_rng(2)
    p, t = r.normal(size=(3, 4)), r.uniform(size=(3, 4))
    for fn in (mse_loss, bce_loss):
        np.testing.assert_allclose(fn(p, t, "sum")[0], 12 * fn(p, t)[0])
    np.testing.assert_allclose(per_sample_loss("mse", p, t).mean(), mse_loss(p, t)[0])
    np.testing.assert_allclose(per_sample_loss("bce", p, t).mean(), bce_loss(p, t)[0])


# param counts and masks

def test_param_count_dense():
    net = Network([Dense(7, 5)], (7,))
    assert param_count(net) == 7 * 5 + 5


def test_mnist_param_counts():
    assert param_count(mnist_decoder(Rng(0))) == 263_873
    assert param_count(mnist_encoder(Rng(0))) == 257_748


def test_masked_dense_param_count_11000():
    rng = np.random.default_rng(0)
    mask = np.zeros((1000, 100))
    idx = rng.choice(mask.size, 10_000, replace=False)
    mask.flat[idx] = 1.0
    assert param_count(sim_decoder(Rng(0), mask)) == 11_000


def test_frozen_params_excluded_unless_asked():
    net = Network([Dense(2, 3)], (2,))
    net.freeze()
    assert param_count(net) == 0
    assert net.param_count(trainable_only=False) == 9


@pytest.mark.parametrize("opt_cls", [Adam, SGD])
def test_masked_weights_stay_exactly_zero(opt_cls):
    r = np.random.default_rng(3)
    mask = (r.uniform(size=(6, 4)) < 0.4).astype(float)
    net = Network([MaskedDense(4, 6, mask, rng=Rng(1))], (4,))
    opt = opt_cls(net.parameters(), lr=0.05, weight_decay=1e-3) if opt_cls is Adam else \
        opt_cls(net.parameters(), lr=0.05, momentum=0.9, weight_decay=1e-3)
    for _ in range(50):
        x = r.normal(size=(8, 4))
        out, cache = net.forward(x)
        grads, _ = net.backward(cache, mse_loss(out, r.normal(size=(8, 6)))[1])
        opt.step(grads)
    w = net.parameters()[0].value
    assert np.all(w[mask == 0] == 0.0)
    assert np.any(w[mask == 1] != 0.0)


def test_mask_must_be_binary_and_shaped():
    with pytest.raises(ShapeError):
        MaskedDense(3, 2, np.ones((3, 2)))
    with pytest.raises(ParameterError):
        MaskedDense(3, 2, np.full((2, 3), 0.5))


# network plumbing

def test_shape_error_names_layer_index():
    with pytest.raises(ShapeError, match="layer 1"):
        Network([Dense(3, 4), Dense(5, 2)], (3,))
    net = Network([Dense(3, 4)], (3,))
    with pytest.raises(ShapeError):
        net.forward(np.ones((2, 5)))


def test_stale_and_foreign_cache_rejected():
    r = Rng(0)
    a, b = Network([Dense(2, 2, rng=r)], (2,)), Network([Dense(2, 2, rng=r)], (2,))
    out, cache = a.forward(np.ones((1, 2)))
    with pytest.raises(ContractError):
        b.backward(cache, np.ones((1, 2)))
    SGD(a.parameters(), lr=0.1).step([np.ones((2, 2)), np.ones(2)])
    with pytest.raises(ContractError):
        a.backward(cache, np.ones((1, 2)))


def test_forward_is_bit_deterministic():
    net = mnist_decoder(Rng(4), channels=8)
    z = Rng(5).normal(0, 1, (3, 20))
    assert np.array_equal(net(z), net(z))
    assert np.array_equal(net(z), mnist_decoder(Rng(4), channels=8)(z))


def test_specs_roundtrip_and_unknown_kind():
    net = mnist_decoder(Rng(0), channels=4)
    clone = Network.from_specs(net.specs(), net.input_shape)
    assert [s["kind"] for s in clone.specs()] == [s["kind"] for s in net.specs()]
    with pytest.raises(ParameterError):
        Network.from_specs([{"kind": "attention"}], (3,))
    with pytest.raises(ParameterError):
        Network.from_specs([{"kind": "leaky_relu"}], (3,))


def test_reshape_roundtrip():
    layer = Reshape([2, 3])
    y, cache = layer.forward(np.arange(12.0).reshape(2, 6))
    assert y.shape == (2, 2, 3)
    assert layer.backward(cache, y)[1].shape == (2, 6)


def test_float32_network_tracks_float64():
    net = mnist_decoder(Rng(0), channels=8)
    z = Rng(1).normal(0, 1, (4, 20))
    ref = net(z)
    net.astype("float32")
    out = net(z)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, ref, atol=1e-4)
    with pytest.raises(ParameterError):
        net.astype("int8")
