"""Analytic gradients against central finite differences."""

import numpy as np
import pytest

from mmwave_dl.channel import SystemConfig
from mmwave_dl.dlcs import build_cenn
from mmwave_dl.dlqp import build_thpnn
from mmwave_dl.nn import LayerSpec, Network, aq, aq_grad, gain_loss, grad_check, mse_loss

from conftest import crandn


def input_grad_error(f, x, eps=1e-6):
    """Max relative error of ``f``'s gradient w.r.t. its input."""
    _, g = f(x)
    worst = 0.0
    flat = x.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        up = f(x)[0]
        flat[j] = orig - eps
        down = f(x)[0]
        flat[j] = orig
        fd = (up - down) / (2 * eps)
        a = g.reshape(-1)[j]
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
    return worst


def net_input_loss(net, target):
    def f(x):
        out = net.forward(x, training=True)
        loss, dy = mse_loss(out, target)
        return loss, net.backward(dy)
    return f


def test_linear_net_exact(rng):
    net = Network([LayerSpec("dense", {"units": 3})], (4,), rng)
    x, t = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))
    assert grad_check(net, x, lambda p: mse_loss(p, t)) < 1e-8


def test_dense_sigmoid_stack(rng):
    net = Network([LayerSpec("dense", {"units": 6}), LayerSpec("activation", {"fn": "sigmoid"}),
                   LayerSpec("dense", {"units": 2}), LayerSpec("activation", {"fn": "tanh"})],
                  (3,), rng)
    x, t = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    assert grad_check(net, x, lambda p: mse_loss(p, t)) < 1e-4
    assert input_grad_error(net_input_loss(net, t), x.copy()) < 1e-4


def test_batchnorm_four_samples(rng):
    net = Network([LayerSpec("dense", {"units": 5}), LayerSpec("batchnorm"),
                   LayerSpec("dense", {"units": 2})], (3,), rng)
    x, t = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    assert grad_check(net, x, lambda p: mse_loss(p, t)) < 1e-4
    assert input_grad_error(net_input_loss(net, t), x.copy()) < 1e-4


@pytest.mark.parametrize("mode", ["max", "avg"])
def test_conv_pool_stack(rng, mode):
    net = Network([LayerSpec("conv1d", {"filters": 3, "kernel": 5}),
                   LayerSpec("activation", {"fn": "relu"}),
                   LayerSpec("pool", {"width": 2, "stride": 2, "mode": mode}),
                   LayerSpec("conv1d", {"filters": 2, "kernel": 3, "stride": 2}),
                   LayerSpec("flatten"), LayerSpec("dense", {"units": 3}),
                   LayerSpec("activation", {"fn": "sigmoid"})], (12,), rng)
    x, t = rng.standard_normal((3, 12)), rng.standard_normal((3, 3))
    assert grad_check(net, x, lambda p: mse_loss(p, t)) < 1e-4
    assert input_grad_error(net_input_loss(net, t), x.copy()) < 1e-4


def test_cenn_eighth_width(rng):
    cfg = SystemConfig(n_antennas=16, grid_size=16, n_slots=2)
    net = build_cenn(cfg, rng, widths=(128, 64, 32))
    x, t = rng.standard_normal((6, 32)), np.abs(rng.standard_normal((6, 16)))
    assert grad_check(net, x, lambda p: mse_loss(p, t), max_entries=25, rng=rng) < 1e-4


def test_aq_gradient_away_from_kinks(rng):
    Q, eta = 16, 100.0
    edges = 2 * np.pi * np.arange(Q + 1) / Q
    x = rng.uniform(0, 2 * np.pi, 400)
    x = x[np.min(np.abs(x[:, None] - edges), axis=1) > 0.05]
    # the slope is ~1e-10 here, so difference in extended precision
    xl, eps = x.astype(np.longdouble), np.longdouble(1e-6)
    fd = ((aq(xl + eps, Q, eta) - aq(xl - eps, Q, eta)) / (2 * eps)).astype(float)
    a = aq_grad(x, Q, eta)
    assert np.max(np.abs(a - fd) / np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)) < 1e-4
    xs = edges[3] + np.array([-0.004, 0.0, 0.003])
    fd = (aq(xs + 1e-7, Q, eta) - aq(xs - 1e-7, Q, eta)) / 2e-7
    assert np.allclose(aq_grad(xs, Q, eta), fd, rtol=1e-4)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_thpnn_with_aq_at_full_sharpness(seed):
    """Whole precoder network at eta=100, phases moved to the middle of their steps."""
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(n_antennas=16, grid_size=16, n_slots=2)
    net = build_thpnn(cfg, rng)
    assert net.layers[-1].sharpness == 100.0
    x, h = rng.standard_normal((1, 32)), crandn(rng, 1, 16)
    head = net.find("dense")[-1]
    z = x
    for layer in net.layers[:head + 1]:
        z = layer.forward(z)
    step = 2 * np.pi / 16
    p = (np.floor(net.layers[head + 1].forward(z) * 16) + 0.5) / 16
    net.layers[head].params["b"] += (np.log(p / (1 - p)) - z)[0]
    phases = x
    for layer in net.layers[:-1]:
        phases = layer.forward(phases)
    off = np.abs(phases[..., None] - step * np.arange(17)).min()
    assert off > 0.05
    assert grad_check(net, x, lambda q: gain_loss(q, h), max_entries=15, rng=rng) < 1e-4


def test_gain_loss_gradient(rng):
    h = crandn(rng, 4, 7)
    p = rng.uniform(0, 2 * np.pi, (4, 7))
    assert input_grad_error(lambda x: gain_loss(x, h), p) < 1e-4
    h1, p1 = crandn(rng, 9), rng.uniform(0, 2 * np.pi, 9)
    assert input_grad_error(lambda x: gain_loss(x, h1), p1) < 1e-4
