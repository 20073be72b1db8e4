import numpy as np
import pytest

from mmwave_dl.nn import LayerSpec, Network
from mmwave_dl.nn.layers import Activation, BatchNorm, Conv1d, Pool, make_layer


def dense_net(n_in, units, rng, act="identity"):
    return Network([LayerSpec("dense", {"units": units}),
                    LayerSpec("activation", {"fn": act})], (n_in,), rng)


def test_identity_dense(rng):
    net = dense_net(4, 4, rng)
    net.layers[0].params["W"][:] = np.eye(4)
    x = rng.standard_normal((3, 4))
    assert np.array_equal(net.forward(x), x)


def test_relu():
    assert np.array_equal(Activation("relu").forward(np.array([-1.0, 2.0])), [0.0, 2.0])


def test_sigmoid_is_overflow_free():
    y = Activation("sigmoid").forward(np.array([-1000.0, 0.0, 1000.0]))
    assert np.allclose(y, [0.0, 0.5, 1.0])


def direct_conv(x, W, b, stride):
    """Explicit same-padded cross-correlation sum."""
    f, c, k = W.shape
    left = (k - 1) // 2
    n, _, width = x.shape
    n_out = (width - 1) // stride + 1
    y = np.zeros((n, f, n_out))
    for s in range(n):
        for o in range(f):
            for w in range(n_out):
                acc = b[o]
                for ch in range(c):
                    for j in range(k):
                        pos = w * stride + j - left
                        if 0 <= pos < width:
                            acc += W[o, ch, j] * x[s, ch, pos]
                y[s, o, w] = acc
    return y


@pytest.mark.parametrize("kernel,stride", [(5, 1), (3, 2), (4, 1)])
def test_conv_matches_direct_sum(rng, kernel, stride):
    layer = Conv1d(3, 4, kernel, stride, rng)
    layer.params["b"] = rng.standard_normal(4)
    x = rng.standard_normal((2, 3, 11))
    ref = direct_conv(x, layer.params["W"], layer.params["b"], stride)
    assert np.abs(layer.forward(x) - ref).max() <= 1e-12


def test_conv_delta_kernel_shifts(rng):
    layer = Conv1d(1, 1, 5, 1, rng)
    layer.params["W"][:] = [[[1, 0, 0, 0, 0]]]
    x = rng.standard_normal((1, 9))
    y = layer.forward(x)[0, 0]
    # centered kernel of width 5: tap 0 reads position w - 2
    assert np.array_equal(y, np.concatenate([[0, 0], x[0, :-2]]))


def test_pool_max_and_avg():
    x = np.array([[[1.0, 3.0, -2.0, -5.0, 7.0]]])
    assert np.array_equal(Pool(2, 2, "max").forward(x), [[[3.0, -2.0]]])
    assert np.array_equal(Pool(2, 2, "avg").forward(x), [[[2.0, -3.5]]])
    with pytest.raises(ValueError):
        Pool(3, 2)


def test_batchnorm_inference_at_running_mean(rng):
    bn = BatchNorm(5)
    for _ in range(30):
        bn.forward(rng.standard_normal((16, 5)) * 2 + 3, training=True)
    bn.params["beta"] = rng.standard_normal(5)
    x = np.tile(bn.buffers["running_mean"], (4, 1))
    assert np.allclose(bn.forward(x), bn.params["beta"], atol=1e-14)


def test_batchnorm_running_update():
    bn = BatchNorm(2, momentum=0.9)
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    bn.forward(x, training=True)
    assert np.allclose(bn.buffers["running_mean"], 0.1 * np.array([2.0, 4.0]))
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * np.array([1.0, 4.0]))


def test_zero_upstream_gives_zero_grads(rng):
    net = Network([LayerSpec("dense", {"units": 6}), LayerSpec("batchnorm"),
                   LayerSpec("activation", {"fn": "relu"}), LayerSpec("dense", {"units": 2})],
                  (3,), rng)
    out = net.forward(rng.standard_normal((5, 3)), training=True)
    net.backward(np.zeros_like(out))
    assert all(not g.any() for g in net.gradients())


def test_backward_needs_training_forward(rng):
    net = dense_net(3, 2, rng)
    net.forward(np.ones((1, 3)), training=False)
    with pytest.raises(RuntimeError):
        net.backward(np.ones((1, 2)))


def test_shape_checks(rng):
    net = dense_net(3, 2, rng)
    with pytest.raises(ValueError):
        net.forward(np.ones((1, 4)))
    with pytest.raises(ValueError):
        make_layer(LayerSpec("bogus"), (3,), rng)
    with pytest.raises(ValueError):
        make_layer(LayerSpec("activation", {"fn": "gelu"}), (3,), rng)


def test_spec_round_trip(rng):
    specs = [LayerSpec("conv1d", {"filters": 2, "kernel": 3, "stride": 1}),
             LayerSpec("pool", {"width": 2, "stride": 2, "mode": "max"}),
             LayerSpec("flatten"), LayerSpec("dense", {"units": 3}),
             LayerSpec("scale", {"factor": 2.0}),
             LayerSpec("quantize-approx", {"levels": 4, "sharpness": 10.0})]
    net = Network(specs, (8,), rng)
    assert net.output_shape == (3,)
    again = Network([LayerSpec.from_dict(s.to_dict()) for s in net.specs], (8,), rng)
    assert [s.to_dict() for s in again.specs] == [s.to_dict() for s in net.specs]
