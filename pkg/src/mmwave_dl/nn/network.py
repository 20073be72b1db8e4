"""Sequential network container and a finite-difference gradient checker."""

import numpy as np

from .layers import LayerSpec, make_layer

__all__ = ["Network", "grad_check"]


class Network:
    """An ordered stack of layers built from :class:`LayerSpec` objects.

    Parameters
    ----------
    specs : list of LayerSpec
    input_shape : tuple
        Per-sample input shape, e.g. ``(256,)``.
    rng : numpy.random.Generator
        Source for weight initialization.
    """

    def __init__(self, specs, input_shape, rng):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = []
        shape = self.input_shape
        for spec in specs:
            layer = make_layer(spec, shape, rng)
            self.layers.append(layer)
            shape = layer.output_shape(shape)
        self.output_shape = shape
        self.training = False
        self.epoch = 0

    @property
    def specs(self):
        return [layer.spec() for layer in self.layers]

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        for layer in self.layers:
            layer._cache = None
        return self

    def forward(self, x, training=None):
        """Run the stack; ``training`` defaults to the network's mode flag."""
        training = self.training if training is None else training
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != expected {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    __call__ = forward

    def backward(self, dy):
        """Backpropagate ``dy`` (gradient of the loss w.r.t. the output).

        Returns the gradient w.r.t. the network input; parameter gradients
        are left in each layer's ``grads``.
        """
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self):
        """``[(layer_index, name, array), ...]`` in declaration order."""
        return [(i, name, arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.params.items()]

    def gradients(self):
        return [self.layers[i].grads[name] for i, name, _ in self.parameters()]

    def buffers(self):
        return [(i, name, arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.buffers.items()]

    def n_params(self):
        return int(sum(arr.size for _, _, arr in self.parameters()))

    def find(self, kind):
        return [i for i, layer in enumerate(self.layers) if layer.kind == kind]

    def replace_layer(self, index, spec):
        """Swap layer ``index`` for a parameter-free layer built from ``spec``."""
        shape = self.input_shape
        for layer in self.layers[:index]:
            shape = layer.output_shape(shape)
        new = make_layer(spec, shape, np.random.default_rng(0))
        if new.params:
            raise ValueError("replace_layer only supports parameter-free layers")
        self.layers[index] = new


def _snapshot_buffers(net):
    return [(layer, {k: v.copy() for k, v in layer.buffers.items()}) for layer in net.layers]


def _restore_buffers(saved):
    for layer, bufs in saved:
        layer.buffers.update(bufs)


def grad_check(net, x, loss_fn, eps=1e-6, max_entries=None, rng=None,
               fd_dtype=np.longdouble):
    """Largest relative error between backprop and central differences.

    Backprop runs in float64.  The finite differences are evaluated with
    parameters, input and loss in ``fd_dtype`` (80-bit extended precision by
    default) so that their round-off stays well below the 1e-8 floor even
    for gradients that are exactly zero, e.g. biases feeding a batch norm.

    Parameters
    ----------
    net : Network
    x : ndarray
        Input batch; the network runs in training mode (batch statistics).
    loss_fn : callable
        ``loss_fn(output) -> (scalar, grad_wrt_output)``; must accept
        ``fd_dtype`` arrays.
    eps : float
        Finite-difference step.
    max_entries : int, optional
        Check at most this many randomly chosen entries per parameter.
    rng : numpy.random.Generator, optional
        Used to pick entries when ``max_entries`` is set.
    fd_dtype : numpy dtype

    Returns
    -------
    float
        ``max |analytic - fd| / max(|analytic|, |fd|, 1e-8)`` over checked
        entries.  Parameters and running statistics are restored afterwards.
    """
    saved = _snapshot_buffers(net)
    originals = [(layer, dict(layer.params)) for layer in net.layers]
    rng = np.random.default_rng(0) if rng is None else rng
    try:
        out = net.forward(x, training=True)
        _, dy = loss_fn(out)
        net.backward(dy)
        analytic = [g.copy() for g in net.gradients()]

        for layer in net.layers:
            for name, arr in layer.params.items():
                layer.params[name] = arr.astype(fd_dtype)
        x_fd = np.asarray(x).astype(fd_dtype)
        eps = fd_dtype(eps)

        def loss_at():
            return loss_fn(_forward_any(net, x_fd))[0]

        worst = 0.0
        for (_, _, arr), grad in zip(net.parameters(), analytic):
            flat = arr.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            for j in idx:
                orig = flat[j]
                flat[j] = orig + eps
                up = loss_at()
                flat[j] = orig - eps
                down = loss_at()
                flat[j] = orig
                fd = float((up - down) / (2 * eps))
                a = float(grad.reshape(-1)[j])
                err = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                worst = max(worst, err)
        return worst
    finally:
        for layer, params in originals:
            layer.params.update(params)
        _restore_buffers(saved)


def _forward_any(net, x):
    # Network.forward casts to float64; bypass it to keep extended precision
    for layer in net.layers:
        x = layer.forward(x, True)
    return x
