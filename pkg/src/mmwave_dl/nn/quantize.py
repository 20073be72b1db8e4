"""Phase quantizers: the ideal staircase and its tanh-sum surrogate.

Both map a phase in ``[0, 2*pi)`` onto ``Q`` levels spaced ``2*pi/Q``.  The
ideal quantizer counts how many thresholds ``2*pi*q/Q`` (q = 1..Q) lie at or
below the input, i.e. a step sum with ``step(0) = 1``.  The surrogate swaps
each step for ``(tanh(eta*(x - threshold)) + 1) / 2`` and converges to the
staircase as ``eta`` grows.
"""

import numpy as np

__all__ = ["wrap_phase", "iq", "aq", "aq_grad", "thresholds"]

TWO_PI = 2.0 * np.pi
# phases within this many grid units of a threshold are snapped onto it so
# that quantizing an already-quantized phase is exact
_SNAP = 1e-9


def _real(x):
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(float)


def wrap_phase(x):
    return np.mod(x, TWO_PI)


def thresholds(Q):
    return TWO_PI * np.arange(1, Q + 1) / Q


def iq(x, Q):
    """Ideal quantizer ``(2 pi / Q) * #{q : x >= 2 pi q / Q}``.

    Inputs are wrapped into ``[0, 2*pi)`` first.  Equivalent to
    ``(2 pi / Q) * floor(x Q / 2 pi)``; values within 1e-9 grid units of a
    threshold count as on it.
    """
    x = wrap_phase(_real(x))
    k = x * Q / TWO_PI
    n = np.floor(k)
    near = np.rint(k)
    n = np.where(np.abs(k - near) < _SNAP, near, n)
    # wrapping can leave x == 2*pi - tiny, which rounds to Q levels
    n = np.minimum(n, Q - 1)
    return TWO_PI / Q * n


def aq(x, Q, eta):
    """Smooth quantizer ``(pi/Q) * sum_q [tanh(eta (x - 2 pi q / Q)) + 1]``."""
    x = _real(x)
    t = np.tanh(eta * (x[..., None] - thresholds(Q)))
    return np.pi / Q * np.sum(t + 1.0, axis=-1)


def aq_grad(x, Q, eta):
    """Derivative of :func:`aq`: ``(pi eta / Q) * sum_q sech^2(...)``."""
    x = _real(x)
    t = np.tanh(eta * (x[..., None] - thresholds(Q)))
    return np.pi * eta / Q * np.sum(1.0 - t * t, axis=-1)
