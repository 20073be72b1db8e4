"""Training losses.  Each returns ``(loss, grad_wrt_prediction)``."""

import numpy as np

__all__ = ["mse_loss", "gain_loss", "beam_gain"]

_KINK = 1e-12


def _real(x):
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(float)


def mse_loss(pred, target):
    """Mean squared error averaged over every entry (batch and features).

    For a single length-G vector this is ``(1/G) sum (target - pred)^2``.
    """
    pred = _real(pred)
    target = _real(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return np.sum(diff * diff)[()] / n, 2.0 * diff / n


def beam_gain(phases, h):
    """``|f^T h|`` with ``f_n = exp(j phases_n)``; rows are independent samples."""
    f = np.exp(1j * _real(phases))
    return np.abs(np.sum(f * np.asarray(h), axis=-1))


def gain_loss(phases, h):
    """Negative beamforming gain ``-|f^T h|`` and its gradient in the phases.

    Evaluated in real arithmetic: with ``a = sum cos(p) Re h - sin(p) Im h``
    and ``b = sum sin(p) Re h + cos(p) Im h`` the loss is
    ``-sqrt(a^2 + b^2)``.  For a batch (2-D inputs) the loss is the batch
    mean and the gradient is scaled accordingly.  Where the gain is below
    1e-12 the gradient is set to zero.

    Parameters
    ----------
    phases : ndarray, shape (N,) or (B, N)
    h : ndarray, complex, same shape as ``phases``
    """
    phases = _real(phases)
    h = np.asarray(h)
    if phases.shape != h.shape:
        raise ValueError(f"shape mismatch: {phases.shape} vs {h.shape}")
    single = phases.ndim == 1
    p = phases[None] if single else phases
    hh = h[None] if single else h
    hr, hi = hh.real, hh.imag
    cos, sin = np.cos(p), np.sin(p)
    a = np.sum(cos * hr - sin * hi, axis=-1, keepdims=True)
    b = np.sum(sin * hr + cos * hi, axis=-1, keepdims=True)
    mag = np.sqrt(a * a + b * b)
    # d a / d p_n = -(sin Re h + cos Im h), d b / d p_n = cos Re h - sin Im h
    da = -(sin * hr + cos * hi)
    db = cos * hr - sin * hi
    safe = np.where(mag < _KINK, 1.0, mag)
    grad = np.where(mag < _KINK, 0.0, -(a * da + b * db) / safe)
    n = p.shape[0]
    loss = -np.mean(mag)[()]
    grad = grad / n
    return loss, (grad[0] if single else grad)
