"""Mini-batch training loop shared by the estimator and precoder networks."""

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam

__all__ = ["History", "split_indices", "fit", "evaluate"]


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)


def split_indices(n, rng, val_fraction=0.1):
    """Random train/validation split (9:1 by default)."""
    perm = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    if n - n_val < 1:
        raise ValueError("dataset too small to split")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def evaluate(net, inputs, targets, loss_fn, batch_size=4096):
    """Size-weighted mean loss in inference mode."""
    total, count = 0.0, 0
    for start in range(0, len(inputs), batch_size):
        x = inputs[start:start + batch_size]
        loss, _ = loss_fn(net.forward(x, training=False), targets[start:start + batch_size])
        total += loss * len(x)
        count += len(x)
    return total / count


def fit(net, inputs, targets, loss_fn, schedule, epochs, rng, n_batches=50,
        val_fraction=0.1, split=None, before_epoch=None, log=None):
    """Train ``net`` with Adam and a per-epoch learning-rate schedule.

    Parameters
    ----------
    net : Network
    inputs, targets : ndarray
        Aligned along the first axis.
    loss_fn : callable
        ``loss_fn(pred, target_batch) -> (loss, grad_wrt_pred)``.
    schedule : callable
        Maps the 0-based epoch index to a learning rate.
    epochs : int
    rng : numpy.random.Generator
        Drives the split and the per-epoch shuffles.
    n_batches : int
        Mini-batches per epoch.
    val_fraction : float
    split : tuple of index arrays, optional
        Explicit ``(train_idx, val_idx)``; overrides ``val_fraction``.
    before_epoch : callable, optional
        Called as ``before_epoch(epoch)`` at the start of each epoch.
    log : callable, optional
        Called as ``log(epoch, train_loss, val_loss, lr)`` after each epoch.

    Returns
    -------
    History
    """
    if len(inputs) == 0:
        raise ValueError("empty dataset")
    if len(inputs) != len(targets):
        raise ValueError("inputs and targets differ in length")
    if split is not None:
        train_idx, val_idx = (np.asarray(s, dtype=int) for s in split)
        if len(train_idx) == 0:
            raise ValueError("empty training split")
    elif len(inputs) > 1 and val_fraction > 0:
        train_idx, val_idx = split_indices(len(inputs), rng, val_fraction)
    else:
        train_idx, val_idx = np.arange(len(inputs)), np.arange(0)
    params = [p for _, _, p in net.parameters()]
    opt = Adam(params)
    hist = History()
    n_batches = max(1, min(n_batches, len(train_idx)))
    for epoch in range(epochs):
        if before_epoch is not None:
            before_epoch(epoch)
        lr = schedule(epoch)
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for batch in np.array_split(order, n_batches):
            pred = net.forward(inputs[batch], training=True)
            loss, grad = loss_fn(pred, targets[batch])
            net.backward(grad)
            opt.step(net.gradients(), lr)
            total += loss * len(batch)
        train_loss = total / len(order)
        if len(val_idx):
            val_loss = evaluate(net, inputs[val_idx], targets[val_idx], loss_fn)
        else:
            val_loss = float("nan")
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        hist.lr.append(lr)
        net.epoch += 1
        if log is not None:
            log(epoch, train_loss, val_loss, lr)
    net.eval()
    return hist
