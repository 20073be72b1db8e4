"""Sparse beamspace channel estimation.

The learned estimator predicts the beamspace amplitude profile from the
pilot correlations, keeps the ``J`` strongest grid indices and fits their
complex coefficients by least squares.  OMP and a LOS-window pursuit are
provided as greedy baselines.  Grid indices are 0-based throughout.
"""

from dataclasses import dataclass

import numpy as np

from .channel import from_beamspace, to_beamspace
from .complex_linalg import solve_ls
from .nn import LayerSpec, Network, StepDecay, mse_loss
from .nn.training import fit
from .sounding import correlate, simulate_uplink

__all__ = ["ChannelEstimate", "CENN_WIDTHS", "cenn_specs", "build_cenn",
           "cenn_features", "amplitude_targets", "train_cenn",
           "predict_amplitude", "select_support", "ls_reconstruct", "omp",
           "dgmp", "estimate_all_users", "SCHEMES"]

CENN_WIDTHS = (1024, 512, 256)


@dataclass
class ChannelEstimate:
    """Beamspace estimate ``hb`` (zero off ``support``) and antenna-space ``h``."""

    hb: np.ndarray
    h: np.ndarray
    support: np.ndarray


def cenn_specs(grid_size, widths=CENN_WIDTHS, output_activation="identity"):
    specs = []
    for w in widths:
        specs += [LayerSpec("dense", {"units": int(w)}),
                  LayerSpec("batchnorm", {"momentum": 0.9, "eps": 1e-5}),
                  LayerSpec("activation", {"fn": "relu"})]
    specs.append(LayerSpec("dense", {"units": int(grid_size)}))
    specs.append(LayerSpec("activation", {"fn": output_activation}))
    return specs


def build_cenn(cfg, rng, widths=CENN_WIDTHS, output_activation="identity"):
    """Amplitude-prediction network: ``2G`` inputs, ``G`` nonnegative outputs."""
    G = cfg.grid_size
    return Network(cenn_specs(G, widths, output_activation), (2 * G,), rng)


def cenn_features(c, normalize=False):
    """Real network input ``[Re c, Im c]`` (rows); optionally unit l2 norm."""
    c = np.atleast_2d(c)
    x = np.concatenate([c.real, c.imag], axis=-1)
    if normalize:
        norm = np.linalg.norm(x, axis=-1, keepdims=True)
        x = x / np.where(norm > 0, norm, 1.0)
    return x


def amplitude_targets(h, dictionary):
    return to_beamspace(h, dictionary).amplitude


def train_cenn(net, c, g, epochs, rng, schedule=None, n_batches=50,
               val_fraction=0.1, normalize=False, split=None, log=None):
    """Fit the amplitude network to ``(c, g)`` pairs with an MSE loss.

    ``schedule`` defaults to 0.01 divided by 5 every 400 epochs.
    Returns the training :class:`~mmwave_dl.nn.training.History`.
    """
    schedule = schedule or StepDecay(0.01, 5.0, 400)
    x = cenn_features(c, normalize)
    g = np.atleast_2d(np.asarray(g, dtype=float))
    return fit(net, x, g, mse_loss, schedule, epochs, rng, n_batches=n_batches,
               val_fraction=val_fraction, split=split, log=log)


def predict_amplitude(net, c, normalize=False):
    """Predicted beamspace amplitudes (one row per correlation vector)."""
    c = np.asarray(c)
    out = net.forward(cenn_features(c, normalize), training=False)
    return out[0] if c.ndim == 1 else out


def select_support(g_hat, J):
    """Indices of the ``J`` largest ``|g_hat|``; ties go to the lower index."""
    g_hat = np.asarray(g_hat)
    if J > g_hat.shape[-1]:
        raise ValueError("J exceeds the grid size")
    return np.argsort(-np.abs(g_hat), axis=-1, kind="stable")[..., :J]


def _estimate(phi, r, support, dictionary):
    support = np.asarray(support, dtype=int)
    hb = np.zeros(phi.shape[1], dtype=np.complex128)
    hb[support] = solve_ls(phi[:, support], r)
    return ChannelEstimate(hb=hb, h=from_beamspace(hb, dictionary), support=support)


def ls_reconstruct(phi, r, support, dictionary):
    """Least-squares fit of ``r`` on the columns ``support`` of ``phi``."""
    return _estimate(phi, np.asarray(r), support, dictionary)


def _atom_norms(phi):
    norms = np.linalg.norm(phi, axis=0)
    return np.where(norms > 0, norms, 1.0)


def omp(phi, r, J, dictionary, return_residuals=False):
    """Orthogonal matching pursuit with exactly ``J`` iterations.

    Each iteration picks the atom with the largest normalized correlation
    ``|phi_t^H res| / ||phi_t||`` among atoms not yet chosen, refits all
    chosen atoms by least squares and updates the residual.
    """
    if J > phi.shape[0]:
        raise ValueError("J exceeds the number of measurements")
    r = np.asarray(r, dtype=np.complex128)
    norms = _atom_norms(phi)
    chosen = []
    residual = r
    history = [float(np.linalg.norm(r))]
    active = np.ones(phi.shape[1], dtype=bool)
    for _ in range(J):
        score = np.abs(phi.conj().T @ residual) / norms
        score[~active] = -1.0
        t = int(np.argmax(score))
        chosen.append(t)
        active[t] = False
        coef = solve_ls(phi[:, chosen], r)
        residual = r - phi[:, chosen] @ coef
        history.append(float(np.linalg.norm(residual)))
    est = _estimate(phi, r, chosen, dictionary)
    return (est, history) if return_residuals else est


def _window(center, J, G):
    return (center - J // 2 + np.arange(J)) % G


def dgmp(phi, r, J, dictionary):
    """LOS-window pursuit (approximation of distributed grid matching pursuit).

    Takes the ``J`` contiguous grid indices (cyclic) centred on the most
    correlated atom, fits them by least squares, then re-centres once on the
    largest fitted coefficient and refits.
    """
    if J > phi.shape[0]:
        raise ValueError("J exceeds the number of measurements")
    r = np.asarray(r, dtype=np.complex128)
    G = phi.shape[1]
    score = np.abs(phi.conj().T @ r) / _atom_norms(phi)
    win = _window(int(np.argmax(score)), J, G)
    first = _estimate(phi, r, win, dictionary)
    center = int(win[np.argmax(np.abs(first.hb[win]))])
    return _estimate(phi, r, _window(center, J, G), dictionary)


SCHEMES = ("dlcs", "omp", "dgmp", "oracle")


def estimate_all_users(H, block, dictionary, phi, scheme, J, noise_var, rng,
                       net=None, normalize=False, record=None):
    """Sound every row of ``H`` and estimate it with ``scheme``.

    Parameters
    ----------
    H : ndarray, shape (U, N_A)
        True channels, one user per row.
    block : PilotBlock
    dictionary : Dictionary
    phi : ndarray
        Measurement matrix of ``block``.
    scheme : {'dlcs', 'omp', 'dgmp', 'oracle'}
        ``oracle`` uses the ``J`` largest true beamspace amplitudes.
    J : int
    noise_var : float
    rng : numpy.random.Generator
        Noise source (unused when ``record`` is given).
    net : Network, optional
        Trained amplitude network, required for ``dlcs``.
    record : SoundingRecord, optional
        Precomputed soundings of ``H`` (lets schemes share one noise draw).

    Returns
    -------
    H_hat : ndarray, shape (U, N_A)
    """
    H = np.atleast_2d(H)
    if record is None:
        record = simulate_uplink(H, block, noise_var, rng, phi=phi)
    r = np.atleast_2d(record.r)
    if scheme == "dlcs":
        if net is None:
            raise ValueError("dlcs needs a trained network")
        c = correlate(phi, r)
        supports = select_support(predict_amplitude(net, c, normalize), J)
        ests = [ls_reconstruct(phi, ru, s, dictionary) for ru, s in zip(r, supports)]
    elif scheme == "omp":
        ests = [omp(phi, ru, J, dictionary) for ru in r]
    elif scheme == "dgmp":
        ests = [dgmp(phi, ru, J, dictionary) for ru in r]
    elif scheme == "oracle":
        supports = select_support(amplitude_targets(H, dictionary), J)
        ests = [ls_reconstruct(phi, ru, s, dictionary) for ru, s in zip(r, supports)]
    else:
        raise ValueError(f"unknown estimation scheme {scheme!r}")
    return np.stack([e.h for e in ests])
