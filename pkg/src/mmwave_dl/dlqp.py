"""Hybrid precoding with quantized analog phases.

A convolutional network maps each user's estimated channel to ``N_A``
phases.  During training the phases pass through the smooth tanh-sum
quantizer so the beamforming-gain loss can be backpropagated; for
deployment that layer is swapped for the exact staircase, so every analog
weight lies on the ``Q``-point phase grid.  Digital precoding is
zero-forcing on the effective channel with per-stream power normalization.

Baselines: quantized-angle linear search (QALS) over grid-compatible
steering vectors and random-search "exhaustion" over analog matrices.
"""

import copy
from dataclasses import dataclass

import numpy as np

from .channel import steering_matrix
from .complex_linalg import SingularSystemError
from .metrics import hybrid_rows, spectral_efficiency
from .nn import LayerSpec, Network, StepDecay, gain_loss
from .nn.training import fit

__all__ = ["THPNN_FILTERS", "DigitalPrecoder", "PrecoderPair", "thpnn_specs",
           "build_thpnn", "precoder_features", "train_thpnn", "sharpness_schedule", "to_dhpnn",
           "phases", "analog_vector", "stack_analog", "zf_digital",
           "qals_angles", "qals", "exhaustion", "ExhaustionResult",
           "dump_precoders", "load_precoders", "hybrid_se", "ZF_COND_CAP"]

THPNN_FILTERS = (16, 32, 64, 64)
ZF_COND_CAP = 1e8


@dataclass
class DigitalPrecoder:
    """ZF precoder before (``raw``) and after per-column power normalization."""

    F_B: np.ndarray
    raw: np.ndarray
    cond: float


@dataclass
class PrecoderPair:
    F_R: np.ndarray
    F_B: np.ndarray


def thpnn_specs(n_antennas, levels, sharpness, filters=THPNN_FILTERS,
                kernel=5, pool="max"):
    specs = []
    for i, f in enumerate(filters):
        specs.append(LayerSpec("conv1d", {"filters": int(f), "kernel": kernel, "stride": 1}))
        if i < len(filters) - 1:
            specs.append(LayerSpec("activation", {"fn": "relu"}))
        specs.append(LayerSpec("pool", {"width": 2, "stride": 2, "mode": pool}))
    specs += [LayerSpec("flatten"),
              LayerSpec("dense", {"units": int(n_antennas)}),
              LayerSpec("activation", {"fn": "sigmoid"}),
              LayerSpec("scale", {"factor": 2.0 * np.pi}),
              LayerSpec("quantize-approx", {"levels": int(levels), "sharpness": float(sharpness)})]
    return specs


def build_thpnn(cfg, rng, filters=THPNN_FILTERS, sharpness=None):
    """Training-time precoder network for ``cfg``.

    Input is :func:`precoder_features` of ``h_hat`` (width ``2 N_A``);
    output is the approximately quantized phase vector (width ``N_A``).
    """
    eta = cfg.aq_sharpness if sharpness is None else sharpness
    specs = thpnn_specs(cfg.n_antennas, cfg.phase_levels, eta, filters)
    return Network(specs, (2 * cfg.n_antennas,), rng)


def precoder_features(h_hat):
    """Interleaved ``[Re h_0, Im h_0, Re h_1, ...]`` rows scaled to norm ``sqrt(N_A)``.

    Interleaving keeps each antenna's pair inside one convolution window;
    the gain loss is scale invariant, so only the direction is kept.
    A zero row stays zero.
    """
    h_hat = np.atleast_2d(h_hat)
    norm = np.linalg.norm(h_hat, axis=-1, keepdims=True)
    scale = np.sqrt(h_hat.shape[-1]) / np.where(norm > 0, norm, 1.0)
    h_hat = h_hat * scale
    return np.stack([h_hat.real, h_hat.imag], axis=-1).reshape(h_hat.shape[0], -1)


def _gain_objective(pred, h):
    return gain_loss(pred, h)


def sharpness_schedule(start, final, epochs):
    """Geometric ramp of the AQ sharpness from ``start`` to ``final``.

    Reaches ``final`` at the last epoch; a single epoch uses ``final``.
    """
    if start <= 0 or final <= 0:
        raise ValueError("sharpness must be positive")

    def eta(epoch):
        if epoch >= epochs - 1:
            return float(final)
        return float(start * (final / start) ** (epoch / (epochs - 1)))
    return eta


def train_thpnn(net, h_hat, h, epochs, rng, schedule=None, n_batches=200,
                val_fraction=0.1, split=None, sharpness_start=None, log=None):
    """Maximize ``|f_bar^T h|`` where ``f_bar`` comes from ``h_hat``.

    ``schedule`` defaults to 0.01 halved every 2000 epochs.  With
    ``sharpness_start`` the AQ sharpness is ramped geometrically from that
    value to the layer's configured sharpness over the run; the network
    ends with its configured value either way.
    """
    schedule = schedule or StepDecay(0.01, 2.0, 2000)
    x = precoder_features(h_hat)
    hook = None
    idx = net.find("quantize-approx")
    if sharpness_start is not None and idx:
        layer = net.layers[idx[0]]
        eta = sharpness_schedule(sharpness_start, layer.sharpness, epochs)

        def hook(epoch):
            layer.sharpness = eta(epoch)
    try:
        return fit(net, x, np.atleast_2d(h), _gain_objective, schedule, epochs, rng,
                   n_batches=n_batches, val_fraction=val_fraction, split=split,
                   before_epoch=hook, log=log)
    finally:
        if hook is not None:
            layer.sharpness = eta(epochs - 1)


def to_dhpnn(net):
    """Deployment copy of ``net`` with the smooth quantizer made exact."""
    idx = net.find("quantize-approx")
    if len(idx) != 1:
        raise ValueError("network must contain exactly one quantize-approx layer")
    out = copy.deepcopy(net)
    out.replace_layer(idx[0], LayerSpec("quantize-ideal", {"levels": net.layers[idx[0]].levels}))
    return out.eval()


def phases(net, h_hat):
    """Phase vector(s) produced by ``net`` for ``h_hat`` (rows allowed)."""
    h_hat = np.asarray(h_hat)
    out = net.forward(precoder_features(h_hat), training=False)
    return out[0] if h_hat.ndim == 1 else out


def analog_vector(dhpnn, h_hat):
    """Unit-modulus analog weights ``exp(j psi)`` from the deployment network."""
    return np.exp(1j * phases(dhpnn, h_hat))


def stack_analog(vectors):
    """Stack per-user analog vectors as the columns of ``F_R``."""
    vectors = [np.asarray(v) for v in vectors]
    n = {len(v) for v in vectors}
    if len(n) != 1:
        raise ValueError("analog vectors differ in length")
    return np.stack(vectors, axis=1)


def zf_digital(H_hat, F_R, cond_cap=ZF_COND_CAP):
    """Zero-forcing digital precoder on ``H_eff = H_hat F_R``.

    ``raw = H_eff^H (H_eff H_eff^H)^-1``; each column ``u`` is then divided by
    ``||F_R raw[:, u]||`` so every stream radiates unit power.

    Raises
    ------
    SingularSystemError
        When ``cond(H_eff) >= cond_cap``.
    """
    H_eff = np.atleast_2d(H_hat) @ F_R
    cond = float(np.linalg.cond(H_eff))
    if not cond < cond_cap:
        raise SingularSystemError("effective channel is ill conditioned", cond)
    raw = H_eff.conj().T @ np.linalg.inv(H_eff @ H_eff.conj().T)
    F_B = raw / np.linalg.norm(F_R @ raw, axis=0, keepdims=True)
    return DigitalPrecoder(F_B=F_B, raw=raw, cond=cond)


def _zf_digital_batch(H_hat, F_R, cond_cap):
    """Vectorized :func:`zf_digital` over a stack of analog matrices.

    Returns ``(F_B, ok)``; entries with ``ok == False`` are ill conditioned
    and their ``F_B`` is meaningless.
    """
    H_eff = H_hat @ F_R
    cond = np.linalg.cond(H_eff)
    ok = np.isfinite(cond) & (cond < cond_cap)
    safe = np.where(ok[:, None, None], H_eff, np.eye(H_eff.shape[-1]))
    Hh = np.conj(np.swapaxes(safe, -1, -2))
    raw = Hh @ np.linalg.inv(safe @ Hh)
    F_B = raw / np.linalg.norm(F_R @ raw, axis=-2, keepdims=True)
    return F_B, ok


def qals_angles(Q):
    """Angles ``2k/Q`` (k = -Q/2 .. Q/2-1) whose steering phases are all on the grid."""
    return 2.0 * np.arange(-(Q // 2), Q - Q // 2) / Q


def qals(h_hat, n_antennas, Q):
    """Quantized-angle linear search for one user.

    Returns the unit-modulus vector ``sqrt(N_A) alpha(N_A, theta)`` over
    ``theta`` in :func:`qals_angles` maximizing ``|f^T h_hat|``.
    """
    if Q < 2:
        raise ValueError("need Q >= 2")
    cands = np.sqrt(n_antennas) * steering_matrix(n_antennas, qals_angles(Q))
    gains = np.abs(np.asarray(h_hat) @ cands)
    return cands[:, int(np.argmax(gains))]


@dataclass
class ExhaustionResult:
    F_R: np.ndarray
    F_B: np.ndarray
    se: float
    draw: int
    n_valid: int


def exhaustion(H_hat, draws, Q, noise_var, rng, chunk=512, cond_cap=ZF_COND_CAP):
    """Best of ``draws`` random quantized analog matrices (with ZF digital).

    Draws are generated sequentially, so a longer run extends a shorter one
    with the same seed.  Selection maximizes the spectral efficiency computed
    on ``H_hat``; ties keep the earliest draw.

    Raises
    ------
    SingularSystemError
        If every draw yields an ill-conditioned effective channel.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    H_hat = np.atleast_2d(H_hat)
    U, N_A = H_hat.shape
    best_se, best = -np.inf, None
    n_valid = 0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        idx = rng.integers(0, Q, size=(m, N_A, U))
        F_R = np.exp(2j * np.pi * idx / Q)
        F_B, ok = _zf_digital_batch(H_hat, F_R, cond_cap)
        rows = np.swapaxes(F_R @ F_B, -1, -2)
        se = np.where(ok, spectral_efficiency(rows, H_hat, noise_var), -np.inf)
        n_valid += int(ok.sum())
        j = int(np.argmax(se))
        if ok[j] and se[j] > best_se:
            best_se = float(se[j])
            best = (F_R[j], F_B[j], done + j)
        done += m
    if best is None:
        raise SingularSystemError("all exhaustion draws were singular")
    return ExhaustionResult(F_R=best[0], F_B=best[1], se=best_se, draw=best[2], n_valid=n_valid)


def dump_precoders(pair, path):
    """Write ``F_R`` and ``F_B`` as plain text.

    Layout: a ``# F_R rows cols`` line followed by one matrix row per line
    with entries ``re,im`` separated by spaces, then the same for ``F_B``.
    """
    with open(path, "w") as fh:
        for name, M in (("F_R", pair.F_R), ("F_B", pair.F_B)):
            fh.write(f"# {name} {M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) + "\n")


def load_precoders(path):
    mats = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        _, name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        M = np.empty((rows, cols), dtype=np.complex128)
        for r in range(rows):
            for c, tok in enumerate(lines[i + 1 + r].split()):
                re, im = tok.split(",")
                M[r, c] = complex(float(re), float(im))
        mats[name] = M
        i += rows + 1
    return PrecoderPair(F_R=mats["F_R"], F_B=mats["F_B"])


def hybrid_se(pair, H, noise_var):
    return float(spectral_efficiency(hybrid_rows(pair.F_R, pair.F_B), H, noise_var))
