"""Fast self-checks of the core invariants, run by ``mmwave-dl check``.

Each check returns ``(passed, detail)``; none takes more than a few
seconds.  The test suite covers the same ground with independent oracles.
"""

import io
import tempfile
from pathlib import Path

import numpy as np

from .channel import SystemConfig, build_dictionary, sample_channels, to_beamspace
from .dlcs import build_cenn, ls_reconstruct, omp
from .dlqp import build_thpnn, zf_digital
from .metrics import nmse
from .nn import aq, gain_loss, grad_check, iq, load_network, mse_loss, save_network
from .sounding import measurement_matrix, sample_pilot_block, simulate_uplink

__all__ = ["CHECKS", "run_checks"]


def dictionary_identity():
    worst = 0.0
    for G, N in ((128, 64), (64, 32), (16, 8)):
        A = build_dictionary(N, G).A
        worst = max(worst, np.abs(A.conj().T @ A - (G / N) * np.eye(N)).max())
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def sounding_consistency():
    cfg = SystemConfig()
    rng = np.random.default_rng(1)
    d = build_dictionary(cfg.n_antennas, cfg.grid_size)
    block = sample_pilot_block(cfg, rng)
    phi = measurement_matrix(block, d)
    h, _, _ = sample_channels(cfg, 100, rng)
    lhs = to_beamspace(h, d).hb @ phi.T
    rhs = h @ block.F
    err = np.max(np.linalg.norm(lhs - rhs, axis=1) / np.linalg.norm(rhs, axis=1))
    return err <= 1e-10, f"max relative error {err:.2e}"


def exact_recovery():
    cfg = SystemConfig()
    rng = np.random.default_rng(2)
    d = build_dictionary(cfg.n_antennas, cfg.grid_size)
    block = sample_pilot_block(cfg, rng)
    phi = measurement_matrix(block, d)
    h, _, aoas = sample_channels(cfg, 50, rng, grid_aligned=True)
    r = simulate_uplink(h, block, 0.0, None).r
    true_idx = np.rint((np.sin(aoas) + 1.0) * cfg.grid_size / 2).astype(int)
    worst = 0.0
    for hu, ru, support in zip(h, r, true_idx):
        worst = max(worst, nmse(ls_reconstruct(phi, ru, support, d).h, hu),
                    nmse(omp(phi, ru, cfg.sparsity, d).h, hu))
    return worst <= 1e-20, f"worst NMSE {worst:.2e}"


def gradients():
    rng = np.random.default_rng(3)
    cfg = SystemConfig(n_antennas=16, grid_size=16, n_slots=2)
    cenn = build_cenn(cfg, rng, widths=(32, 16, 8))
    x = rng.standard_normal((6, 32))
    t = rng.standard_normal((6, 16))
    e1 = grad_check(cenn, x, lambda p: mse_loss(p, t), eps=1e-6, max_entries=20, rng=rng)
    thp = build_thpnn(cfg, rng, sharpness=5.0)
    h = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
    x = rng.standard_normal((4, 32))
    e2 = grad_check(thp, x, lambda p: gain_loss(p, h), eps=1e-6, max_entries=10, rng=rng)
    worst = max(e1, e2)
    return worst < 1e-4, f"max relative error {worst:.2e}"


def quantizer_limit():
    Q, eta = 16, 100.0
    x = np.linspace(0, 2 * np.pi, 200_001, endpoint=False)
    edges = 2 * np.pi * np.arange(Q + 1) / Q
    keep = np.min(np.abs(x[:, None] - edges), axis=1) > 0.05
    dev = np.max(np.abs(aq(x[keep], Q, eta) - iq(x[keep], Q)))
    levels = iq(x, Q) * Q / (2 * np.pi)
    on_grid = np.max(np.abs(levels - np.rint(levels))) < 1e-9
    idem = np.array_equal(iq(iq(x, Q), Q), iq(x, Q))
    ok = dev < 2 * np.pi / Q * 0.02 and on_grid and idem
    return ok, f"max |AQ-IQ| {dev:.2e}, grid {on_grid}, idempotent {idem}"


def zf_contract():
    rng = np.random.default_rng(4)
    worst_res, worst_pow = 0.0, 0.0
    for _ in range(200):
        H = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
        F_R = np.exp(2j * np.pi * rng.integers(0, 16, (16, 3)) / 16)
        zf = zf_digital(H, F_R)
        worst_res = max(worst_res, np.linalg.norm(H @ F_R @ zf.raw - np.eye(3)))
        worst_pow = max(worst_pow, np.abs(np.linalg.norm(F_R @ zf.F_B, axis=0) - 1).max())
    ok = worst_res <= 1e-8 and worst_pow <= 1e-10
    return ok, f"residual {worst_res:.2e}, power error {worst_pow:.2e}"


def checkpoint_round_trip():
    rng = np.random.default_rng(5)
    cfg = SystemConfig(n_antennas=16, grid_size=16, n_slots=2)
    net = build_cenn(cfg, rng, widths=(32, 16, 8))
    x = rng.standard_normal((8, 32))
    net.forward(x, training=True)
    net.eval()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "net.ckpt"
        save_network(net, path)
        loaded, _ = load_network(path)
    same = np.array_equal(net.forward(x), loaded.forward(x))
    return same, "bit-exact" if same else "outputs differ"


CHECKS = {
    "dictionary-identity": dictionary_identity,
    "sounding-consistency": sounding_consistency,
    "exact-recovery": exact_recovery,
    "gradients": gradients,
    "quantizer-limit": quantizer_limit,
    "zf-contract": zf_contract,
    "checkpoint-round-trip": checkpoint_round_trip,
}


def run_checks(out=None):
    """Run every check, print one line each; returns True when all pass."""
    out = out or io.StringIO()
    ok_all = True
    for name, fn in CHECKS.items():
        ok, detail = fn()
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    return ok_all
