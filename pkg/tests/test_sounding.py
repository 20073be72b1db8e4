import numpy as np
import pytest

from mmwave_dl.channel import SystemConfig, build_dictionary, sample_channels, steering_vector
from mmwave_dl.sounding import (PilotBlock, correlate, measurement_matrix,
                                sample_pilot_block, simulate_uplink)

from conftest import crandn


def test_pilot_block_shapes_and_grid(cfg):
    block = sample_pilot_block(cfg, np.random.default_rng(0))
    assert block.F.shape == (64, 32)
    k = np.angle(block.analog) * cfg.phase_levels / (2 * np.pi)
    assert np.allclose(k, np.rint(k), atol=1e-9)
    assert np.allclose(np.linalg.norm(block.analog, axis=1), 1.0)
    again = sample_pilot_block(cfg, np.random.default_rng(0))
    assert np.array_equal(block.F, again.F) and block.digest() == again.digest()


def test_binary_phases():
    cfg = SystemConfig(phase_bits=1)
    block = sample_pilot_block(cfg, np.random.default_rng(1))
    assert np.allclose(np.abs(block.analog.imag), 0, atol=1e-15)


def test_F_stacks_slots(cfg):
    block = sample_pilot_block(cfg, np.random.default_rng(2))
    for k in range(cfg.n_slots):
        assert np.array_equal(block.F[:, 4 * k:4 * k + 4], block.analog[k])


def test_measurement_matrix_trivial_and_naive(link):
    one = PilotBlock(analog=np.ones((1, 1, 1), dtype=complex), phase_levels=2)
    assert np.allclose(measurement_matrix(one, build_dictionary(1, 1)), [[1]])
    d, block, phi = link
    assert phi.shape == (32, 128)
    F, A = block.F, d.A
    ref = np.zeros((32, 128), dtype=complex)
    for m in range(32):
        for t in range(128):
            ref[m, t] = sum(F[n, m] * np.conj(A[t, n]) for n in range(64))
    ref *= 64 / 128
    assert np.abs(phi - ref).max() <= 1e-12


def test_noiseless_consistency(cfg, link, rng):
    d, block, phi = link
    h, _, _ = sample_channels(cfg, 100, rng)
    rec = simulate_uplink(h, block, 0.0, None)
    assert np.array_equal(rec.r, h @ block.F)
    rel = np.linalg.norm((d.A @ h.T).T @ phi.T - rec.r, axis=1) / np.linalg.norm(rec.r, axis=1)
    assert rel.max() <= 1e-10
    hg = 0.7j * steering_vector(64, d.grid[21]) + 0.2 * steering_vector(64, d.grid[90])
    assert np.allclose(simulate_uplink(hg, block, 0.0, None).r, phi @ (d.A @ hg), atol=1e-12)


def test_noise_variance_matches_combiner_energy(cfg, link):
    _, block, _ = link
    rng = np.random.default_rng(3)
    var = 0.3
    h = np.zeros((10_000, 64), dtype=complex)
    noise = simulate_uplink(h, block, var, rng).r
    expected = var * np.sum(np.abs(block.F) ** 2, axis=0)
    assert np.allclose(np.mean(np.abs(noise) ** 2, axis=0), expected, rtol=0.05)


def test_snr_monotonicity(cfg, link):
    _, block, _ = link
    h, _, _ = sample_channels(cfg, 4000, np.random.default_rng(4))
    clean = h @ block.F

    def rel(var):
        r = simulate_uplink(h, block, var, np.random.default_rng(5)).r
        return np.mean(np.sum(np.abs(r - clean) ** 2, 1) / np.sum(np.abs(clean) ** 2, 1))

    assert rel(0.1) / rel(0.05) == pytest.approx(2.0, rel=0.05)


def test_per_row_noise(cfg, link):
    _, block, _ = link
    h = np.zeros((2000, 64), dtype=complex)
    var = np.where(np.arange(2000) < 1000, 1.0, 0.01)
    r = simulate_uplink(h, block, var, np.random.default_rng(6)).r
    p = np.mean(np.abs(r) ** 2, axis=1)
    assert p[:1000].mean() / p[1000:].mean() == pytest.approx(100, rel=0.1)
    with pytest.raises(ValueError):
        simulate_uplink(h, block, var[:5], np.random.default_rng(6))
    with pytest.raises(ValueError):
        simulate_uplink(h, block, -1.0, np.random.default_rng(6))


def test_correlate(link, rng):
    _, _, phi = link
    assert not correlate(phi, np.zeros(32)).any()
    r = crandn(rng, 32)
    ref = np.array([sum(np.conj(phi[m, t]) * r[m] for m in range(32)) for t in range(128)])
    assert np.abs(correlate(phi, r) - ref).max() <= 1e-12
    q, _ = np.linalg.qr(crandn(rng, 8, 3))
    assert np.allclose(correlate(q, q @ np.eye(3)[1]), np.eye(3)[1], atol=1e-12)
    with pytest.raises(ValueError):
        correlate(phi, np.zeros(31))
