import numpy as np
import pytest

from mmwave_dl.channel import (SystemConfig, build_dictionary, channel_from_paths,
                               from_beamspace, sample_channels, sample_user_channel,
                               steering_matrix, steering_vector, to_beamspace)


def test_steering_examples():
    assert np.allclose(steering_vector(1, 0.3), [1.0])
    assert np.allclose(steering_vector(2, 1.0), np.array([1, -1]) / np.sqrt(2))
    assert np.allclose(steering_vector(4, 0.0), 0.5 * np.ones(4))


def test_steering_unit_norm_and_matrix(rng):
    thetas = rng.uniform(-1, 1, 20)
    for t in thetas:
        assert abs(np.linalg.norm(steering_vector(64, t)) - 1) <= 1e-12
    M = steering_matrix(8, thetas)
    assert np.allclose(M[:, 3], steering_vector(8, thetas[3]))


@pytest.mark.parametrize("bad", [dict(n_users=5), dict(n_slots=16), dict(grid_size=32),
                                 dict(sparsity=1), dict(n_antennas=0),
                                 dict(path_gain_vars=(1.0,)), dict(noise_var=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SystemConfig(**bad)


def test_config_derived():
    cfg = SystemConfig()
    assert cfg.phase_levels == 16 and cfg.n_measurements == 32
    assert cfg.with_snr(10).noise_var == pytest.approx(0.1)
    assert SystemConfig(**cfg.to_dict()) == cfg


def test_dictionary_grid():
    d = build_dictionary(64, 128)
    assert d.grid[0] == -1.0 and d.grid[64] == 0.0
    assert np.allclose(build_dictionary(1, 2).A, [[1], [1]])


@pytest.mark.parametrize("G,N", [(128, 64), (64, 32), (16, 8), (24, 8), (17, 5)])
def test_dictionary_identity(G, N):
    A = build_dictionary(N, G).A
    # geometric-series oracle: sum_t exp(j pi phi_t (m - n)) = G * [m == n] when G >= N
    assert np.abs(A.conj().T @ A - (G / N) * np.eye(N)).max() <= 1e-10


def test_channel_matches_path_formula(rng):
    cfg = SystemConfig()
    uc = sample_user_channel(cfg, rng)
    ref = np.sqrt(cfg.n_antennas / cfg.n_paths) * sum(
        p.gain * steering_vector(cfg.n_antennas, np.sin(p.aoa)) for p in uc.paths)
    assert np.abs(uc.h - ref).max() <= 1e-12
    assert all(p.theta == np.sin(p.aoa) for p in uc.paths)


def test_channel_statistics():
    cfg = SystemConfig()
    h, g, aoa = sample_channels(cfg, 100_000, np.random.default_rng(0))
    var = np.mean(np.abs(g) ** 2, axis=0)
    assert np.allclose(var, [1.0, 0.5], rtol=0.03)
    assert np.mean(np.sum(np.abs(h) ** 2, axis=1)) == pytest.approx(48.0, rel=0.03)
    # Kolmogorov-Smirnov distance to uniform on [-pi, pi)
    x = np.sort(aoa[:, 0])
    u = (x + np.pi) / (2 * np.pi)
    n = len(u)
    ks = max(np.max(np.arange(1, n + 1) / n - u), np.max(u - np.arange(n) / n))
    assert ks < 0.01


def test_sampling_deterministic():
    cfg = SystemConfig()
    a = sample_channels(cfg, 5, np.random.default_rng(3))[0]
    b = sample_channels(cfg, 5, np.random.default_rng(3))[0]
    assert np.array_equal(a, b)


def test_grid_aligned_paths_are_on_grid_and_separated():
    cfg = SystemConfig()
    _, _, aoa = sample_channels(cfg, 500, np.random.default_rng(1), grid_aligned=True)
    idx = (np.sin(aoa) + 1) * cfg.grid_size / 2
    assert np.allclose(idx, np.rint(idx), atol=1e-9)
    idx = np.rint(idx).astype(int)
    diff = np.abs(idx[:, 0] - idx[:, 1])
    assert np.min(np.minimum(diff, cfg.grid_size - diff)) >= 2


def test_beamspace_examples(rng):
    d = build_dictionary(64, 128)
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    assert np.allclose(from_beamspace(to_beamspace(h, d).hb, d), h, atol=1e-10)
    zero = to_beamspace(np.zeros(64), d)
    assert not zero.hb.any() and not zero.amplitude.any()
    assert not from_beamspace(np.zeros(128), d).any()
    e = np.zeros(128)
    e[37] = 1.0
    assert np.allclose(from_beamspace(e, d), 64 / 128 * d.A[37].conj(), atol=1e-15)
    bs = to_beamspace(h, d)
    assert np.array_equal(bs.amplitude, np.abs(bs.hb))


def test_grid_aligned_beamspace(rng):
    # the antenna-space image of e_t maps back to (N_A/G) (A A^H) e_t, whose
    # t-th entry is N_A/G; only antenna-space round trips are exact
    d = build_dictionary(64, 128)
    e = np.zeros(128)
    e[40] = 1.0
    hb = to_beamspace(from_beamspace(e, d), d).hb
    assert hb[40] == pytest.approx(0.5, abs=1e-12)
    for t in (0, 17, 64, 127):
        h = (0.3 - 1.1j) * steering_vector(64, d.grid[t])
        amp = to_beamspace(h, d).amplitude
        brute = [abs(np.vdot(steering_vector(64, phi), h)) for phi in d.grid]
        assert np.argmax(amp) == t == np.argmax(brute)
