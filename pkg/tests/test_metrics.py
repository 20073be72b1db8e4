import numpy as np
import pytest

from mmwave_dl.metrics import (MetricRow, CSV_COLUMNS, fully_digital_zf, hybrid_rows, nmse,
                               spectral_efficiency, zf_rate)

from conftest import crandn


def test_nmse_examples(rng):
    H = crandn(rng, 3, 8)
    assert nmse(H, H) == 0.0
    assert nmse(np.zeros_like(H), H) == 1.0
    E = crandn(rng, 3, 8)
    num = sum(abs(E[u, n] - H[u, n]) ** 2 for u in range(3) for n in range(8))
    den = sum(abs(H[u, n]) ** 2 for u in range(3) for n in range(8))
    assert nmse(E, H) == pytest.approx(num / den, abs=1e-12)
    q, _ = np.linalg.qr(crandn(rng, 8, 8))
    assert nmse(E @ q, H @ q) == pytest.approx(nmse(E, H), rel=1e-12)
    with pytest.raises(ValueError):
        nmse(H, np.zeros_like(H))
    with pytest.raises(ValueError):
        nmse(H[:2], H)


def test_fully_digital_zf(rng):
    q, _ = np.linalg.qr(crandn(rng, 8, 3))
    H = q.T
    F = fully_digital_zf(H)
    assert np.allclose(F, H.conj() / np.linalg.norm(H, axis=1, keepdims=True), atol=1e-12)
    H = crandn(rng, 3, 64)
    F = fully_digital_zf(H)
    assert np.allclose(np.linalg.norm(F, axis=1), 1, atol=1e-12)
    P = F @ H.T
    assert np.abs(P - np.diag(np.diag(P))).max() <= 1e-8
    G = np.abs(H @ F.T)
    assert np.all(G - np.diag(np.diag(G)) <= 1e-8 * np.diag(G)[:, None])


def test_se_examples(rng):
    assert spectral_efficiency(np.array([[1.0]]), np.array([[1.0]]), 1.0) == pytest.approx(1.0)
    H = crandn(rng, 3, 64)
    F = fully_digital_zf(H)
    gains = np.abs(np.sum(F * H, axis=1)) ** 2
    assert spectral_efficiency(F, H, 0.1) == pytest.approx(np.sum(np.log2(1 + gains / (3 * 0.1))))
    se = [spectral_efficiency(F, H, s) for s in (0.01, 0.1, 1, 10, 1e3, 1e9)]
    assert all(b < a for a, b in zip(se, se[1:])) and se[-1] < 1e-6


def test_se_batched(rng):
    H = crandn(rng, 3, 8)
    F = crandn(rng, 4, 3, 8)
    batch = spectral_efficiency(F, H, 0.5)
    assert np.allclose(batch, [spectral_efficiency(f, H, 0.5) for f in F])


def test_hybrid_rows(rng):
    assert np.array_equal(hybrid_rows(np.eye(3), np.eye(3)), np.eye(3))
    F_R, F_B, H = crandn(rng, 8, 3), crandn(rng, 3, 3), crandn(rng, 3, 8)
    rows = hybrid_rows(F_R, F_B)
    assert np.allclose(H @ rows.T, H @ F_R @ F_B, atol=1e-12)
    with pytest.raises(ValueError):
        hybrid_rows(F_R, crandn(rng, 2, 3))


def test_zf_rate_singular(rng):
    H = crandn(rng, 3, 8)
    assert np.isnan(zf_rate(np.ones((3, 8)), H, 0.1))
    assert zf_rate(H, H, 0.1) > 0


def test_metric_row():
    row = MetricRow("omp", 10.0, 8, 6, 100, 0.1, 0.01, 12.0, 0.2, 3)
    assert row.as_csv() == ["omp", 10.0, 8, 6, 100, 0.1, 0.01, 12.0, 0.2, 3]
    assert len(CSV_COLUMNS) == 10
