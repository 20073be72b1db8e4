"""Channel-estimation error and downlink spectral efficiency."""

from dataclasses import dataclass, asdict

import numpy as np

from .complex_linalg import SingularSystemError, solve_square

__all__ = ["MetricRow", "nmse", "fully_digital_zf", "spectral_efficiency",
           "hybrid_rows", "CSV_COLUMNS"]

CSV_COLUMNS = ("scheme", "snr_db", "k_slots", "j_sparsity", "n_trials",
               "nmse_mean", "nmse_stderr", "se_mean", "se_stderr", "fail_count")


@dataclass
class MetricRow:
    scheme: str
    snr_db: float
    k_slots: int
    j_sparsity: int
    n_trials: int
    nmse_mean: float
    nmse_stderr: float
    se_mean: float
    se_stderr: float
    fail_count: int = 0

    def as_csv(self):
        d = asdict(self)
        return [d[c] for c in CSV_COLUMNS]


def nmse(H_hat, H):
    """``sum_u ||h_hat_u - h_u||^2 / sum_u ||h_u||^2``."""
    H_hat = np.asarray(H_hat)
    H = np.asarray(H)
    if H_hat.shape != H.shape:
        raise ValueError(f"shape mismatch: {H_hat.shape} vs {H.shape}")
    den = np.sum(np.abs(H) ** 2)
    if den == 0:
        raise ValueError("reference channel has zero norm")
    return float(np.sum(np.abs(H_hat - H) ** 2) / den)


def fully_digital_zf(H_hat, cond_cap=1e10):
    """Row-normalized zero-forcing precoder ``(H* H^T)^-1 H*``.

    Row ``u`` is the precoding vector for user ``u``; applied as
    ``F[u] @ h_u``.

    Raises
    ------
    SingularSystemError
        If the Gram matrix is (near) singular.
    """
    H_hat = np.atleast_2d(H_hat)
    Hc = H_hat.conj()
    F = solve_square(Hc @ H_hat.T, Hc, cond_cap=cond_cap)
    return F / np.linalg.norm(F, axis=1, keepdims=True)


def hybrid_rows(F_R, F_B):
    """Effective downlink precoding rows ``(F_R F_B)^T`` for a hybrid design."""
    F_R = np.asarray(F_R)
    F_B = np.asarray(F_B)
    if F_R.shape[1] != F_B.shape[0]:
        raise ValueError(f"shape mismatch: F_R {F_R.shape}, F_B {F_B.shape}")
    return (F_R @ F_B).T


def spectral_efficiency(F, H, noise_var):
    """Sum rate with equal power split across the ``U`` streams.

    ``R = sum_u log2(1 + |f_u h_u|^2 / U / (sum_{i!=u} |f_i h_u|^2 / U + noise_var))``

    Parameters
    ----------
    F : ndarray, shape (U, N_A) or (..., U, N_A)
        Precoding rows.
    H : ndarray, shape (U, N_A) or broadcastable batch
        True channels, one user per row.
    noise_var : float
    """
    F = np.asarray(F)
    H = np.asarray(H)
    U = F.shape[-2]
    # P[..., u, i] = |f_i h_u|^2
    P = np.abs(H @ np.swapaxes(F, -1, -2)) ** 2
    signal = np.diagonal(P, axis1=-2, axis2=-1)
    interference = P.sum(axis=-1) - signal
    sinr = (signal / U) / (interference / U + noise_var)
    return np.sum(np.log2(1.0 + sinr), axis=-1)


def zf_rate(H_hat, H, noise_var):
    """Fully-digital ZF rate from an estimate, scored on the true channel."""
    try:
        F = fully_digital_zf(H_hat)
    except SingularSystemError:
        return np.nan
    return float(spectral_efficiency(F, H, noise_var))
