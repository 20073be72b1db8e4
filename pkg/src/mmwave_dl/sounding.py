"""Uplink pilot sounding through random quantized-phase analog combiners.

Users send mutually orthogonal pilots ``n_slots`` times.  After the pilot
matrix is removed, slot ``k`` contributes ``(F^k)^T h_u + (F^k)^T n_k`` with
``n_k ~ CN(0, noise_var I)``.  The pilot matrix itself is never built: its
orthogonality makes the decorrelated model exact.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["PilotBlock", "SoundingRecord", "sample_pilot_block",
           "measurement_matrix", "simulate_uplink", "correlate"]


@dataclass
class PilotBlock:
    """Per-slot analog combiners, shape ``(n_slots, n_antennas, n_rf)``.

    Digital combiners are the identity, so ``F^k = F_R^k``.
    """

    analog: np.ndarray
    phase_levels: int

    @property
    def n_slots(self):
        return self.analog.shape[0]

    @property
    def n_antennas(self):
        return self.analog.shape[1]

    @property
    def n_rf(self):
        return self.analog.shape[2]

    @property
    def digital(self):
        return np.broadcast_to(np.eye(self.n_rf), (self.n_slots, self.n_rf, self.n_rf))

    @property
    def F(self):
        """Stacked sensing matrix ``[F^1, ..., F^K]`` of shape ``(N_A, N_R K)``."""
        per_slot = self.analog @ self.digital
        return np.concatenate(list(per_slot), axis=1)

    def digest(self):
        """Short hex digest identifying this block (used in dataset headers)."""
        data = np.ascontiguousarray(self.analog, dtype="<c16").tobytes()
        return hashlib.sha256(data).hexdigest()[:16]


@dataclass
class SoundingRecord:
    """Received pilots ``r`` and correlations ``c`` (one row per channel)."""

    r: np.ndarray
    phi: np.ndarray
    c: np.ndarray
    noise_var: float
    seed: object = None


def sample_pilot_block(cfg, rng):
    """Draw ``n_slots`` analog combiners with phases on the Q-point grid.

    Entries are ``exp(j 2 pi n / Q) / sqrt(N_A)`` with ``n`` uniform on
    ``{0, ..., Q-1}``, so every combiner column has unit norm.
    """
    Q = cfg.phase_levels
    n = rng.integers(0, Q, size=(cfg.n_slots, cfg.n_antennas, cfg.n_rf))
    analog = np.exp(2j * np.pi * n / Q) / np.sqrt(cfg.n_antennas)
    return PilotBlock(analog=analog, phase_levels=Q)


def measurement_matrix(block, dictionary):
    """``Phi = (N_A/G) F^T A^H`` with shape ``(N_R K, G)``."""
    F = block.F
    if F.shape[0] != dictionary.n_antennas:
        raise ValueError("pilot block and dictionary disagree on n_antennas")
    scale = dictionary.n_antennas / dictionary.grid_size
    return scale * (F.T @ dictionary.A.conj().T)


def correlate(phi, r):
    """Correlation ``Phi^H r``; ``r`` may hold one measurement vector per row."""
    phi = np.asarray(phi)
    r = np.asarray(r)
    if r.shape[-1] != phi.shape[0]:
        raise ValueError(f"r has length {r.shape[-1]}, Phi has {phi.shape[0]} rows")
    return r @ phi.conj()


def simulate_uplink(h, block, noise_var, rng, phi=None):
    """Received pilot vectors for one channel or a batch of channels.

    Parameters
    ----------
    h : ndarray, shape (N_A,) or (n, N_A)
    block : PilotBlock
    noise_var : float or ndarray, shape (n,)
        Per-antenna noise variance before combining; an array gives one
        variance per channel row.
    rng : numpy.random.Generator or None
        Required when ``noise_var > 0``.
    phi : ndarray, optional
        Measurement matrix; when given, correlations are filled in.

    Returns
    -------
    SoundingRecord
    """
    var = np.asarray(noise_var, dtype=float)
    if np.any(var < 0):
        raise ValueError("noise_var must be nonnegative")
    h = np.asarray(h, dtype=np.complex128)
    single = h.ndim == 1
    H = h[None, :] if single else h
    if var.ndim == 1 and len(var) != H.shape[0]:
        raise ValueError("need one noise variance per channel row")
    r = H @ block.F
    if np.any(var > 0):
        n, K, N_A = H.shape[0], block.n_slots, block.n_antennas
        scale = np.sqrt(var / 2.0).reshape(-1, 1, 1)
        noise = scale * (rng.standard_normal((n, K, N_A))
                         + 1j * rng.standard_normal((n, K, N_A)))
        per_slot = block.analog @ block.digital
        r = r + np.einsum("bkn,knr->bkr", noise, per_slot).reshape(n, -1)
    c = correlate(phi, r) if phi is not None else None
    if single:
        r = r[0]
        c = None if c is None else c[0]
    return SoundingRecord(r=r, phi=phi, c=c, noise_var=float(var) if var.ndim == 0 else var)
