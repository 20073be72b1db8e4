"""Saleh-Valenzuela multipath channels and the beamspace dictionary.

The base station has a half-wavelength ULA with ``n_antennas`` elements, so a
path arriving at physical angle ``aoa`` has spatial frequency
``theta = sin(aoa)`` and array response ``steering_vector(n, theta)``.
"""

from dataclasses import dataclass, field, asdict, replace

import numpy as np

__all__ = ["SystemConfig", "ChannelPath", "UserChannel", "Dictionary",
           "BeamspaceChannel", "steering_vector", "steering_matrix",
           "sample_channels", "sample_user_channel", "build_dictionary",
           "to_beamspace", "from_beamspace", "channel_from_paths"]


@dataclass(frozen=True)
class SystemConfig:
    """Physical-layer parameters of one multi-user mmWave link.

    Defaults reproduce the simulation setup of the reference experiments
    (64 antennas, 4 RF chains, 3 users, 128-point grid, 8 pilot slots,
    4-bit phase shifters, two paths with gain variances 1 and 0.5).
    """

    n_antennas: int = 64
    n_rf: int = 4
    n_users: int = 3
    grid_size: int = 128
    n_slots: int = 8
    phase_bits: int = 4
    aq_sharpness: float = 100.0
    sparsity: int = 6
    n_paths: int = 2
    noise_var: float = 0.1
    path_gain_vars: tuple = (1.0, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "path_gain_vars",
                           tuple(float(v) for v in self.path_gain_vars))
        self.validate()

    @property
    def phase_levels(self):
        return 2 ** self.phase_bits

    @property
    def n_measurements(self):
        return self.n_rf * self.n_slots

    def validate(self):
        counts = dict(n_antennas=self.n_antennas, n_rf=self.n_rf,
                      n_users=self.n_users, grid_size=self.grid_size,
                      n_slots=self.n_slots, phase_bits=self.phase_bits,
                      sparsity=self.sparsity, n_paths=self.n_paths)
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if self.n_users > self.n_rf:
            raise ValueError("need n_users <= n_rf")
        if self.n_antennas <= self.n_rf * self.n_slots:
            raise ValueError("need n_antennas > n_rf * n_slots")
        if self.grid_size < self.n_antennas:
            raise ValueError("need grid_size >= n_antennas")
        if self.sparsity < self.n_paths:
            raise ValueError("need sparsity >= n_paths")
        if len(self.path_gain_vars) != self.n_paths:
            raise ValueError("path_gain_vars must have one entry per path")
        if any(v <= 0 for v in self.path_gain_vars):
            raise ValueError("path gain variances must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if self.aq_sharpness <= 0:
            raise ValueError("aq_sharpness must be positive")

    def with_snr(self, snr_db):
        """Copy with ``noise_var = 10**(-snr_db/10)`` (unit-power symbols)."""
        return replace(self, noise_var=float(10.0 ** (-snr_db / 10.0)))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["path_gain_vars"] = list(self.path_gain_vars)
        return d


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    aoa: float

    @property
    def theta(self):
        return float(np.sin(self.aoa))


@dataclass
class UserChannel:
    paths: list
    h: np.ndarray


@dataclass
class Dictionary:
    """Oversampled steering-vector dictionary.

    ``A`` is ``grid_size x n_antennas``; row ``t`` is the conjugate transpose
    of the steering vector at grid angle ``grid[t]``, so
    ``A^H A = (grid_size / n_antennas) I``.
    """

    grid: np.ndarray
    A: np.ndarray

    @property
    def n_antennas(self):
        return self.A.shape[1]

    @property
    def grid_size(self):
        return self.A.shape[0]


@dataclass
class BeamspaceChannel:
    hb: np.ndarray
    amplitude: np.ndarray = field(init=False)

    def __post_init__(self):
        self.amplitude = np.abs(self.hb)


def steering_vector(n, theta):
    """Unit-norm ULA response ``exp(j*pi*theta*k)/sqrt(n)``, k = 0..n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return np.exp(1j * np.pi * theta * k) / np.sqrt(n)


def steering_matrix(n, thetas):
    """Steering vectors for every angle in ``thetas`` stacked as columns."""
    thetas = np.asarray(thetas, dtype=float)
    k = np.arange(n)
    return np.exp(1j * np.pi * np.multiply.outer(k, thetas)) / np.sqrt(n)


def channel_from_paths(n_antennas, gains, thetas):
    """Assemble ``sqrt(N/L) * sum_i g_i alpha(N, theta_i)``.

    ``gains`` and ``thetas`` have shape ``(..., L)``; the result has shape
    ``(..., n_antennas)``.
    """
    gains = np.asarray(gains, dtype=np.complex128)
    thetas = np.asarray(thetas, dtype=float)
    n_paths = gains.shape[-1]
    k = np.arange(n_antennas)
    resp = np.exp(1j * np.pi * thetas[..., None] * k) / np.sqrt(n_antennas)
    return np.sqrt(n_antennas / n_paths) * np.einsum("...l,...lk->...k", gains, resp)


def _grid_indices(G, L, min_sep, rng):
    # rejection sampling of L distinct indices, pairwise cyclic distance >= min_sep
    while True:
        idx = rng.choice(G, size=L, replace=False)
        diff = np.abs(idx[:, None] - idx[None, :])
        dist = np.minimum(diff, G - diff)[np.triu_indices(L, 1)]
        if L == 1 or dist.min() >= min_sep:
            return idx


def sample_channels(cfg, n, rng, grid_aligned=False, min_separation=None):
    """Draw ``n`` independent user channels.

    Parameters
    ----------
    cfg : SystemConfig
    n : int
        Number of channels.
    rng : numpy.random.Generator
    grid_aligned : bool
        If True, every path's ``theta`` is placed exactly on a dictionary
        grid point instead of ``sin`` of a uniform AoA.
    min_separation : int, optional
        Grid-aligned mode only: minimum cyclic distance between the grid
        indices of one channel's paths.  Defaults to
        ``grid_size // n_antennas`` (one beamwidth), since paths on adjacent
        points of an oversampled grid cannot be told apart.

    Returns
    -------
    h : ndarray, shape (n, n_antennas)
    gains : ndarray, shape (n, n_paths)
    aoas : ndarray, shape (n, n_paths)
    """
    L = cfg.n_paths
    std = np.sqrt(np.asarray(cfg.path_gain_vars) / 2.0)
    gains = std * (rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L)))
    if grid_aligned:
        G = cfg.grid_size
        sep = max(1, G // cfg.n_antennas) if min_separation is None else int(min_separation)
        if L * sep > G:
            raise ValueError("grid too small for the requested path separation")
        idx = np.stack([_grid_indices(G, L, sep, rng) for _ in range(n)])
        thetas = -1.0 + 2.0 * idx / G
        aoas = np.arcsin(thetas)
    else:
        aoas = rng.uniform(-np.pi, np.pi, size=(n, L))
        thetas = np.sin(aoas)
    return channel_from_paths(cfg.n_antennas, gains, thetas), gains, aoas


def sample_user_channel(cfg, rng, grid_aligned=False, min_separation=None):
    """Draw one user's channel as a :class:`UserChannel`."""
    h, gains, aoas = sample_channels(cfg, 1, rng, grid_aligned=grid_aligned,
                                     min_separation=min_separation)
    paths = [ChannelPath(complex(g), float(a)) for g, a in zip(gains[0], aoas[0])]
    return UserChannel(paths=paths, h=h[0])


def build_dictionary(n_antennas, grid_size):
    """Uniform grid ``-1 + 2 t / G`` (t = 0..G-1) and its dictionary matrix."""
    if grid_size < n_antennas:
        raise ValueError("grid_size must be >= n_antennas")
    grid = -1.0 + 2.0 * np.arange(grid_size) / grid_size
    A = steering_matrix(n_antennas, grid).conj().T
    return Dictionary(grid=grid, A=A)


def to_beamspace(h, dictionary):
    """Beamspace representation ``A h``; accepts a vector or rows of vectors."""
    h = h.h if isinstance(h, UserChannel) else np.asarray(h)
    if h.shape[-1] != dictionary.n_antennas:
        raise ValueError(f"channel length {h.shape[-1]} != {dictionary.n_antennas}")
    return BeamspaceChannel(h @ dictionary.A.T)


def from_beamspace(hb, dictionary):
    """Antenna-space channel ``(N_A/G) A^H hb`` (rows allowed)."""
    hb = np.asarray(hb)
    if hb.shape[-1] != dictionary.grid_size:
        raise ValueError(f"beamspace length {hb.shape[-1]} != {dictionary.grid_size}")
    scale = dictionary.n_antennas / dictionary.grid_size
    return scale * (hb @ dictionary.A.conj())
