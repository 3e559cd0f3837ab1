"""Single-cell uplink channel: path loss, shadowing, fading, interference, SINR.

All powers are linear mW internally; dB/dBm appear only at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_DISTANCE_M = 1.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_mw(dbm):
    return db_to_linear(dbm)


def dbm_to_watts(dbm):
    return db_to_linear(dbm) / 1000.0


@dataclass(frozen=True)
class ChannelParams:
    carrier_freq_ghz: float = 3.5
    bandwidth_hz: float = 20e6
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 7.0
    external_interference_dbm: float = -100.0
    cell_radius_m: float = 500.0
    rician_k_db: float = 10.0
    shadow_sigma_los_db: float = 4.0
    shadow_sigma_nlos_db: float = 7.8
    shadow_corr_dist_m: float = 10.0
    processing_gain: float = 127.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.processing_gain < 1:
            raise ValueError("processing_gain must be >= 1")
        if self.shadow_sigma_los_db < 0 or self.shadow_sigma_nlos_db < 0:
            raise ValueError("shadowing sigmas must be non-negative")
        if self.shadow_corr_dist_m <= 0:
            raise ValueError("shadow_corr_dist_m must be positive")

    @property
    def noise_dbm(self) -> float:
        return float(self.noise_psd_dbm_hz + 10.0 * np.log10(self.bandwidth_hz) + self.noise_figure_db)

    @property
    def noise_mw(self) -> float:
        return float(dbm_to_mw(self.noise_dbm))

    @property
    def external_interference_mw(self) -> float:
        return float(dbm_to_mw(self.external_interference_dbm))

    @property
    def processing_gain_db(self) -> float:
        return float(linear_to_db(self.processing_gain))


@dataclass
class LinkState:
    """Per-device link quantities; arrays are indexed by device id."""

    distance: np.ndarray
    is_los: np.ndarray
    shadowing_db: np.ndarray
    fading_gain: np.ndarray  # complex, unit mean power
    channel_gain: np.ndarray  # linear |h|^2


def path_loss_db(distance, freq_ghz: float, los):
    """Path loss in dB; distances below 1 m are clamped to 1 m."""
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE_M)
    f = np.log10(freq_ghz)
    pl_los = 32.4 + 20.0 * f + 20.0 * np.log10(d)
    pl_nlos = 35.3 + 22.0 * f + 21.3 * np.log10(d)
    out = np.where(los, pl_los, pl_nlos)
    return float(out) if out.ndim == 0 else out


def los_probability(distance):
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    decay = np.exp(-d / 36.0)
    p = np.minimum(18.0 / d, 1.0) * (1.0 - decay) + decay
    return float(p) if p.ndim == 0 else p


def sample_fading(rng: np.random.Generator, los, rician_k_db: float = 10.0, size=None):
    """Unit-mean-power complex fading: Rician for LoS, Rayleigh otherwise."""
    los = np.asarray(los, dtype=bool)
    shape = los.shape if size is None else size
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    if np.isinf(rician_k_db) and rician_k_db > 0:
        rician = np.ones(shape, dtype=complex)
    else:
        k = float(db_to_linear(rician_k_db))
        rician = np.sqrt(k / (k + 1.0)) + np.sqrt(1.0 / (k + 1.0)) * scatter
    return np.where(los, rician, scatter)


def sample_shadowing(positions, sigma, corr_dist: float, rng: np.random.Generator, jitter: float = 1e-10):
    """Spatially correlated log-normal shadowing (dB), one draw per call.

    Covariance is ``sigma_i sigma_j exp(-d_ij / corr_dist)``; ``sigma`` may be a
    scalar or one value per device. Realized through the symmetric matrix
    square root so co-located devices get identical values.
    """
    if corr_dist <= 0:
        raise ValueError("corr_dist must be positive")
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = pos.shape[0]
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    cov = np.outer(sig, sig) * np.exp(-dist / corr_dist)
    w, v = np.linalg.eigh(cov)
    scale = max(float(np.max(np.abs(w))), 1.0)
    if w.min() < -jitter * scale * n:
        raise ValueError(f"shadowing covariance not PSD (min eigenvalue {w.min():.3e})")
    # zero out round-off eigenvalues; sqrt would amplify them to ~1e-8
    w = np.where(w > 1e-12 * scale * n, w, 0.0)
    root = (v * np.sqrt(w)) @ v.T
    return root @ rng.standard_normal(n)


def compute_channel_gain(path_loss, shadowing_db, fading):
    """Linear |h|^2 = 10^(-(PL + X)/10) * |g|^2."""
    g2 = np.abs(np.asarray(fading)) ** 2
    return db_to_linear(-(np.asarray(path_loss) + np.asarray(shadowing_db))) * g2


def compute_interference(codes, active, powers_mw, gains, rho, beta=None):
    """Multi-user interference I_i in mW for every device.

    ``I_i = sum_{j != i, j active} rho[a_i, a_j] * P_j |h_j|^2 * beta[i, j]``.
    Values for inactive receivers are computed the same way; callers mask them.
    """
    codes = np.asarray(codes)
    rho = np.asarray(rho)
    if codes.size and (codes.min() < 0 or codes.max() >= rho.shape[0]):
        raise ValueError(f"code index out of range [0, {rho.shape[0]})")
    rx = np.asarray(powers_mw, dtype=float) * np.asarray(gains, dtype=float)
    rx = np.where(np.asarray(active, dtype=bool), rx, 0.0)
    coupling = rho[codes[:, None], codes[None, :]]
    if beta is not None:
        coupling = coupling * beta
    np.fill_diagonal(coupling, 0.0)
    return coupling @ rx


def compute_sinr(active, powers_mw, gains, interference_mw, params: ChannelParams):
    """Linear SINR with the processing gain applied to the desired signal; 0 when idle."""
    signal = params.processing_gain * np.asarray(powers_mw) * np.asarray(gains)
    denom = params.noise_mw + np.asarray(interference_mw) + params.external_interference_mw
    return np.where(np.asarray(active, dtype=bool), signal / denom, 0.0)
