"""Forward model: Scene -> complex per-antenna range-Doppler tensor, plus the
per-cell normalization and the chirp/structure ablation transforms.

The two chirp types carry the same RX channels but activate different TX
subsets; the multi-TX chirp is modeled as simultaneous coherent transmission
with zero relative TX phase, so an off-boresight target picks up an
azimuth-dependent transmit array factor relative to the single-TX chirp.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, RadarConfig, RdFrame, Scene, ValidationError


@dataclass(frozen=True)
class PropagationParams:
    """Amplitude law and point-spread behaviour of the synthetic front end.

    A target injects amplitude reflectivity / r**amplitude_exponent, spread
    over a separable Hann kernel covering 2*psf_halfwidth_bins + 1 bins in
    range and in Doppler.  Noise power is calibrated so that a unit
    reflectivity boresight target at ``reference_range_m`` meets the
    configured SNR on the single-TX chirp.
    """

    amplitude_exponent: float = 2.0
    psf_halfwidth_bins: int = 1
    reference_range_m: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude_exponent < 0:
            raise ConfigError("amplitude exponent must be >= 0")
        if self.psf_halfwidth_bins < 0:
            raise ConfigError("PSF halfwidth must be >= 0")
        if self.reference_range_m <= 0:
            raise ConfigError("reference range must be positive")


class ChirpMode(enum.Enum):
    A_ONLY = "a_only"
    B_ONLY = "b_only"
    AB = "ab"


def _psf_kernel(mu: float, halfwidth: int, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer bins and normalized Hann weights around fractional bin mu.
    halfwidth 0 degenerates to nearest-bin injection."""
    center = int(math.floor(mu + 0.5))
    bins = center + np.arange(-halfwidth, halfwidth + 1)
    w = np.cos(np.pi * (bins - mu) / (2.0 * (halfwidth + 1))) ** 2
    keep = (bins >= 0) & (bins < n_bins) & (w > 0)
    bins, w = bins[keep], w[keep]
    if w.size:
        w = w / w.sum()
    return bins, w


def tx_array_factor(radar: RadarConfig, chirp: int, sin_theta: float) -> complex:
    """Coherent sum of active TX steering phases for one chirp type."""
    k0 = 2.0 * np.pi / radar.wavelength_m
    return complex(
        sum(np.exp(1j * k0 * radar.tx_positions_m[t] * sin_theta) for t in radar.chirp_tx_sets[chirp])
    )


def simulate_rd(
    scene: Scene,
    radar: RadarConfig,
    prop: PropagationParams = PropagationParams(),
    rng: np.random.Generator | None = None,
) -> RdFrame:
    """Render the scene into a [chirp, rx, range, doppler] complex tensor.

    Each scatterer is a point target at its center.  Targets outside the HFOV
    or beyond the last range bin contribute nothing; a target at zero range is
    rejected (amplitude singularity).  Contributions sum coherently; circular
    complex Gaussian noise is added per cell unless ``radar.snr_db`` is None.
    """
    n_chirps = radar.num_chirps
    shape = (n_chirps, radar.num_rx, radar.num_range_bins, radar.num_doppler_bins)
    data = np.zeros(shape, dtype=np.complex128)

    k0 = 2.0 * np.pi / radar.wavelength_m
    dr = radar.range_resolution_m
    dv = radar.doppler_bin_width_mps
    half_hfov = math.radians(radar.hfov_deg / 2.0)
    rx_pos = np.asarray(radar.rx_positions_m)
    ox, oy = scene.radar_origin_offset

    for sc in scene.scatterers:
        dx, dy = sc.x - ox, sc.y - oy
        r = math.hypot(dx, dy)
        if r == 0.0:
            raise ValidationError("scatterer at zero range from the radar")
        theta = math.atan2(dy, dx)
        if abs(theta) > half_hfov or r >= radar.num_range_bins * dr:
            continue
        sin_t = math.sin(theta)
        v_radial = (sc.vx * dx + sc.vy * dy) / r  # positive = receding
        mu_r = r / dr
        mu_d = radar.num_doppler_bins / 2.0 + v_radial / dv
        r_bins, r_w = _psf_kernel(mu_r, prop.psf_halfwidth_bins, radar.num_range_bins)
        d_bins, d_w = _psf_kernel(mu_d, prop.psf_halfwidth_bins, radar.num_doppler_bins)
        if not r_bins.size or not d_bins.size:
            continue
        amp = sc.reflectivity / r**prop.amplitude_exponent
        rx_steer = np.exp(1j * k0 * rx_pos * sin_t)
        kernel = np.outer(r_w, d_w)
        for c in range(n_chirps):
            a = amp * tx_array_factor(radar, c, sin_t) * rx_steer  # (rx,)
            data[c][:, r_bins[:, None], d_bins[None, :]] += (
                a[:, None, None] * kernel[None, :, :]
            )

    if radar.snr_db is not None:
        if rng is None:
            rng = np.random.default_rng(prop.seed)
        ref_amp = 1.0 / prop.reference_range_m**prop.amplitude_exponent
        noise_power = ref_amp**2 * 10.0 ** (-radar.snr_db / 10.0)
        sigma = math.sqrt(noise_power / 2.0)
        data += rng.normal(scale=sigma, size=shape) + 1j * rng.normal(scale=sigma, size=shape)

    return RdFrame(data, radar.digest())


def normalize_rd(frame: RdFrame, eps: float = 1e-12) -> RdFrame:
    """Divide each RD cell's RX vector by sqrt(mean RX power + eps), per
    chirp.  The scale is a positive real per cell, so inter-RX phase
    differences are preserved exactly."""
    power = np.mean(np.abs(frame.data) ** 2, axis=1, keepdims=True)
    return RdFrame(frame.data / np.sqrt(power + eps), frame.config_digest)


def select_chirps(frame: RdFrame, mode: ChirpMode) -> RdFrame:
    """Zero out the non-selected chirp slice; shape is unchanged."""
    if mode is ChirpMode.AB:
        return RdFrame(frame.data.copy(), frame.config_digest)
    data = np.zeros_like(frame.data)
    keep = 0 if mode is ChirpMode.A_ONLY else 1
    if keep >= frame.data.shape[0]:
        raise ValidationError(f"frame has no chirp index {keep}")
    data[keep] = frame.data[keep]
    return RdFrame(data, frame.config_digest)


def collapse_dim(frame: RdFrame, dim: str) -> RdFrame:
    """Replace the chosen dimension by its complex mean, broadcast back, so
    the result has zero variance along that dimension."""
    axis = {"range": 2, "doppler": 3}.get(dim)
    if axis is None:
        raise ConfigError(f"collapse dim must be 'range' or 'doppler', got {dim!r}")
    mean = frame.data.mean(axis=axis, keepdims=True)
    return RdFrame(np.broadcast_to(mean, frame.data.shape).copy(), frame.config_digest)
