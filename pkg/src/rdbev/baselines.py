"""Reference predictors: random prior, range-energy projection, and an
angle-FFT beamforming oracle used to validate the simulator and to bound
achievable localization from the RX aperture.
"""

from __future__ import annotations

import math

import numpy as np

from .core import BevGridSpec, PredictionMap, RadarConfig, RdbevError, RdFrame, hfov_mask


class EmptyChirpError(RdbevError):
    """Requested chirp slice carries no energy."""


def random_prior(pos_frac: float, grid: BevGridSpec) -> PredictionMap:
    """Constant map at the empirical occupied fraction of the training split."""
    if not 0.0 <= pos_frac <= 1.0:
        raise ValueError(f"pos_frac must lie in [0, 1], got {pos_frac}")
    return PredictionMap(np.full(grid.shape, pos_frac, dtype=np.float32), grid)


def range_energy_profile(frame: RdFrame) -> np.ndarray:
    """Mean |RD| over chirps, antennas and Doppler, max-normalized to [0, 1].
    A zero tensor maps to an all-zero profile."""
    e = np.abs(frame.data).mean(axis=(0, 1, 3))
    peak = e.max()
    return e / peak if peak > 0 else e


def range_energy_projection(
    frame: RdFrame,
    radar: RadarConfig,
    grid: BevGridSpec,
    radar_offset: tuple[float, float] = (0.0, 0.0),
) -> PredictionMap:
    """Paint the 1D range-energy profile onto BEV cells by radial distance,
    assuming azimuthal symmetry; cells outside the HFOV get zero."""
    profile = range_energy_profile(frame)
    cx, cy = grid.center_grids()
    rng = np.hypot(cx - radar_offset[0], cy - radar_offset[1])
    r_bin = np.rint(rng / radar.range_resolution_m).astype(np.int64)
    inside = hfov_mask(grid, radar_offset, radar.hfov_deg, radar.max_range_m).bits
    inside &= r_bin < radar.num_range_bins
    probs = np.zeros(grid.shape, dtype=np.float32)
    probs[inside] = profile[r_bin[inside]].astype(np.float32)
    return PredictionMap(probs, grid)


def angle_grid(fft_size: int) -> np.ndarray:
    """Angle-bin coordinates u = sin(theta): bin k maps to -1 + 2k/fft_size."""
    return -1.0 + 2.0 * np.arange(fft_size) / fft_size


def beamform_oracle(
    frame: RdFrame, radar: RadarConfig, chirp: int, fft_size: int = 64
) -> np.ndarray:
    """Range-azimuth magnitude map (R, fft_size) via a zero-padded spatial FFT
    over the RX channels, max-projected over Doppler.

    Angle bins follow :func:`angle_grid`.  Raises EmptyChirpError when the
    selected chirp slice is identically zero.
    """
    if not 0 <= chirp < frame.data.shape[0]:
        raise ValueError(f"chirp index {chirp} out of range")
    sl = frame.data[chirp]  # (rx, R, D)
    if not sl.any():
        raise EmptyChirpError("empty chirp")
    spec = np.fft.fft(sl, n=fft_size, axis=0)
    spec = np.fft.fftshift(spec, axes=0)
    ra = np.abs(spec).max(axis=2)  # (fft_size, R)
    return ra.T.copy()  # (R, fft_size)


def ra_peak(ra: np.ndarray) -> tuple[int, int]:
    """(range_bin, angle_bin) of the map maximum; ties resolve toward the
    lower flat index."""
    idx = int(np.argmax(ra))
    return idx // ra.shape[1], idx % ra.shape[1]


def project_ra_to_bev(
    ra: np.ndarray,
    radar: RadarConfig,
    grid: BevGridSpec,
    radar_offset: tuple[float, float] = (0.0, 0.0),
) -> PredictionMap:
    """Sample the RA map at each cell's (range, azimuth) with nearest-bin
    lookup, normalized to [0, 1]; zero outside the HFOV."""
    fft_size = ra.shape[1]
    cx, cy = grid.center_grids()
    dx, dy = cx - radar_offset[0], cy - radar_offset[1]
    rng = np.hypot(dx, dy)
    u = np.sin(np.arctan2(dy, dx))
    r_bin = np.rint(rng / radar.range_resolution_m).astype(np.int64)
    u_bin = np.clip(np.rint((u + 1.0) * fft_size / 2.0).astype(np.int64), 0, fft_size - 1)
    inside = hfov_mask(grid, radar_offset, radar.hfov_deg, radar.max_range_m).bits
    inside &= r_bin < radar.num_range_bins
    vals = np.zeros(grid.shape, dtype=np.float64)
    vals[inside] = ra[r_bin[inside], u_bin[inside]]
    peak = vals.max()
    if peak > 0:
        vals /= peak
    return PredictionMap(vals.astype(np.float32), grid)


def beamform_prediction(
    frame: RdFrame,
    radar: RadarConfig,
    grid: BevGridSpec,
    chirp: int = 1,
    fft_size: int = 64,
    radar_offset: tuple[float, float] = (0.0, 0.0),
) -> PredictionMap:
    """Convenience: oracle RA map projected to BEV."""
    return project_ra_to_bev(beamform_oracle(frame, radar, chirp, fft_size), radar, grid, radar_offset)


def expected_angle_bin(theta_deg: float, fft_size: int = 64) -> int:
    """Angle bin nearest sin(theta) on the oracle's grid."""
    u = math.sin(math.radians(theta_deg))
    return int(round((u + 1.0) * fft_size / 2.0)) % fft_size
