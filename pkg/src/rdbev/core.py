"""Core domain types: sensor/grid configuration, BEV geometry, frame records.

Conventions used throughout the toolkit:
  * World frame = LiDAR frame, x forward (boresight), y lateral (left positive).
  * BEV grid rows index x (forward), columns index y (lateral), cells are
    half-open squares [lo, lo + res).
  * Azimuth is measured from the +x axis, positive toward +y, in degrees.
All types are immutable after construction; operations are pure functions.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class RdbevError(Exception):
    """Base class for toolkit errors."""


class ConfigError(RdbevError):
    """Invalid configuration value or config file."""


class GridMismatchError(RdbevError):
    """Arrays or masks defined on different BEV grids were combined."""


class ValidationError(RdbevError):
    """Inputs violate a documented precondition (id mismatches etc.)."""


@dataclass(frozen=True)
class RadarConfig:
    """FMCW MIMO front-end parameters for a 2-chirp transmit scheme.

    The antenna is a horizontal ULA: RX elements at half-wavelength pitch,
    TX elements at ``num_rx`` half-wavelengths so that TX+RX position sums
    fill a ``num_tx * num_rx`` element virtual array.  ``chirp_tx_sets``
    lists, per chirp type, which TX indices transmit simultaneously.
    """

    carrier_freq_hz: float = 76.5e9
    num_tx: int = 6
    num_rx: int = 8
    hfov_deg: float = 64.0
    num_range_bins: int = 200
    range_resolution_m: float = 0.33
    num_doppler_bins: int = 128
    max_unambiguous_speed_mps: float = 25.0
    max_range_m: float = 65.0
    chirp_tx_sets: tuple[tuple[int, ...], ...] = ((0,), (0, 1, 2, 3, 4, 5))
    snr_db: float | None = 20.0
    tx_positions_m: tuple[float, ...] = field(default=())
    rx_positions_m: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if min(self.num_range_bins, self.num_doppler_bins, self.num_rx, self.num_tx) <= 0:
            raise ConfigError("antenna and bin counts must be positive")
        if not 0.0 < self.hfov_deg < 180.0:
            raise ConfigError(f"hfov must lie in (0, 180) deg, got {self.hfov_deg}")
        if self.range_resolution_m <= 0 or self.max_range_m <= 0:
            raise ConfigError("range resolution and max range must be positive")
        if self.max_unambiguous_speed_mps <= 0:
            raise ConfigError("max unambiguous speed must be positive")
        if not self.chirp_tx_sets:
            raise ConfigError("at least one chirp type required")
        for txs in self.chirp_tx_sets:
            if not txs:
                raise ConfigError("every chirp needs a nonempty TX set")
            if any(t < 0 or t >= self.num_tx for t in txs):
                raise ConfigError(f"TX index out of range in chirp set {txs}")
        half_wl = self.wavelength_m / 2.0
        if not self.rx_positions_m:
            object.__setattr__(
                self, "rx_positions_m", tuple(j * half_wl for j in range(self.num_rx))
            )
        if not self.tx_positions_m:
            object.__setattr__(
                self, "tx_positions_m", tuple(k * self.num_rx * half_wl for k in range(self.num_tx))
            )
        if len(self.rx_positions_m) != self.num_rx or len(self.tx_positions_m) != self.num_tx:
            raise ConfigError("antenna position list lengths disagree with element counts")
        for j in range(1, self.num_rx):
            if not math.isclose(
                self.rx_positions_m[j] - self.rx_positions_m[j - 1], half_wl, rel_tol=1e-9
            ):
                raise ConfigError("RX elements must sit at half-wavelength pitch")
        for k in range(1, self.num_tx):
            if not math.isclose(
                self.tx_positions_m[k] - self.tx_positions_m[k - 1],
                self.num_rx * half_wl,
                rel_tol=1e-9,
            ):
                raise ConfigError("TX pitch must be num_rx half-wavelengths")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def num_chirps(self) -> int:
        return len(self.chirp_tx_sets)

    @property
    def doppler_bin_width_mps(self) -> float:
        return 2.0 * self.max_unambiguous_speed_mps / self.num_doppler_bins

    def canonical_text(self) -> str:
        parts = [
            f"carrier_freq_hz={self.carrier_freq_hz!r}",
            f"num_tx={self.num_tx}",
            f"num_rx={self.num_rx}",
            f"hfov_deg={self.hfov_deg!r}",
            f"num_range_bins={self.num_range_bins}",
            f"range_resolution_m={self.range_resolution_m!r}",
            f"num_doppler_bins={self.num_doppler_bins}",
            f"max_unambiguous_speed_mps={self.max_unambiguous_speed_mps!r}",
            f"max_range_m={self.max_range_m!r}",
            f"chirp_tx_sets={self.chirp_tx_sets!r}",
            f"snr_db={self.snr_db!r}",
        ]
        return ";".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class BevGridSpec:
    """Discretized BEV plane. Cell (i, j) covers
    [x_min + i*res, x_min + (i+1)*res) x [y_min + j*res, y_min + (j+1)*res).
    """

    resolution: float = 0.5
    x_range: tuple[float, float] = (0.0, 60.0)
    y_range: tuple[float, float] = (-38.0, 38.0)

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ConfigError("grid resolution must be positive")
        if self.x_range[1] <= self.x_range[0] or self.y_range[1] <= self.y_range[0]:
            raise ConfigError("grid extents must be increasing")

    @property
    def height(self) -> int:
        # nearest cell count; extents that are not an exact multiple of the
        # resolution (e.g. 0.35 m) are tiled with H*res ~= extent
        return int(round((self.x_range[1] - self.x_range[0]) / self.resolution))

    @property
    def width(self) -> int:
        return int(round((self.y_range[1] - self.y_range[0]) / self.resolution))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.x_range[0] + (i + 0.5) * self.resolution,
            self.y_range[0] + (j + 0.5) * self.resolution,
        )

    def center_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """(H, W) arrays of cell-center x and y coordinates."""
        xs = self.x_range[0] + (np.arange(self.height) + 0.5) * self.resolution
        ys = self.y_range[0] + (np.arange(self.width) + 0.5) * self.resolution
        return np.meshgrid(xs, ys, indexing="ij")

    def header_text(self) -> str:
        return (
            f"{self.resolution!r} {self.x_range[0]!r} {self.x_range[1]!r} "
            f"{self.y_range[0]!r} {self.y_range[1]!r} {self.height} {self.width}"
        )


def world_to_cell(x: float, y: float, grid: BevGridSpec) -> tuple[int, int] | None:
    """Cell index containing (x, y), or None when outside the grid extent."""
    i = math.floor((x - grid.x_range[0]) / grid.resolution)
    j = math.floor((y - grid.y_range[0]) / grid.resolution)
    if 0 <= i < grid.height and 0 <= j < grid.width:
        return (i, j)
    return None


def world_to_cell_array(
    x: np.ndarray, y: np.ndarray, grid: BevGridSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized world_to_cell: returns (i, j, valid). Indices are only
    meaningful where valid is True."""
    i = np.floor((np.asarray(x, dtype=np.float64) - grid.x_range[0]) / grid.resolution).astype(
        np.int64
    )
    j = np.floor((np.asarray(y, dtype=np.float64) - grid.y_range[0]) / grid.resolution).astype(
        np.int64
    )
    valid = (i >= 0) & (i < grid.height) & (j >= 0) & (j < grid.width)
    return i, j, valid


@dataclass(frozen=True)
class BevMask:
    """Boolean mask on a BEV grid."""

    bits: np.ndarray
    grid: BevGridSpec

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        object.__setattr__(self, "bits", bits)
        if bits.shape != self.grid.shape:
            raise GridMismatchError(f"mask shape {bits.shape} != grid {self.grid.shape}")

    def count(self) -> int:
        return int(self.bits.sum())


def require_same_grid(*items) -> BevGridSpec:
    grids = [it.grid for it in items]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridMismatchError("operands are defined on different BEV grids")
    return grids[0]


@dataclass(frozen=True)
class BevLabel:
    """Ternary BEV ground truth: occupied / free within the observable
    region, unknown elsewhere.  Every occupied cell is observable."""

    occupancy: np.ndarray
    observable: BevMask

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancy, dtype=bool)
        object.__setattr__(self, "occupancy", occ)
        if occ.shape != self.observable.grid.shape:
            raise GridMismatchError("occupancy shape does not match the grid")
        if np.any(occ & ~self.observable.bits):
            raise ValidationError("occupied cells must be observable")

    @property
    def grid(self) -> BevGridSpec:
        return self.observable.grid


@dataclass(frozen=True)
class PredictionMap:
    """Per-cell occupancy probabilities in [0, 1]."""

    probs: np.ndarray
    grid: BevGridSpec

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float32)
        object.__setattr__(self, "probs", probs)
        if probs.shape != self.grid.shape:
            raise GridMismatchError(f"prediction shape {probs.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("prediction probabilities must be finite")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ValidationError("prediction probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class Scatterer:
    """Point reflector with a circular footprint (footprint is used by the
    LiDAR model only; the radar model treats the center as a point target)."""

    x: float
    y: float
    height: float = 1.5
    radius: float = 0.5
    reflectivity: float = 1.0
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ConfigError("scatterer radius must be positive")
        if self.reflectivity <= 0:
            raise ConfigError("scatterer reflectivity must be positive")


@dataclass(frozen=True)
class Scene:
    """Parametric world: scatterers in the LiDAR frame plus the radar mount
    offset (radar position relative to the LiDAR origin)."""

    scatterers: tuple[Scatterer, ...] = ()
    ground_extent_m: float = 80.0
    radar_origin_offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class PointCloud:
    """LiDAR returns: (N, 3) float32 xyz plus a per-point ground flag."""

    points: np.ndarray
    ground: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 3)
        gnd = np.asarray(self.ground, dtype=bool).reshape(-1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ground", gnd)
        if pts.shape[0] != gnd.shape[0]:
            raise ValidationError("points and ground flags disagree in length")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class RdFrame:
    """Complex pre-beamforming measurement tensor, indexed
    [chirp, rx, range, doppler].  Kept complex128 in memory; the container
    stores interleaved re/im float32."""

    data: np.ndarray
    config_digest: str

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if data.ndim != 4:
            raise ValidationError(f"RD tensor must be 4-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("RD tensor entries must be finite")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class FrameRecord:
    """One synchronized frame: RD tensor, BEV label, and the mask algebra
    (sup = hfov AND observable, enforced at construction)."""

    frame_id: int
    sequence_id: int
    rd: RdFrame
    label: BevLabel
    hfov: BevMask
    sup: BevMask
    cloud: PointCloud | None = None
    prediction: PredictionMap | None = None

    def __post_init__(self) -> None:
        grid = require_same_grid(self.label.observable, self.hfov, self.sup)
        if self.prediction is not None and self.prediction.grid != grid:
            raise GridMismatchError("prediction grid differs from the label grid")
        expected = self.hfov.bits & self.label.observable.bits
        if not np.array_equal(self.sup.bits, expected):
            raise ValidationError("sup mask must equal hfov AND observable")

    @property
    def grid(self) -> BevGridSpec:
        return self.label.grid

    def unknown_bits(self) -> np.ndarray:
        """Cells inside the HFOV that the LiDAR never observed."""
        return self.hfov.bits & ~self.label.observable.bits


def hfov_mask(
    grid: BevGridSpec,
    radar_offset: tuple[float, float] = (0.0, 0.0),
    hfov_deg: float = 64.0,
    max_range_m: float = 65.0,
) -> BevMask:
    """Cells whose center lies within +-hfov/2 of boresight and within
    max_range_m of the radar origin."""
    if not 0.0 < hfov_deg < 180.0:
        raise ConfigError("hfov must lie in (0, 180) deg")
    cx, cy = grid.center_grids()
    dx = cx - radar_offset[0]
    dy = cy - radar_offset[1]
    rng = np.hypot(dx, dy)
    az = np.degrees(np.arctan2(dy, dx))
    bits = (np.abs(az) <= hfov_deg / 2.0) & (rng <= max_range_m)
    return BevMask(bits, grid)


def split_sequences(
    frame_ids: list[int],
    sequence_ids: list[int],
    ratio: float = 0.7,
    seed: int = 0,
) -> tuple[list[int], list[int]]:
    """Assign whole sequences to train/val so the train frame fraction lands
    as close to ``ratio`` as greedy largest-first packing allows.

    Returns sorted (train_frame_ids, val_frame_ids).  Deterministic for a
    given seed; the seed only shuffles the processing order of equally
    sized sequences.
    """
    if len(frame_ids) != len(sequence_ids):
        raise ValidationError("frame and sequence id lists disagree in length")
    if not 0.0 < ratio < 1.0:
        raise ConfigError("split ratio must lie in (0, 1)")
    by_seq: dict[int, list[int]] = {}
    for fid, sid in zip(frame_ids, sequence_ids):
        by_seq.setdefault(sid, []).append(fid)
    if len(by_seq) < 2:
        raise ValidationError(f"need at least 2 sequences to split, got {len(by_seq)}")

    total = len(frame_ids)
    rng = np.random.default_rng(seed)
    seqs = sorted(by_seq)
    rng.shuffle(seqs)
    seqs.sort(key=lambda s: -len(by_seq[s]))  # stable: shuffled order breaks size ties

    train_target = ratio * total
    val_target = (1.0 - ratio) * total
    train_ids: list[int] = []
    val_ids: list[int] = []
    train_got = val_got = 0
    for sid in seqs:
        frames = by_seq[sid]
        # assign to the split with the larger remaining deficit; ties to train
        if train_target - train_got >= val_target - val_got:
            train_ids.extend(frames)
            train_got += len(frames)
        else:
            val_ids.extend(frames)
            val_got += len(frames)
    return sorted(train_ids), sorted(val_ids)
