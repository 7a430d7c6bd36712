"""Occlusion-aware synthetic LiDAR: 2.5D ray casting against scatterer
footprints.  Geometry is planar; each return carries a scalar z so the
height-based ground filter downstream behaves like it does on real clouds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, PointCloud, Scene


@dataclass(frozen=True)
class LidarConfig:
    azimuth_step_deg: float = 0.2
    max_range_m: float = 80.0
    ground_point_spacing_m: float = 1.0
    returns_per_hit: int = 3
    ground_z_threshold_m: float = 0.3  # obstacle z is sampled strictly above this
    seed: int = 0

    def __post_init__(self) -> None:
        if self.azimuth_step_deg <= 0 or self.max_range_m <= 0:
            raise ConfigError("azimuth step and max range must be positive")
        if self.ground_point_spacing_m <= 0:
            raise ConfigError("ground point spacing must be positive")
        if self.returns_per_hit < 1:
            raise ConfigError("returns_per_hit must be >= 1")


def simulate_lidar(
    scene: Scene, cfg: LidarConfig = LidarConfig(), rng: np.random.Generator | None = None
) -> PointCloud:
    """Cast rays over 360 degrees from the LiDAR origin.

    Per ray, the first scatterer disc intersected emits ``returns_per_hit``
    obstacle points at the entry distance (z sampled uniformly between the
    ground threshold and the scatterer height); ground points (z = 0) are
    emitted every ``ground_point_spacing_m`` along the ray until the first
    hit, the ground extent, or max range.  Nothing is emitted beyond the
    first hit: hard occlusion.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_rays = int(round(360.0 / cfg.azimuth_step_deg))
    angles = np.deg2rad(-180.0 + cfg.azimuth_step_deg * np.arange(n_rays))
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (n, 2)

    hit_dist = np.full(n_rays, np.inf)
    hit_height = np.zeros(n_rays)
    if scene.scatterers:
        centers = np.array([[s.x, s.y] for s in scene.scatterers])  # (m, 2)
        radii = np.array([s.radius for s in scene.scatterers])
        heights = np.array([s.height for s in scene.scatterers])
        t_closest = dirs @ centers.T  # (n, m) projection of center onto ray
        d2 = (centers**2).sum(axis=1)[None, :] - t_closest**2
        inside = d2 <= radii[None, :] ** 2
        with np.errstate(invalid="ignore"):
            t_entry = t_closest - np.sqrt(np.maximum(radii[None, :] ** 2 - d2, 0.0))
        valid = inside & (t_entry > 0.0) & (t_entry <= cfg.max_range_m)
        t_entry = np.where(valid, t_entry, np.inf)
        nearest = np.argmin(t_entry, axis=1)
        hit_dist = t_entry[np.arange(n_rays), nearest]
        hit_height = heights[nearest]

    # ground points: k * spacing strictly before the first hit / extent
    limit = np.minimum(np.minimum(hit_dist, cfg.max_range_m), scene.ground_extent_m)
    n_ground = np.maximum(np.ceil(limit / cfg.ground_point_spacing_m) - 1, 0).astype(int)
    ground_chunks = []
    for ray in np.nonzero(n_ground > 0)[0]:
        d = cfg.ground_point_spacing_m * np.arange(1, n_ground[ray] + 1)
        ground_chunks.append(d[:, None] * dirs[ray][None, :])
    ground_xy = np.concatenate(ground_chunks, axis=0) if ground_chunks else np.zeros((0, 2))

    hit_rays = np.nonzero(np.isfinite(hit_dist))[0]
    k = cfg.returns_per_hit
    if hit_rays.size:
        xy = hit_dist[hit_rays, None] * dirs[hit_rays]  # (h, 2)
        obstacle_xy = np.repeat(xy, k, axis=0)
        z_lo = np.nextafter(cfg.ground_z_threshold_m, np.inf)
        z_hi = np.maximum(hit_height[hit_rays], z_lo + 1e-6)
        z = rng.uniform(np.repeat(z_lo, hit_rays.size * k), np.repeat(z_hi, k))
    else:
        obstacle_xy = np.zeros((0, 2))
        z = np.zeros(0)

    points = np.concatenate(
        [
            np.column_stack([ground_xy, np.zeros(len(ground_xy))]),
            np.column_stack([obstacle_xy, z]),
        ],
        axis=0,
    )
    ground_flags = np.concatenate(
        [np.ones(len(ground_xy), dtype=bool), np.zeros(len(obstacle_xy), dtype=bool)]
    )
    return PointCloud(points, ground_flags)
