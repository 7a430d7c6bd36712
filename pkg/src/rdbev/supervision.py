"""BEV occupancy labels and the visibility-aware supervision mask.

The observability mask is built by 2D ray casting from the LiDAR origin over
discretized azimuth bins: within a bin, the nearest non-ground return acts as
an occluder; failing that, the farthest return of any kind bounds the free
extent.  Cells are marked by marching the bin's central ray in steps of half
a cell, endpoint inclusive, so the occluding cell itself stays observable.
"""

from __future__ import annotations

import numpy as np

from .core import (
    BevGridSpec,
    BevLabel,
    BevMask,
    GridMismatchError,
    PointCloud,
    require_same_grid,
    world_to_cell_array,
)


def remove_ground(pc: PointCloud, z_min: float = 0.3) -> PointCloud:
    """Keep points with z strictly above z_min.  Purely height-based: the
    per-point ground flags are ignored."""
    keep = pc.points[:, 2] > z_min
    return PointCloud(pc.points[keep], pc.ground[keep])


def occupancy_from_points(pc_nonground: PointCloud, grid: BevGridSpec) -> np.ndarray:
    """Boolean (H, W): cells containing at least one point."""
    occ = np.zeros(grid.shape, dtype=bool)
    if len(pc_nonground):
        i, j, valid = world_to_cell_array(
            pc_nonground.points[:, 0], pc_nonground.points[:, 1], grid
        )
        occ[i[valid], j[valid]] = True
    return occ


def _bin_endpoints(
    pc_all: PointCloud, pc_nonground: PointCloud, azimuth_res_deg: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per azimuth bin: marching endpoint (nan = no returns) and bin-center
    angles in radians.  Bins partition [-180, 180) with centers at
    k * azimuth_res_deg; returns are assigned by floor of (az/res + 1/2)."""
    n_bins = int(round(360.0 / azimuth_res_deg))

    def bin_of(pts: np.ndarray) -> np.ndarray:
        az = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
        return np.floor(az / azimuth_res_deg + 0.5).astype(np.int64) % n_bins

    endpoint = np.full(n_bins, np.nan)
    if len(pc_all):
        rng_all = np.hypot(pc_all.points[:, 0], pc_all.points[:, 1]).astype(np.float64)
        far = np.full(n_bins, -np.inf)
        np.maximum.at(far, bin_of(pc_all.points), rng_all)
        has_any = np.isfinite(far)
        endpoint[has_any] = far[has_any]
    if len(pc_nonground):
        rng_ng = np.hypot(pc_nonground.points[:, 0], pc_nonground.points[:, 1]).astype(np.float64)
        near = np.full(n_bins, np.inf)
        np.minimum.at(near, bin_of(pc_nonground.points), rng_ng)
        has_ng = np.isfinite(near)
        endpoint[has_ng] = near[has_ng]

    centers = np.deg2rad(np.arange(n_bins) * azimuth_res_deg)
    centers = np.where(centers >= np.pi, centers - 2 * np.pi, centers)
    return endpoint, centers


def observability_mask(
    pc_all: PointCloud,
    pc_nonground: PointCloud,
    grid: BevGridSpec,
    azimuth_res_deg: float = 0.05,
) -> BevMask:
    """Cells a LiDAR ray traversed (free) or terminated in (occluder)."""
    endpoint, centers = _bin_endpoints(pc_all, pc_nonground, azimuth_res_deg)
    bits = np.zeros(grid.shape, dtype=bool)
    live = np.nonzero(np.isfinite(endpoint))[0]
    if not live.size:
        return BevMask(bits, grid)

    step = grid.resolution / 2.0
    ends = endpoint[live]
    cos_c, sin_c = np.cos(centers[live]), np.sin(centers[live])
    n_steps = int(np.floor(ends.max() / step)) + 1
    # chunk over the step axis to bound memory on fine azimuth grids
    chunk = max(1, int(4_000_000 // max(live.size, 1)))
    for start in range(0, n_steps, chunk):
        d = step * np.arange(start, min(start + chunk, n_steps), dtype=np.float64)
        use = d[None, :] <= ends[:, None]
        x = (cos_c[:, None] * d[None, :])[use]
        y = (sin_c[:, None] * d[None, :])[use]
        i, j, valid = world_to_cell_array(x, y, grid)
        bits[i[valid], j[valid]] = True
    # endpoint-inclusive: sample the exact endpoint of every live bin
    i, j, valid = world_to_cell_array(cos_c * ends, sin_c * ends, grid)
    bits[i[valid], j[valid]] = True
    return BevMask(bits, grid)


def bin_march_cells(
    endpoint: float, center_rad: float, grid: BevGridSpec
) -> list[tuple[int, int]]:
    """Ordered cells the march visits for one azimuth bin (near to far,
    endpoint inclusive).  Exposed for invariant checks."""
    step = grid.resolution / 2.0
    d = np.arange(0.0, endpoint + step / 2.0, step)
    d = np.append(d[d <= endpoint], endpoint)
    x, y = np.cos(center_rad) * d, np.sin(center_rad) * d
    i, j, valid = world_to_cell_array(x, y, grid)
    cells: list[tuple[int, int]] = []
    for ii, jj, ok in zip(i, j, valid):
        if ok and (not cells or cells[-1] != (ii, jj)):
            cells.append((int(ii), int(jj)))
    return cells


def build_supervision(
    occupancy_raw: np.ndarray, observable: BevMask, hfov: BevMask
) -> tuple[BevLabel, BevMask, BevMask]:
    """Combine the label components into (label, sup_mask, unknown_mask).

    Occupancy is restricted to observable cells; sup = hfov AND observable;
    unknown = hfov AND NOT observable.  Cells outside the HFOV belong to
    neither mask.
    """
    grid = require_same_grid(observable, hfov)
    occ = np.asarray(occupancy_raw, dtype=bool)
    if occ.shape != grid.shape:
        raise GridMismatchError(f"occupancy shape {occ.shape} != grid {grid.shape}")
    label = BevLabel(occ & observable.bits, observable)
    sup = BevMask(hfov.bits & observable.bits, grid)
    unknown = BevMask(hfov.bits & ~observable.bits, grid)
    return label, sup, unknown
