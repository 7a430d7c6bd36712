import numpy as np
import pytest

from rdbev.core import BevGridSpec, BevMask, GridMismatchError, PointCloud, hfov_mask, world_to_cell
from rdbev.lidar import LidarConfig, simulate_lidar
from rdbev.core import Scatterer, Scene
from rdbev.supervision import (
    _bin_endpoints,
    bin_march_cells,
    build_supervision,
    observability_mask,
    occupancy_from_points,
    remove_ground,
)

GRID = BevGridSpec()


def cloud(rows):
    pts = np.array([r[:3] for r in rows], dtype=np.float32).reshape(-1, 3)
    gnd = np.array([r[3] for r in rows], dtype=bool) if rows else np.zeros(0, bool)
    return PointCloud(pts, gnd)


class TestRemoveGround:
    def test_all_ground_removed(self):
        pc = cloud([(1.0, 0.0, 0.0, True), (2.0, 0.0, 0.0, True)])
        assert len(remove_ground(pc, 0.3)) == 0

    def test_mixed_cloud_counts(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(0.0, 1.0, 200)
        pc = PointCloud(np.column_stack([rng.uniform(1, 5, 200), rng.uniform(-2, 2, 200), z]), z < 0.1)
        out = remove_ground(pc, 0.3)
        assert len(out) == int((z > 0.3).sum())

    def test_boundary_is_strict(self):
        pc = cloud([(1.0, 0.0, 0.3, False)])
        assert len(remove_ground(pc, 0.3)) == 0

    def test_flags_ignored(self):
        pc = cloud([(1.0, 0.0, 0.5, True)])  # ground-flagged but high
        assert len(remove_ground(pc, 0.3)) == 1


class TestOccupancy:
    def test_single_point_single_cell(self):
        pc = cloud([(10.1, 0.2, 1.0, False)])
        occ = occupancy_from_points(pc, GRID)
        assert occ.sum() == 1
        assert occ[20, 76]

    def test_empty_cloud_all_false(self):
        assert not occupancy_from_points(cloud([]), GRID).any()

    def test_idempotent_same_cell(self):
        pc = cloud([(10.1, 0.2, 1.0, False), (10.2, 0.15, 0.7, False)])
        assert occupancy_from_points(pc, GRID).sum() == 1


class TestObservability:
    def test_occluder_blocks_beyond(self):
        rows = [(float(d), 0.0, 0.0, True) for d in range(1, 31)]
        rows.append((10.0, 0.0, 1.0, False))  # non-ground return at 10 m
        pc_all = cloud(rows)
        pc_ng = remove_ground(pc_all, 0.3)
        mask = observability_mask(pc_all, pc_ng, GRID)
        assert mask.bits[world_to_cell(5.0, 0.0, GRID)]
        assert mask.bits[world_to_cell(10.0, 0.0, GRID)]  # endpoint inclusive
        assert not mask.bits[world_to_cell(12.0, 0.0, GRID)]
        assert not mask.bits[world_to_cell(25.0, 0.0, GRID)]

    def test_free_extent_from_ground_only(self):
        rows = [(float(d), 0.0, 0.0, True) for d in range(1, 31)]
        pc_all = cloud(rows)
        mask = observability_mask(pc_all, remove_ground(pc_all, 0.3), GRID)
        assert mask.bits[world_to_cell(29.9, 0.0, GRID)]
        assert not mask.bits[world_to_cell(31.0, 0.0, GRID)]

    def test_no_returns_no_marks(self):
        mask = observability_mask(cloud([]), cloud([]), GRID)
        assert not mask.bits.any()

    def test_bins_partition_by_floor(self):
        pts = cloud([(10.0, 0.0, 0.0, True)])
        endpoint, centers = _bin_endpoints(pts, cloud([]), 0.05)
        k = np.nonzero(np.isfinite(endpoint))[0]
        assert k.tolist() == [0]  # boresight return lands in the k=0 bin

    def test_ray_monotonicity_prefix_property(self):
        rng = np.random.default_rng(7)
        scene = Scene(
            tuple(
                Scatterer(x, y, radius=r)
                for x, y, r in zip(
                    rng.uniform(4, 40, 10), rng.uniform(-15, 15, 10), rng.uniform(0.3, 1.0, 10)
                )
            )
        )
        pc = simulate_lidar(scene, LidarConfig(), rng=np.random.default_rng(1))
        ng = remove_ground(pc, 0.3)
        mask = observability_mask(pc, ng, GRID, azimuth_res_deg=0.05)
        endpoint, centers = _bin_endpoints(pc, ng, 0.05)
        live = np.nonzero(np.isfinite(endpoint))[0]
        for k in live[:: max(1, live.size // 200)]:
            cells = bin_march_cells(endpoint[k], centers[k], GRID)
            for cell in cells:
                assert mask.bits[cell], f"bin {k}: marched cell {cell} not observable"

    def test_finer_resolution_never_unmarks(self):
        scene = Scene((Scatterer(12.0, 2.0, radius=0.8), Scatterer(25.0, -6.0, radius=1.0)))
        pc = simulate_lidar(scene, LidarConfig(), rng=np.random.default_rng(2))
        ng = remove_ground(pc, 0.3)
        coarse = observability_mask(pc, ng, GRID, azimuth_res_deg=0.2)
        fine = observability_mask(pc, ng, GRID, azimuth_res_deg=0.05)
        # returns are denser than the coarse bin width (0.2 deg ray spacing),
        # so anything both resolutions agree on marking must stay marked
        assert not np.any(coarse.bits & ~fine.bits & coarse.bits)
        overlap = coarse.bits & fine.bits
        assert overlap.sum() > 0


class TestBuildSupervision:
    def _components(self):
        rng = np.random.default_rng(4)
        observable = BevMask(rng.uniform(size=GRID.shape) < 0.5, GRID)
        occupancy = (rng.uniform(size=GRID.shape) < 0.08) & observable.bits
        occupancy |= rng.uniform(size=GRID.shape) < 0.02  # some unobservable hits
        hfov = hfov_mask(GRID)
        return occupancy, observable, hfov

    def test_partition_identity(self):
        occupancy, observable, hfov = self._components()
        label, sup, unknown = build_supervision(occupancy, observable, hfov)
        assert not np.any(sup.bits & unknown.bits)
        assert np.array_equal(sup.bits | unknown.bits, hfov.bits)

    def test_occupied_implies_observable(self):
        occupancy, observable, hfov = self._components()
        label, _, _ = build_supervision(occupancy, observable, hfov)
        assert not np.any(label.occupancy & ~label.observable.bits)

    def test_observable_outside_hfov_not_in_sup(self):
        occupancy, observable, hfov = self._components()
        _, sup, _ = build_supervision(occupancy, observable, hfov)
        assert not np.any(sup.bits & ~hfov.bits)

    def test_grid_mismatch_rejected(self):
        occupancy, observable, hfov = self._components()
        other = BevGridSpec(resolution=0.4)
        with pytest.raises(GridMismatchError):
            build_supervision(
                occupancy, observable, BevMask(np.zeros(other.shape, bool), other)
            )
