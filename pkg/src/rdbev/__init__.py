"""rdbev: synthetic FMCW MIMO range-Doppler to BEV occupancy toolkit."""

from .baselines import (
    EmptyChirpError,
    beamform_oracle,
    beamform_prediction,
    project_ra_to_bev,
    random_prior,
    range_energy_projection,
)
from .container import (
    DatasetManifest,
    MalformedHeaderError,
    ShapeMismatchError,
    TruncatedPayloadError,
    read_dataset_manifest,
    read_frame,
    read_prediction,
    read_scene,
    write_dataset_manifest,
    write_frame,
    write_prediction,
    write_scene,
)
from .core import (
    BevGridSpec,
    BevLabel,
    BevMask,
    ConfigError,
    FrameRecord,
    GridMismatchError,
    PointCloud,
    PredictionMap,
    RadarConfig,
    RdbevError,
    RdFrame,
    Scatterer,
    Scene,
    ValidationError,
    hfov_mask,
    split_sequences,
    world_to_cell,
)
from .datagen import GenConfig, generate_dataset, sample_scene
from .lidar import LidarConfig, simulate_lidar
from .metrics import (
    EvalReport,
    FocalLossParams,
    UndefinedMetricError,
    average_precision,
    bandwise_report,
    iou_occupied,
    masked_focal_loss,
    pr_curve,
    select_global_threshold,
    uhr,
)
from .radar import ChirpMode, PropagationParams, collapse_dim, normalize_rd, select_chirps, simulate_rd
from .supervision import (
    build_supervision,
    observability_mask,
    occupancy_from_points,
    remove_ground,
)

__version__ = "0.1.0"
