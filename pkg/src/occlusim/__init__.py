"""Deterministic sensor occlusion synthesis and validation for nuScenes-layout data."""

from .core import (
    ManifestRecord,
    OcclusionKind,
    OcclusionSpec,
    Region,
    RngStream,
    SeverityPreset,
    content_checksum,
    derive_seed,
    severity_to_spec,
)
from .camera import (
    OverlayLayer,
    apply_dirt,
    apply_scratch,
    apply_soiling,
    apply_water_blur,
    gaussian_kernel,
    generate_dirt_layers,
)
from .pointcloud import (
    ConeSelector,
    PointCloud,
    RadarScene,
    add_gaussian_noise,
    drop_sensor,
    dropout_points,
    occlude_angle,
    occlude_region,
)
from .dataset_io import (
    DatasetEntry,
    Modality,
    mirror_output_path,
    read_image,
    read_lidar_bin,
    read_pcd,
    scan_dataset,
    write_image,
    write_lidar_bin,
    write_pcd,
)
from .validation import (
    SsimParams,
    batch_ssim,
    ssim,
    verify_noise_stats,
    verify_retention,
)
from .pipeline import JobConfig, cmd_occlude

__version__ = "0.1.0"

__all__ = [
    "ManifestRecord", "OcclusionKind", "OcclusionSpec", "Region", "RngStream",
    "SeverityPreset", "content_checksum", "derive_seed", "severity_to_spec",
    "OverlayLayer", "apply_dirt", "apply_scratch", "apply_soiling",
    "apply_water_blur", "gaussian_kernel", "generate_dirt_layers",
    "ConeSelector", "PointCloud", "RadarScene", "add_gaussian_noise",
    "drop_sensor", "dropout_points", "occlude_angle", "occlude_region",
    "DatasetEntry", "Modality", "mirror_output_path", "read_image",
    "read_lidar_bin", "read_pcd", "scan_dataset", "write_image",
    "write_lidar_bin", "write_pcd",
    "SsimParams", "batch_ssim", "ssim", "verify_noise_stats", "verify_retention",
    "JobConfig", "cmd_occlude",
    "__version__",
]
