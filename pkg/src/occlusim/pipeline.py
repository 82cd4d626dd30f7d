"""Batch occlusion jobs: task planning, deterministic per-file seeding, worker
pool execution, and the append-only provenance manifest.

Every output byte is a pure function of (dataset, job config): per-file seeds
derive from the global seed and the file's relpath plus the spec label, so
scheduling and worker count never change results. Outputs land under one
subtree per spec (e.g. ``dirt_0.2/samples/CAM_FRONT/...``) and are written via
temporary names, so interrupted runs never leave partial files; reruns skip
work whose checksums already match the manifest.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import camera as cam
from .core import (
    ManifestRecord,
    OcclusionKind,
    OcclusionSpec,
    RngStream,
    SeverityPreset,
    content_checksum,
    derive_seed,
    severity_to_spec,
)
from .dataset_io import (
    DatasetEntry,
    Modality,
    mirror_output_path,
    read_image,
    read_lidar_bin,
    read_pcd,
    scan_dataset,
    write_bytes_atomic,
    write_image,
    write_lidar_bin,
    write_pcd,
)
from .errors import InputError, OcclusimError, UsageError
from .pointcloud import (
    RADAR_SENSORS,
    ConeSelector,
    PointCloud,
    add_gaussian_noise,
    dropout_points,
    occlude_angle,
    occlude_region,
)
from .textures import TextureBank
from .validation import ssim

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class JobConfig:
    dataset_root: Path
    output_root: Path
    global_seed: int = 0
    specs: tuple[OcclusionSpec, ...] = ()
    workers: int = 1
    image_format: str = "jpeg"
    jpeg_quality: int = 95
    record_ssim: bool = False
    texture_root: Path | None = None
    radar_dropout_all_sensors: bool = False
    swap_lateral_regions: bool = False

    def validate(self) -> "JobConfig":
        if not self.specs:
            raise UsageError("job config lists no occlusion specs")
        if Path(self.dataset_root).resolve() == Path(self.output_root).resolve():
            raise UsageError("dataset_root and output_root must differ")
        if self.workers < 1:
            raise UsageError(f"workers must be >= 1, got {self.workers}")
        if self.image_format not in ("jpeg", "png"):
            raise UsageError(f"image_format must be jpeg or png, got {self.image_format!r}")
        if not 1 <= self.jpeg_quality <= 100:
            raise UsageError(f"jpeg_quality must be in [1, 100], got {self.jpeg_quality}")
        if not 0 <= self.global_seed <= 2**64 - 1:
            raise UsageError("global_seed must be an unsigned 64-bit integer")
        return self

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "JobConfig":
        known = {
            "dataset_root", "output_root", "global_seed", "specs", "workers",
            "image_format", "jpeg_quality", "record_ssim", "texture_root",
            "radar_dropout_all_sensors", "swap_lateral_regions",
        }
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown job config fields: {sorted(unknown)}")
        for required in ("dataset_root", "output_root"):
            if required not in data:
                raise UsageError(f"job config requires {required}")
        specs = []
        for raw in data.get("specs", []):
            if not isinstance(raw, dict):
                raise UsageError(f"each spec must be a mapping, got {raw!r}")
            raw = dict(raw)
            severity = raw.pop("severity", None)
            try:
                if severity is not None:
                    if set(raw) != {"kind"}:
                        raise UsageError(
                            "a spec with 'severity' takes no other parameters"
                        )
                    spec = replace(
                        severity_to_spec(OcclusionKind(raw["kind"]), SeverityPreset(severity), 0),
                        seed=None,
                    )
                else:
                    spec = OcclusionSpec.from_dict(raw)
            except (OcclusimError, ValueError) as exc:
                raise UsageError(f"invalid occlusion spec {raw!r}: {exc}") from exc
            specs.append(spec)
        texture_root = data.get("texture_root")
        return cls(
            dataset_root=Path(data["dataset_root"]),
            output_root=Path(data["output_root"]),
            global_seed=int(data.get("global_seed", 0)),
            specs=tuple(specs),
            workers=int(data.get("workers", 1)),
            image_format=str(data.get("image_format", "jpeg")),
            jpeg_quality=int(data.get("jpeg_quality", 95)),
            record_ssim=bool(data.get("record_ssim", False)),
            texture_root=Path(texture_root) if texture_root else None,
            radar_dropout_all_sensors=bool(data.get("radar_dropout_all_sensors", False)),
            swap_lateral_regions=bool(data.get("swap_lateral_regions", False)),
        )

    @classmethod
    def from_yaml(cls, path: Path | str) -> "JobConfig":
        try:
            with open(path) as handle:
                data = yaml.safe_load(handle)
        except OSError as exc:
            raise UsageError(f"cannot read job config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise UsageError(f"job config {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError(f"job config {path} must be a mapping")
        return cls.from_dict(data)


@dataclass(frozen=True)
class FileTask:
    """Apply one spec to one file."""

    spec: OcclusionSpec
    entry: DatasetEntry


@dataclass(frozen=True)
class RadarFrameTask:
    """Apply one spec to a synchronized five-sensor radar frame.

    ``entries`` follows RADAR_SENSORS order. The frame seed picks one sensor:
    sensor failure omits its file, single-sensor dropout thins it; the other
    four are copied verbatim.
    """

    spec: OcclusionSpec
    entries: tuple[DatasetEntry, ...]


@dataclass
class RunResult:
    records: list[ManifestRecord] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    written: int = 0
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


# ---------------------------------------------------------------------------
# Spec dispatch


def apply_image_spec(
    img: np.ndarray, spec: OcclusionSpec, rng: RngStream, textures: TextureBank
) -> np.ndarray:
    kind = spec.kind
    if kind is OcclusionKind.DIRT:
        layers = cam.generate_dirt_layers(img, rng, patch_alphas=textures.dirt_patches())
        return cam.apply_dirt(img, spec.opacity, rng, layers=layers)
    if kind is OcclusionKind.WATER_BLUR:
        kernel_rng = rng.child("kernel")
        overlay_rng = rng.child("overlay")
        droplets = textures.droplet_patches()
        kernel = cam.droplet_blur_kernel(kernel_rng)
        overlay = cam.droplet_overlay(img.shape[:2], overlay_rng, droplet_alphas=droplets)
        return cam.apply_water_blur(img, spec.opacity, rng, kernel=kernel, overlay=overlay)
    if kind is OcclusionKind.SCRATCH:
        overlay = textures.scratch_overlay(img.shape[:2], spec.opacity, rng)
        return cam.apply_scratch(img, overlay)
    if kind is OcclusionKind.SOILING:
        mask = textures.soiling_mask(img.shape[:2], rng)
        return cam.apply_soiling(img, mask, spec.soiling_kernel_size)
    raise InputError(f"{kind.value} is not an image occlusion")


def apply_cloud_spec(
    cloud: PointCloud, spec: OcclusionSpec, rng: RngStream, swap_lateral: bool = False
) -> PointCloud:
    kind = spec.kind
    if kind is OcclusionKind.POINT_DROPOUT:
        return dropout_points(cloud, spec.drop_percent, rng)
    if kind is OcclusionKind.GAUSSIAN_NOISE:
        return add_gaussian_noise(cloud, spec.noise_sigma, rng)
    if kind is OcclusionKind.REGION_DROP:
        return occlude_region(cloud, spec.region, swap_lateral)
    if kind is OcclusionKind.ANGLE_DROP:
        cone = ConeSelector(region=spec.region, cone_angle_deg=spec.cone_angle_deg)
        return occlude_angle(cloud, cone, swap_lateral)
    raise InputError(f"{kind.value} is not a per-cloud occlusion")


# ---------------------------------------------------------------------------
# Task planning


def _sensor_of(entry: DatasetEntry) -> str:
    return entry.sensor_channel.removeprefix("RADAR_")


def build_radar_frames(entries: list[DatasetEntry]) -> list[tuple[DatasetEntry, ...]]:
    """Group radar files into synchronized frames, index-aligned per channel.

    Within samples/ and sweeps/ separately, the i-th file (sorted) of each of
    the five radar channels forms frame i. All five channels must be present
    with equal counts; non-canonical RADAR_* channels are ignored.
    """
    frames: list[tuple[DatasetEntry, ...]] = []
    for top in ("samples", "sweeps"):
        per_sensor: dict[str, list[DatasetEntry]] = {}
        for entry in entries:
            if entry.modality is not Modality.RADAR or not entry.relpath.startswith(f"{top}/"):
                continue
            sensor = _sensor_of(entry)
            if sensor not in RADAR_SENSORS:
                logger.warning("ignoring non-canonical radar channel %s", entry.sensor_channel)
                continue
            per_sensor.setdefault(sensor, []).append(entry)
        if not per_sensor:
            continue
        missing = sorted(set(RADAR_SENSORS) - set(per_sensor))
        if missing:
            raise InputError(f"radar channels missing under {top}/: {missing}")
        counts = {sensor: len(lst) for sensor, lst in per_sensor.items()}
        if len(set(counts.values())) != 1:
            raise InputError(f"radar channels under {top}/ hold differing file counts: {counts}")
        for lst in per_sensor.values():
            lst.sort(key=lambda e: e.relpath)
        for i in range(next(iter(counts.values()))):
            frames.append(tuple(per_sensor[sensor][i] for sensor in RADAR_SENSORS))
    return frames


def plan_tasks(config: JobConfig, entries: list[DatasetEntry]) -> list[FileTask | RadarFrameTask]:
    tasks: list[FileTask | RadarFrameTask] = []
    radar_frames: list[tuple[DatasetEntry, ...]] | None = None
    for spec in config.specs:
        kind = spec.kind
        if kind in (OcclusionKind.DIRT, OcclusionKind.WATER_BLUR,
                    OcclusionKind.SCRATCH, OcclusionKind.SOILING):
            tasks.extend(
                FileTask(spec, e) for e in entries if e.modality is Modality.CAMERA
            )
            continue
        if kind in (OcclusionKind.REGION_DROP, OcclusionKind.ANGLE_DROP):
            tasks.extend(
                FileTask(spec, e) for e in entries if e.modality is Modality.LIDAR
            )
            continue
        if kind is OcclusionKind.GAUSSIAN_NOISE:
            tasks.extend(
                FileTask(spec, e) for e in entries if e.modality is Modality.RADAR
            )
            continue
        if kind is OcclusionKind.RADAR_SENSOR_DROP or (
            kind is OcclusionKind.POINT_DROPOUT and not config.radar_dropout_all_sensors
        ):
            if radar_frames is None:
                radar_frames = build_radar_frames(entries)
            tasks.extend(RadarFrameTask(spec, frame) for frame in radar_frames)
            if kind is OcclusionKind.POINT_DROPOUT:
                tasks.extend(
                    FileTask(spec, e) for e in entries if e.modality is Modality.LIDAR
                )
            continue
        # point dropout across every radar sensor, plus lidar
        tasks.extend(
            FileTask(spec, e)
            for e in entries
            if e.modality in (Modality.RADAR, Modality.LIDAR)
        )
    return tasks


# ---------------------------------------------------------------------------
# Task execution


def file_seed(config: JobConfig, spec: OcclusionSpec, relpath: str) -> int:
    return derive_seed(config.global_seed, f"{relpath}|{spec.label()}")


def _output_relpath(spec: OcclusionSpec, relpath: str) -> str:
    return f"{spec.label()}/{relpath}"


def _process_file(config: JobConfig, spec: OcclusionSpec, entry: DatasetEntry,
                  data: bytes, seed: int) -> tuple[bytes, float | None]:
    """Apply the spec to one file's bytes; returns output bytes and optional SSIM."""
    rng = RngStream(seed)
    if entry.modality is Modality.CAMERA:
        img = read_image(data)
        occluded = apply_image_spec(img, spec, rng, TextureBank(config.texture_root))
        out = write_image(occluded, config.image_format, config.jpeg_quality)
        score = ssim(img, read_image(out)) if config.record_ssim else None
        return out, score
    if entry.modality is Modality.RADAR:
        cloud = read_pcd(data)
        return write_pcd(apply_cloud_spec(cloud, spec, rng, config.swap_lateral_regions)), None
    cloud = read_lidar_bin(data)
    return write_lidar_bin(apply_cloud_spec(cloud, spec, rng, config.swap_lateral_regions)), None


def _reusable(existing: ManifestRecord | None, derived_seed: int, input_checksum: int,
              output_root: Path) -> bool:
    if existing is None:
        return False
    if existing.derived_seed != derived_seed or existing.input_checksum != input_checksum:
        return False
    if existing.output_relpath is None:
        return existing.output_checksum is None
    out_path = output_root / existing.output_relpath
    if not out_path.is_file():
        return False
    return content_checksum(out_path.read_bytes()) == existing.output_checksum


def _emit(config: JobConfig, spec: OcclusionSpec, entry: DatasetEntry, seed: int,
          prior: dict, out_bytes: bytes | None, data: bytes,
          score: float | None, applied: bool) -> tuple[ManifestRecord, bool]:
    """Write one output (unless reusable) and return its record plus written flag."""
    out_relpath = _output_relpath(spec, entry.relpath)
    checksum = content_checksum(data)
    existing = prior.get((spec.label(), entry.relpath))
    if _reusable(existing, seed, checksum, config.output_root):
        return existing, False
    path = mirror_output_path(out_relpath, config.output_root)
    write_bytes_atomic(path, out_bytes if out_bytes is not None else data)
    record = ManifestRecord(
        source_relpath=entry.relpath,
        output_relpath=out_relpath,
        spec=spec,
        derived_seed=seed,
        input_checksum=checksum,
        output_checksum=content_checksum(path.read_bytes()),
        ssim=score,
        applied=applied,
    )
    return record, True


def execute_task(config: JobConfig, prior: dict, task: FileTask | RadarFrameTask
                 ) -> tuple[list[ManifestRecord], list[bool], str | None]:
    """Run one task; returns (records, written flags, error message or None)."""
    try:
        if isinstance(task, FileTask):
            spec, entry = task.spec, task.entry
            seed = file_seed(config, spec, entry.relpath)
            data = (Path(config.dataset_root) / entry.relpath).read_bytes()
            existing = prior.get((spec.label(), entry.relpath))
            if _reusable(existing, seed, content_checksum(data), config.output_root):
                return [existing], [False], None
            out_bytes, score = _process_file(config, spec, entry, data, seed)
            record, written = _emit(config, spec, entry, seed, prior, out_bytes, data, score, True)
            # _emit re-checks reuse; force the freshly computed bytes through
            return [record], [written], None
        return _execute_radar_frame(config, prior, task)
    except Exception as exc:  # per-file failures must not kill the batch
        key = task.entry.relpath if isinstance(task, FileTask) else task.entries[0].relpath
        return [], [], f"{task.spec.label()} on {key}: {exc}"


def _execute_radar_frame(config: JobConfig, prior: dict, task: RadarFrameTask
                         ) -> tuple[list[ManifestRecord], list[bool], str | None]:
    spec = task.spec
    front = task.entries[0]
    frame_seed = derive_seed(config.global_seed, f"{front.relpath}|{spec.label()}|frame")
    target = RADAR_SENSORS[RngStream(frame_seed).index(len(RADAR_SENSORS))]
    records: list[ManifestRecord] = []
    written_flags: list[bool] = []
    for sensor, entry in zip(RADAR_SENSORS, task.entries):
        data = (Path(config.dataset_root) / entry.relpath).read_bytes()
        checksum = content_checksum(data)
        seed = file_seed(config, spec, entry.relpath)
        if spec.kind is OcclusionKind.RADAR_SENSOR_DROP:
            if sensor == target:
                existing = prior.get((spec.label(), entry.relpath))
                if _reusable(existing, frame_seed, checksum, config.output_root):
                    records.append(existing)
                    written_flags.append(False)
                else:
                    records.append(ManifestRecord(
                        source_relpath=entry.relpath,
                        output_relpath=None,
                        spec=spec,
                        derived_seed=frame_seed,
                        input_checksum=checksum,
                        output_checksum=None,
                        applied=True,
                    ))
                    written_flags.append(True)
            else:
                record, written = _emit(config, spec, entry, frame_seed, prior,
                                        None, data, None, False)
                records.append(record)
                written_flags.append(written)
        else:  # point dropout on the one selected sensor
            if sensor == target:
                existing = prior.get((spec.label(), entry.relpath))
                if _reusable(existing, seed, checksum, config.output_root):
                    records.append(existing)
                    written_flags.append(False)
                    continue
                out_bytes, _ = _process_file(config, spec, entry, data, seed)
                record, written = _emit(config, spec, entry, seed, prior,
                                        out_bytes, data, None, True)
            else:
                record, written = _emit(config, spec, entry, seed, prior,
                                        None, data, None, False)
            records.append(record)
            written_flags.append(written)
    return records, written_flags, None


# ---------------------------------------------------------------------------
# The batch runner


def load_manifest(path: Path) -> list[ManifestRecord]:
    if not path.is_file():
        return []
    records = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_json_line(line))
    return records


def cmd_occlude(config: JobConfig) -> RunResult:
    """Run every (matching file x spec) unit, mirroring outputs and logging provenance.

    Reruns with the same config resume: any output whose manifest record and
    checksums already match is skipped. Results are independent of worker
    count and scheduling.
    """
    config.validate()
    entries = scan_dataset(config.dataset_root)
    tasks = plan_tasks(config, entries)

    output_root = Path(config.output_root)
    manifest_path = output_root / MANIFEST_NAME
    prior: dict[tuple[str, str], ManifestRecord] = {}
    if manifest_path.is_file():
        for record in load_manifest(manifest_path):
            prior[(record.spec.label(), record.source_relpath)] = record

    result = RunResult()
    if not tasks:
        logger.warning("no dataset entries match the configured specs")
        return result
    output_root.mkdir(parents=True, exist_ok=True)

    runner = partial(execute_task, config, prior)
    if config.workers == 1 or len(tasks) == 1:
        outcomes = map(runner, tasks)
    else:
        executor = ProcessPoolExecutor(max_workers=config.workers)
        outcomes = executor.map(runner, tasks, chunksize=max(1, len(tasks) // (config.workers * 4)))

    known = set()
    new_records: list[ManifestRecord] = []
    for records, written_flags, error in outcomes:
        if error is not None:
            logger.error("task failed: %s", error)
            result.failures.append(error)
            continue
        for record, was_written in zip(records, written_flags):
            result.records.append(record)
            if was_written:
                result.written += 1
                key = (record.spec.label(), record.source_relpath)
                if key not in known:
                    known.add(key)
                    new_records.append(record)
            else:
                result.skipped += 1
    if config.workers > 1 and len(tasks) > 1:
        executor.shutdown()

    if new_records:
        with open(manifest_path, "a") as handle:
            for record in new_records:
                handle.write(record.to_json_line() + "\n")
    return result
