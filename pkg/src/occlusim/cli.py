"""Command line surface: occlude, validate, presets, scan."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .core import OcclusionKind, OcclusionSpec, RngStream
from .dataset_io import Modality, read_lidar_bin, read_pcd, scan_dataset
from .errors import OcclusimError, PairingError, UsageError
from .pipeline import MANIFEST_NAME, JobConfig, cmd_occlude, load_manifest
from .pointcloud import PointCloud
from .report import (
    DegradationReport,
    NoiseRow,
    RetentionRow,
    check_sweep_ordering,
    write_report,
)
from .validation import batch_ssim, verify_noise_stats, verify_retention

logger = logging.getLogger(__name__)

ENV_DATASET_ROOT = "OCCLUSIM_DATASET_ROOT"

PRESET_LINES = [
    ("camera", "dirt", "opacity", "0.1 - 0.3 (light/moderate/heavy)"),
    ("camera", "water_blur", "opacity", "0.1 - 0.3 (light/moderate/heavy)"),
    ("camera", "scratch", "opacity", "0.1 - 0.3 (selects pattern severity)"),
    ("camera", "soiling", "soiling_kernel_size", "15, 51, 101, 251"),
    ("radar", "radar_sensor_drop", "random selection", "Drop 1 of 5 radars"),
    ("radar", "point_dropout", "drop_percent", "0 - 99 %"),
    ("radar", "gaussian_noise", "noise_sigma (m)", "0.1 - 2"),
    ("lidar", "region_drop", "region", "front/back/left/right"),
    ("lidar", "angle_drop", "region + cone_angle_deg", "e.g. front 30, 60, 90 degrees"),
    ("lidar", "point_dropout", "drop_percent", "0 - 99 %"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="occlusim",
        description="Synthesize and validate camera/radar/LiDAR occlusions over "
        "nuScenes-layout sensor data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    occ = sub.add_parser("occlude", help="apply occlusion specs over a dataset tree")
    occ.add_argument("--config", type=Path, help="YAML job config (sweeps of specs)")
    occ.add_argument("--dataset-root", type=Path,
                     help=f"dataset tree (default: ${ENV_DATASET_ROOT})")
    occ.add_argument("--output-root", type=Path)
    occ.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    occ.add_argument("--type", dest="kind", choices=[k.value for k in OcclusionKind])
    occ.add_argument("--opacity", type=float)
    occ.add_argument("--percent", type=float, help="drop percent in [0, 99]")
    occ.add_argument("--sigma", type=float, help="noise std dev in meters")
    occ.add_argument("--region", choices=["front", "back", "left", "right"])
    occ.add_argument("--angle", type=float, help="cone angle in degrees")
    occ.add_argument("--kernel-size", type=int, help="odd soiling kernel size")
    occ.add_argument("--workers", type=int, default=None)
    occ.add_argument("--format", dest="image_format", choices=["jpeg", "png"], default=None)
    occ.add_argument("--jpeg-quality", type=int, default=None)

    val = sub.add_parser("validate", help="measure degradation between two trees")
    val.add_argument("clean_root", type=Path)
    val.add_argument("occluded_root", type=Path)
    val.add_argument("--mode", choices=["ssim", "retention", "noise"], required=True)
    val.add_argument("--samples-per-camera", type=int, default=5000)
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--report-dir", type=Path, default=None,
                     help="where to write report.csv and figures "
                     "(default: <occluded_root>/validation_report)")

    pre = sub.add_parser("presets", help="list occlusion kinds, parameters, and canonical settings")
    pre.add_argument("--json", action="store_true", help="emit machine-readable JSON")

    scan = sub.add_parser("scan", help="list dataset entries by modality")
    scan.add_argument("root", type=Path)
    scan.add_argument("--modality", action="append", choices=["camera", "radar", "lidar"],
                      help="repeatable modality filter")
    return parser


# ---------------------------------------------------------------------------
# occlude


def _spec_from_flags(args: argparse.Namespace) -> OcclusionSpec:
    if args.kind is None:
        raise UsageError("either --config or --type is required")
    params = {}
    for flag, fname in (
        ("opacity", "opacity"),
        ("percent", "drop_percent"),
        ("sigma", "noise_sigma"),
        ("region", "region"),
        ("angle", "cone_angle_deg"),
        ("kernel_size", "soiling_kernel_size"),
    ):
        value = getattr(args, flag)
        if value is not None:
            params[fname] = value
    try:
        return OcclusionSpec(kind=OcclusionKind(args.kind), **params)
    except (OcclusimError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _run_occlude(args: argparse.Namespace) -> int:
    if args.config:
        spec_flags = [args.kind, args.opacity, args.percent, args.sigma,
                      args.region, args.angle, args.kernel_size]
        if any(v is not None for v in spec_flags):
            raise UsageError("--type and per-kind flags cannot be combined with --config")
        config = JobConfig.from_yaml(args.config)
        overrides = {}
        if args.dataset_root is not None:
            overrides["dataset_root"] = args.dataset_root
        if args.output_root is not None:
            overrides["output_root"] = args.output_root
        if args.seed is not None:
            overrides["global_seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.image_format is not None:
            overrides["image_format"] = args.image_format
        if args.jpeg_quality is not None:
            overrides["jpeg_quality"] = args.jpeg_quality
        if overrides:
            from dataclasses import replace
            config = replace(config, **overrides)
    else:
        env_root = os.environ.get(ENV_DATASET_ROOT)
        dataset_root = args.dataset_root or (Path(env_root) if env_root else None)
        if dataset_root is None or args.output_root is None:
            raise UsageError("--dataset-root and --output-root are required without --config")
        config = JobConfig(
            dataset_root=dataset_root,
            output_root=args.output_root,
            global_seed=args.seed if args.seed is not None else 0,
            specs=(_spec_from_flags(args),),
            workers=args.workers if args.workers is not None else 1,
            image_format=args.image_format or "jpeg",
            jpeg_quality=args.jpeg_quality if args.jpeg_quality is not None else 95,
        )
    result = cmd_occlude(config)
    print(f"written: {result.written}  skipped: {result.skipped}  failures: {len(result.failures)}")
    for failure in result.failures:
        print(f"FAIL {failure}", file=sys.stderr)
    return 0 if result.ok else 1


# ---------------------------------------------------------------------------
# validate


def _severity_trees(occluded_root: Path) -> list[tuple[str, Path]]:
    """A root is either one mirrored tree or a directory of labeled severity subtrees."""
    if (occluded_root / "samples").is_dir() or (occluded_root / "sweeps").is_dir():
        return [(occluded_root.name, occluded_root)]
    trees = []
    for child in sorted(p for p in occluded_root.iterdir() if p.is_dir()):
        if (child / "samples").is_dir() or (child / "sweeps").is_dir():
            trees.append((child.name, child))
    if not trees:
        raise UsageError(f"{occluded_root} holds no mirrored samples/ or sweeps/ trees")
    return trees


def _read_cloud(path: Path) -> PointCloud:
    data = path.read_bytes()
    return read_pcd(data) if path.suffix == ".pcd" else read_lidar_bin(data)


def _validate_ssim(args: argparse.Namespace, report: DegradationReport) -> None:
    rng = RngStream(args.seed)
    for label, tree in _severity_trees(args.occluded_root):
        if not scan_dataset(tree, {Modality.CAMERA}):
            print(f"ssim {label}: no camera files, skipped")
            continue
        summary = batch_ssim(
            args.clean_root, tree, args.samples_per_camera, rng.child(label), label=label
        )
        report.ssim_summaries.append(summary)
        print(f"ssim {label}: mean={summary.mean_ssim:.4f} drop={summary.mean_drop:.4f} "
              f"pairs={summary.pair_count}")
    if not report.ssim_summaries:
        raise UsageError(f"no camera trees to compare under {args.occluded_root}")
    report.sweep_ordering_ok = check_sweep_ordering(report.ssim_summaries)
    if report.sweep_ordering_ok is False:
        print("FAIL severity sweep drops are not monotone", file=sys.stderr)


def _validate_pointclouds(args: argparse.Namespace, report: DegradationReport,
                          kind: OcclusionKind) -> None:
    manifest_path = args.occluded_root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise UsageError(
            f"{args.mode} validation needs {MANIFEST_NAME} in {args.occluded_root} "
            "(produced by `occlusim occlude`)"
        )
    records = [
        r for r in load_manifest(manifest_path)
        if r.spec.kind is kind and r.output_relpath is not None
    ]
    if not records:
        raise UsageError(f"manifest holds no {kind.value} outputs to validate")
    missing = [
        r.output_relpath for r in records
        if not (args.occluded_root / r.output_relpath).is_file()
        or not (args.clean_root / r.source_relpath).is_file()
    ]
    if missing:
        shown = ", ".join(missing[:5])
        raise PairingError(f"{len(missing)} recorded pairs are missing on disk: {shown}")
    for record in records:
        original = _read_cloud(args.clean_root / record.source_relpath)
        degraded = _read_cloud(args.occluded_root / record.output_relpath)
        label = record.spec.label()
        if kind is OcclusionKind.POINT_DROPOUT:
            percent = record.spec.drop_percent if record.applied else 0.0
            check = verify_retention(original, degraded, percent)
            report.retention_rows.append(
                RetentionRow(label, record.source_relpath, percent, check)
            )
        else:
            sigma = record.spec.noise_sigma if record.applied else 0.0
            check = verify_noise_stats(original, degraded, sigma)
            report.noise_rows.append(NoiseRow(label, record.source_relpath, check))
        status = "ok" if check.passed else f"FAIL ({check.message})"
        print(f"{args.mode} {label} {record.source_relpath}: {status}")


def _run_validate(args: argparse.Namespace) -> int:
    report = DegradationReport()
    if args.mode == "ssim":
        _validate_ssim(args, report)
    elif args.mode == "retention":
        _validate_pointclouds(args, report, OcclusionKind.POINT_DROPOUT)
    else:
        _validate_pointclouds(args, report, OcclusionKind.GAUSSIAN_NOISE)
    report_dir = args.report_dir or (args.occluded_root / "validation_report")
    written = write_report(report, report_dir)
    print("report: " + ", ".join(str(p) for p in written))
    return 0 if report.all_passed else 1


# ---------------------------------------------------------------------------
# presets / scan


def _run_presets(args: argparse.Namespace) -> int:
    if args.json:
        payload = [
            {"modality": modality, "kind": kind, "parameters": params, "setting": setting}
            for modality, kind, params, setting in PRESET_LINES
        ]
        print(json.dumps(payload, indent=2))
        return 0
    header = f"{'modality':<8} {'kind':<18} {'parameters':<24} setting"
    print(header)
    print("-" * len(header))
    for modality, kind, params, setting in PRESET_LINES:
        print(f"{modality:<8} {kind:<18} {params:<24} {setting}")
    return 0


def _run_scan(args: argparse.Namespace) -> int:
    modalities = {Modality(m) for m in args.modality} if args.modality else None
    entries = scan_dataset(args.root, modalities)
    counts: dict[str, int] = {}
    for entry in entries:
        counts[entry.modality.value] = counts.get(entry.modality.value, 0) + 1
        print(f"{entry.modality.value:<7} {entry.sensor_channel:<20} "
              f"{entry.relpath} ({entry.byte_length} bytes)")
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items())) or "empty"
    print(f"total: {len(entries)} ({summary})")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "occlude":
            return _run_occlude(args)
        if args.command == "validate":
            return _run_validate(args)
        if args.command == "presets":
            return _run_presets(args)
        return _run_scan(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OcclusimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
