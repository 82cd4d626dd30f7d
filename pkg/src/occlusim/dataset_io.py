"""Dataset discovery and codecs for nuScenes-layout trees.

Camera files are JPEG/PNG rasters, radar sweeps are binary-mode PCD files with
an ASCII header, and LiDAR sweeps are flat little-endian float32 records of
(x, y, z, intensity, ring). Output trees mirror source relpaths exactly so the
results drop into existing pipelines.
"""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import validate_relpath
from .errors import (
    DecodeError,
    InputError,
    MalformedFileError,
    ParameterError,
    UnsupportedFormatError,
)
from .pointcloud import PointCloud

logger = logging.getLogger(__name__)

LIDAR_RECORD_BYTES = 20
LIDAR_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "<f4"), ("ring", "<f4")]
)

_PCD_TYPE_FOR_KIND = {"f": "F", "i": "I", "u": "U"}
_PCD_KIND_FOR_TYPE = {"F": "f", "I": "i", "U": "u"}
_PCD_HEADER_KEYS = (
    "VERSION", "FIELDS", "SIZE", "TYPE", "COUNT",
    "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA",
)


class Modality(str, Enum):
    CAMERA = "camera"
    RADAR = "radar"
    LIDAR = "lidar"


_CHANNEL_PREFIXES = (("CAM_", Modality.CAMERA), ("RADAR_", Modality.RADAR), ("LIDAR_", Modality.LIDAR))


@dataclass(frozen=True)
class DatasetEntry:
    modality: Modality
    sensor_channel: str
    relpath: str  # forward-slash, relative to the dataset root
    byte_length: int


@dataclass(frozen=True)
class PcdHeader:
    fields: tuple[str, ...]
    sizes: tuple[int, ...]
    type_tags: tuple[str, ...]
    counts: tuple[int, ...]
    points: int
    data_mode: str


def classify_channel(channel: str) -> Modality | None:
    for prefix, modality in _CHANNEL_PREFIXES:
        if channel.startswith(prefix):
            return modality
    return None


def scan_dataset(root: Path | str, modalities: set[Modality] | None = None) -> list[DatasetEntry]:
    """List sensor files under samples/ and sweeps/, sorted by relpath.

    Unknown channel directories are skipped with a warning. The listing is
    lexicographic, so it is stable across runs and platforms.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root does not exist: {root}")
    wanted = set(Modality) if modalities is None else {Modality(m) for m in modalities}
    entries: list[DatasetEntry] = []
    for top in ("samples", "sweeps"):
        top_dir = root / top
        if not top_dir.is_dir():
            continue
        for channel_dir in sorted(p for p in top_dir.iterdir() if p.is_dir()):
            modality = classify_channel(channel_dir.name)
            if modality is None:
                logger.warning("skipping unrecognized channel directory %s", channel_dir)
                continue
            if modality not in wanted:
                continue
            for file in sorted(p for p in channel_dir.iterdir() if p.is_file()):
                relpath = f"{top}/{channel_dir.name}/{file.name}"
                entries.append(
                    DatasetEntry(
                        modality=modality,
                        sensor_channel=channel_dir.name,
                        relpath=relpath,
                        byte_length=file.stat().st_size,
                    )
                )
    entries.sort(key=lambda e: e.relpath)
    return entries


# ---------------------------------------------------------------------------
# LiDAR flat binary format


def read_lidar_bin(data: bytes) -> PointCloud:
    """Decode a flat float32 (x, y, z, intensity, ring) sweep."""
    if len(data) % LIDAR_RECORD_BYTES != 0:
        usable = len(data) - len(data) % LIDAR_RECORD_BYTES
        raise MalformedFileError(
            f"lidar payload of {len(data)} bytes is not a multiple of "
            f"{LIDAR_RECORD_BYTES}; trailing bytes start at offset {usable}"
        )
    records = np.frombuffer(data, dtype=LIDAR_DTYPE).copy()
    return PointCloud(records)


def write_lidar_bin(cloud: PointCloud) -> bytes:
    if cloud.records.dtype != LIDAR_DTYPE:
        raise InputError(
            f"cloud schema {cloud.records.dtype} is not the flat lidar layout {LIDAR_DTYPE}"
        )
    return cloud.to_bytes()


# ---------------------------------------------------------------------------
# PCD (binary data mode)


def _parse_pcd_header(data: bytes) -> tuple[dict[str, list[str]], int]:
    header: dict[str, list[str]] = {}
    pos = 0
    while True:
        newline = data.find(b"\n", pos)
        if newline < 0:
            raise MalformedFileError("PCD header truncated: no DATA line found")
        raw = data[pos:newline]
        pos = newline + 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise MalformedFileError(f"PCD header is not ASCII at offset {pos}: {exc}") from exc
        if not line or line.startswith("#"):
            continue
        key, *values = line.split()
        if key not in _PCD_HEADER_KEYS:
            raise MalformedFileError(f"unexpected PCD header line: {line!r}")
        header[key] = values
        if key == "DATA":
            return header, pos


def read_pcd(data: bytes) -> PointCloud:
    """Decode a binary-mode PCD file; unknown fields survive bit-exact."""
    header, payload_start = _parse_pcd_header(data)
    for key in ("FIELDS", "SIZE", "TYPE", "POINTS", "DATA"):
        if key not in header:
            raise MalformedFileError(f"PCD header is missing {key}")
    mode = header["DATA"][0] if header["DATA"] else ""
    if mode != "binary":
        raise UnsupportedFormatError(f"only binary PCD data is supported, got {mode!r}")
    fields = header["FIELDS"]
    sizes = header["SIZE"]
    types = header["TYPE"]
    counts = header.get("COUNT", ["1"] * len(fields))
    if not (len(fields) == len(sizes) == len(types) == len(counts)):
        raise MalformedFileError(
            "PCD header FIELDS/SIZE/TYPE/COUNT lengths disagree: "
            f"{len(fields)}/{len(sizes)}/{len(types)}/{len(counts)}"
        )
    if len(set(fields)) != len(fields):
        raise MalformedFileError(f"duplicate PCD field names: {fields}")
    try:
        points = int(header["POINTS"][0])
        sizes = [int(s) for s in sizes]
        counts = [int(c) for c in counts]
    except (ValueError, IndexError) as exc:
        raise MalformedFileError(f"non-numeric PCD header value: {exc}") from exc
    if points < 0 or any(s <= 0 for s in sizes) or any(c <= 0 for c in counts):
        raise MalformedFileError("PCD POINTS/SIZE/COUNT values must be positive")
    dtype_fields = []
    for name, size, tag, count in zip(fields, sizes, types, counts):
        kind = _PCD_KIND_FOR_TYPE.get(tag)
        if kind is None:
            raise MalformedFileError(f"unknown PCD type tag {tag!r} for field {name!r}")
        fmt = f"<{kind}{size}"
        try:
            base = np.dtype(fmt)
        except TypeError as exc:
            raise MalformedFileError(f"unsupported PCD field width {tag}{size}") from exc
        dtype_fields.append((name, base) if count == 1 else (name, base, (count,)))
    dtype = np.dtype(dtype_fields)
    expected = points * dtype.itemsize
    actual = len(data) - payload_start
    if actual != expected:
        raise MalformedFileError(
            f"PCD payload size mismatch: header declares {points} x {dtype.itemsize} = "
            f"{expected} bytes, found {actual}"
        )
    records = np.frombuffer(data, dtype=dtype, count=points, offset=payload_start).copy()
    return PointCloud(records)


def pcd_header_of(cloud: PointCloud) -> PcdHeader:
    names, tags, sizes, counts = [], [], [], []
    for name in cloud.records.dtype.names:
        sub = cloud.records.dtype[name]
        if sub.subdtype:
            base, shape = sub.subdtype
            count = int(np.prod(shape))
        else:
            base, count = sub, 1
        tag = _PCD_TYPE_FOR_KIND.get(base.kind)
        if tag is None:
            raise InputError(f"field {name!r} of kind {base.kind!r} cannot be written as PCD")
        names.append(name)
        tags.append(tag)
        sizes.append(base.itemsize)
        counts.append(count)
    return PcdHeader(
        fields=tuple(names),
        sizes=tuple(sizes),
        type_tags=tuple(tags),
        counts=tuple(counts),
        points=cloud.count,
        data_mode="binary",
    )


def write_pcd(cloud: PointCloud) -> bytes:
    """Encode with a normalized header; payload bytes are the records verbatim."""
    header = pcd_header_of(cloud)
    lines = [
        "# .PCD v0.7 - Point Cloud Data file format",
        "VERSION 0.7",
        "FIELDS " + " ".join(header.fields),
        "SIZE " + " ".join(str(s) for s in header.sizes),
        "TYPE " + " ".join(header.type_tags),
        "COUNT " + " ".join(str(c) for c in header.counts),
        f"WIDTH {header.points}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {header.points}",
        "DATA binary",
    ]
    return ("\n".join(lines) + "\n").encode("ascii") + cloud.to_bytes()


# ---------------------------------------------------------------------------
# Images


def read_image(data: bytes) -> np.ndarray:
    """Decode JPEG/PNG bytes into an (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc


def write_image(img: np.ndarray, image_format: str = "jpeg", quality: int = 95) -> bytes:
    from .camera import check_image

    check_image(img)
    image_format = image_format.lower()
    if image_format not in ("jpeg", "png"):
        raise ParameterError(f"image format must be 'jpeg' or 'png', got {image_format!r}")
    if not 1 <= quality <= 100:
        raise ParameterError(f"jpeg quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    im = Image.fromarray(img, mode="RGB")
    if image_format == "jpeg":
        im.save(buf, format="JPEG", quality=quality)
    else:
        im.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Output mirroring


def mirror_output_path(relpath: str, output_root: Path | str) -> Path:
    """Output path under the mirrored tree; parent directories are created."""
    validate_relpath(relpath)
    path = Path(output_root) / relpath
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_bytes_atomic(path: Path, data: bytes) -> None:
    """Write to a temporary sibling and rename, so readers never see partial files."""
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)
