"""Shared domain types: occlusion specs, severity presets, seeding, and manifest records.

Everything here is an immutable value type, safe to share between worker
processes. Random state is carried by :class:`RngStream`, which is single-owner:
concurrency splits streams via :meth:`RngStream.child`, never shares one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError, PathError, UnsupportedPresetError

_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class OcclusionKind(str, Enum):
    DIRT = "dirt"
    WATER_BLUR = "water_blur"
    SCRATCH = "scratch"
    SOILING = "soiling"
    RADAR_SENSOR_DROP = "radar_sensor_drop"
    POINT_DROPOUT = "point_dropout"
    GAUSSIAN_NOISE = "gaussian_noise"
    REGION_DROP = "region_drop"
    ANGLE_DROP = "angle_drop"


class Region(str, Enum):
    FRONT = "front"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"


class SeverityPreset(str, Enum):
    LIGHT = "light"
    MODERATE = "moderate"
    HEAVY = "heavy"

    @property
    def opacity(self) -> float:
        return _PRESET_OPACITY[self]


_PRESET_OPACITY = {
    SeverityPreset.LIGHT: 0.1,
    SeverityPreset.MODERATE: 0.2,
    SeverityPreset.HEAVY: 0.3,
}

CAMERA_KINDS = frozenset(
    {OcclusionKind.DIRT, OcclusionKind.WATER_BLUR, OcclusionKind.SCRATCH, OcclusionKind.SOILING}
)
RADAR_KINDS = frozenset(
    {OcclusionKind.RADAR_SENSOR_DROP, OcclusionKind.POINT_DROPOUT, OcclusionKind.GAUSSIAN_NOISE}
)
LIDAR_KINDS = frozenset(
    {OcclusionKind.REGION_DROP, OcclusionKind.ANGLE_DROP, OcclusionKind.POINT_DROPOUT}
)

# Canonical soiling blur kernel sizes; other odd sizes >= 3 are also accepted.
SOILING_KERNEL_SIZES = (15, 51, 101, 251)

# Parameter subset each kind requires; anything outside it must stay unset.
_KIND_PARAMS: dict[OcclusionKind, tuple[str, ...]] = {
    OcclusionKind.DIRT: ("opacity",),
    OcclusionKind.WATER_BLUR: ("opacity",),
    OcclusionKind.SCRATCH: ("opacity",),
    OcclusionKind.SOILING: ("soiling_kernel_size",),
    OcclusionKind.RADAR_SENSOR_DROP: (),
    OcclusionKind.POINT_DROPOUT: ("drop_percent",),
    OcclusionKind.GAUSSIAN_NOISE: ("noise_sigma",),
    OcclusionKind.REGION_DROP: ("region",),
    OcclusionKind.ANGLE_DROP: ("region", "cone_angle_deg"),
}

_ALL_PARAMS = ("opacity", "drop_percent", "noise_sigma", "region", "cone_angle_deg", "soiling_kernel_size")


@dataclass(frozen=True)
class OcclusionSpec:
    """One degradation kind plus exactly the parameters that kind needs.

    The optional ``seed`` makes a spec self-contained for standalone use; batch
    jobs derive per-file seeds instead and leave it unset.
    """

    kind: OcclusionKind
    opacity: float | None = None
    drop_percent: float | None = None
    noise_sigma: float | None = None
    region: Region | None = None
    cone_angle_deg: float | None = None
    soiling_kernel_size: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", OcclusionKind(self.kind))
        if self.region is not None:
            object.__setattr__(self, "region", Region(self.region))
        required = _KIND_PARAMS[self.kind]
        for name in _ALL_PARAMS:
            value = getattr(self, name)
            if name in required and value is None:
                raise ParameterError(f"{self.kind.value} requires parameter '{name}'")
            if name not in required and value is not None:
                raise ParameterError(f"parameter '{name}' is not used by {self.kind.value}")
        if self.opacity is not None and not 0.0 <= self.opacity <= 1.0:
            raise ParameterError(f"opacity must be in [0, 1], got {self.opacity}")
        if self.drop_percent is not None and not 0.0 <= self.drop_percent <= 99.0:
            raise ParameterError(f"drop_percent must be in [0, 99], got {self.drop_percent}")
        if self.noise_sigma is not None and not self.noise_sigma >= 0.0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.cone_angle_deg is not None and not 0.0 <= self.cone_angle_deg <= 360.0:
            raise ParameterError(f"cone_angle_deg must be in [0, 360], got {self.cone_angle_deg}")
        if self.soiling_kernel_size is not None:
            k = self.soiling_kernel_size
            if k < 3 or k % 2 == 0:
                raise ParameterError(f"soiling_kernel_size must be odd and >= 3, got {k}")
        if self.seed is not None and not 0 <= self.seed <= _MASK64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def modalities(self) -> frozenset[str]:
        out = set()
        if self.kind in CAMERA_KINDS:
            out.add("camera")
        if self.kind in RADAR_KINDS:
            out.add("radar")
        if self.kind in LIDAR_KINDS:
            out.add("lidar")
        return frozenset(out)

    def label(self) -> str:
        """Short name used for output subtrees, e.g. ``dirt_0.2``."""
        parts = [self.kind.value]
        for name in _KIND_PARAMS[self.kind]:
            value = getattr(self, name)
            parts.append(value.value if isinstance(value, Region) else f"{value:g}")
        return "_".join(parts)

    def with_seed(self, seed: int) -> "OcclusionSpec":
        return replace(self, seed=seed)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        for name in _ALL_PARAMS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value.value if isinstance(value, Region) else value
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OcclusionSpec":
        if "kind" not in data:
            raise ParameterError("occlusion spec requires a 'kind' field")
        known = {"kind", "seed", *_ALL_PARAMS}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown occlusion spec fields: {sorted(unknown)}")
        return cls(**data)


def severity_to_spec(kind: OcclusionKind, preset: SeverityPreset, seed: int) -> OcclusionSpec:
    """Map a named severity to a concrete spec for the opacity-blended camera kinds."""
    kind = OcclusionKind(kind)
    preset = SeverityPreset(preset)
    if kind not in (OcclusionKind.DIRT, OcclusionKind.WATER_BLUR, OcclusionKind.SCRATCH):
        if kind is OcclusionKind.SOILING:
            raise UnsupportedPresetError(
                "soiling severity is set by soiling_kernel_size "
                f"(canonical sizes: {SOILING_KERNEL_SIZES}), not by opacity presets"
            )
        raise UnsupportedPresetError(f"severity presets are defined for camera opacity only, not {kind.value}")
    return OcclusionSpec(kind=kind, opacity=preset.opacity, seed=seed)


def mix64(seed: int, data: bytes) -> int:
    """Stable 64-bit mix of a seed and a byte string (FNV-1a plus avalanche finalizer)."""
    h = _FNV_OFFSET
    for b in (seed & _MASK64).to_bytes(8, "little") + data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    return h ^ (h >> 31)


def validate_relpath(relpath: str) -> str:
    """Check that a path is relative, forward-slash separated, and stays under its root."""
    if not relpath:
        raise PathError("relpath is empty")
    if "\\" in relpath:
        raise PathError(f"relpath must use forward slashes: {relpath!r}")
    if relpath.startswith("/") or relpath[1:2] == ":":
        raise PathError(f"relpath must be relative: {relpath!r}")
    parts = relpath.split("/")
    if any(part in ("", ".", "..") for part in parts):
        raise PathError(f"relpath must not contain empty, '.' or '..' segments: {relpath!r}")
    return relpath


def derive_seed(global_seed: int, relpath: str) -> int:
    """Per-file seed, a pure function of (global seed, normalized relative path)."""
    return mix64(global_seed, validate_relpath(relpath).encode("utf-8"))


class RngStream:
    """Deterministic pseudo-random stream over a 64-bit seed.

    Draw order is part of the contract: the same seed yields the same sequence
    on every platform. Gaussian variates go through the inverse normal CDF of
    uniform draws so the algorithm is pinned here rather than inherited from
    the generator library.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def child(self, label: str) -> "RngStream":
        """Independent stream derived from (seed, label); order of derivation is irrelevant."""
        return RngStream(mix64(self.seed, label.encode("utf-8")))

    def random(self, size: int | tuple[int, ...] | None = None):
        """Uniform doubles in [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self._gen.random(size)

    def index(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ParameterError(f"index() needs n >= 1, got {n}")
        return min(int(self._gen.random() * n), n - 1)

    def normal(self, sigma: float, size=None):
        """Zero-mean Gaussian via inverse-CDF of uniforms (seed-stable by construction)."""
        u = self._gen.random(size) + 2.0**-54
        return sigma * ndtri(u)

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k of n indices, uniformly without replacement, returned sorted ascending.

        Implemented as bottom-k over per-index uniform keys, which is exactly
        uniform and depends only on the uniform stream.
        """
        if not 0 <= k <= n:
            raise ParameterError(f"cannot sample {k} of {n}")
        keys = self._gen.random(n)
        if k == 0:
            return np.empty(0, dtype=np.int64)
        if k == n:
            return np.arange(n, dtype=np.int64)
        idx = np.argpartition(keys, k)[:k]
        return np.sort(idx).astype(np.int64)


def content_checksum(data: bytes) -> int:
    """64-bit content hash; never zero so zero can mean 'no file'."""
    h = int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")
    return h or 1


@dataclass(frozen=True)
class ManifestRecord:
    """Provenance for one produced (or intentionally omitted) output file."""

    source_relpath: str
    output_relpath: str | None
    spec: OcclusionSpec
    derived_seed: int
    input_checksum: int
    output_checksum: int | None
    ssim: float | None = None
    applied: bool = True

    def to_json_line(self) -> str:
        payload = {
            "source_relpath": self.source_relpath,
            "output_relpath": self.output_relpath,
            "spec": self.spec.to_dict(),
            "derived_seed": self.derived_seed,
            "input_checksum": self.input_checksum,
            "output_checksum": self.output_checksum,
            "ssim": self.ssim,
            "applied": self.applied,
        }
        return json.dumps(payload, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "ManifestRecord":
        payload = json.loads(line)
        return cls(
            source_relpath=payload["source_relpath"],
            output_relpath=payload["output_relpath"],
            spec=OcclusionSpec.from_dict(payload["spec"]),
            derived_seed=payload["derived_seed"],
            input_checksum=payload["input_checksum"],
            output_checksum=payload["output_checksum"],
            ssim=payload.get("ssim"),
            applied=payload.get("applied", True),
        )
