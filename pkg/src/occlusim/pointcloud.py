"""Radar and LiDAR degradations over schema-described point clouds.

Clouds are numpy structured arrays; every filtering operation returns a
subsequence of the input records with all attribute bytes untouched. Spatial
predicates use strict inequalities, so points sitting exactly on an axis are
always retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Region, RngStream
from .errors import InputError, ParameterError

RADAR_SENSORS = ("FRONT", "FRONT_LEFT", "FRONT_RIGHT", "BACK_LEFT", "BACK_RIGHT")

# Removal predicate per region, and the azimuth its cone is centered on.
_REGION_AXIS = {
    Region.FRONT: ("x", 1),
    Region.BACK: ("x", -1),
    Region.LEFT: ("y", -1),
    Region.RIGHT: ("y", 1),
}
_CONE_CENTER_DEG = {
    Region.FRONT: 0.0,
    Region.RIGHT: 90.0,
    Region.BACK: 180.0,
    Region.LEFT: -90.0,
}


@dataclass(frozen=True)
class PointCloud:
    """A point sweep: a 1-D structured array whose schema names x, y, z."""

    records: np.ndarray

    def __post_init__(self):
        arr = self.records
        if not isinstance(arr, np.ndarray) or arr.dtype.names is None or arr.ndim != 1:
            raise InputError("point cloud records must be a 1-D structured array")
        for axis in ("x", "y", "z"):
            if axis not in arr.dtype.names:
                raise InputError(f"point cloud schema is missing field '{axis}'")

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def schema(self) -> tuple[tuple[str, str, int], ...]:
        """(name, type kind, byte width) per field, in record order."""
        out = []
        for name in self.records.dtype.names:
            sub = self.records.dtype[name]
            base = sub.base if sub.subdtype else sub
            width = sub.itemsize
            out.append((name, base.kind, width))
        return tuple(out)

    def xyz(self) -> np.ndarray:
        """(N, 3) float64 view of the spatial coordinates."""
        return np.stack(
            [self.records["x"], self.records["y"], self.records["z"]], axis=1
        ).astype(np.float64)

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.records).tobytes()

    def take(self, indices: np.ndarray) -> "PointCloud":
        return PointCloud(self.records[indices])


@dataclass(frozen=True)
class RadarScene:
    """The per-frame radar set: sensor name -> point cloud."""

    sensors: dict[str, PointCloud]

    def __post_init__(self):
        unknown = set(self.sensors) - set(RADAR_SENSORS)
        if unknown:
            raise InputError(f"unknown radar sensor names: {sorted(unknown)}")

    def is_complete(self) -> bool:
        return set(self.sensors) == set(RADAR_SENSORS)


@dataclass(frozen=True)
class ConeSelector:
    """A conical angular window centered on a region's facing direction."""

    region: Region
    cone_angle_deg: float

    def __post_init__(self):
        object.__setattr__(self, "region", Region(self.region))
        if not 0.0 <= self.cone_angle_deg <= 360.0:
            raise ParameterError(f"cone_angle_deg must be in [0, 360], got {self.cone_angle_deg}")


def retained_count(n: int, drop_percent: float) -> int:
    """floor(n * (1 - p/100)) in exact arithmetic, so integer p never misrounds."""
    if not 0.0 <= drop_percent <= 99.0:
        raise ParameterError(f"drop_percent must be in [0, 99], got {drop_percent}")
    return int(n * (Fraction(100) - Fraction(drop_percent)) / 100)


def dropout_points(cloud: PointCloud, drop_percent: float, rng: RngStream) -> PointCloud:
    """Uniform random point removal; keeps floor(N * (1 - p/100)) records in order."""
    keep = retained_count(cloud.count, drop_percent)
    idx = rng.sample_without_replacement(cloud.count, keep)
    return cloud.take(idx)


def add_gaussian_noise(cloud: PointCloud, sigma: float, rng: RngStream) -> PointCloud:
    """Perturb x, y, z with independent zero-mean Gaussian noise of std sigma.

    All non-spatial fields are byte-identical to the input. Noise is drawn as a
    single (N, 3) block, one column per axis in x, y, z order.
    """
    if not sigma >= 0.0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    records = cloud.records.copy()
    if sigma == 0.0 or cloud.count == 0:
        return PointCloud(records)
    noise = rng.normal(sigma, size=(cloud.count, 3))
    for i, axis in enumerate(("x", "y", "z")):
        kind = records.dtype[axis]
        if kind.kind != "f":
            raise InputError(f"field '{axis}' must be floating point to receive noise")
        records[axis] = records[axis].astype(np.float64) + noise[:, i]
    return PointCloud(records)


def region_mask(cloud: PointCloud, region: Region, swap_lateral: bool = False) -> np.ndarray:
    """Boolean mask of points strictly inside the region's half-plane.

    Default lateral convention: left is y < 0, right is y > 0; ``swap_lateral``
    flips the two for data using the opposite ego convention.
    """
    region = Region(region)
    axis, sign = _REGION_AXIS[region]
    if swap_lateral and region in (Region.LEFT, Region.RIGHT):
        sign = -sign
    values = cloud.records[axis].astype(np.float64)
    return values > 0.0 if sign > 0 else values < 0.0


def occlude_region(cloud: PointCloud, region: Region, swap_lateral: bool = False) -> PointCloud:
    """Remove every point strictly inside the selected half-plane."""
    mask = region_mask(cloud, region, swap_lateral)
    return cloud.take(np.flatnonzero(~mask))


def cone_center_deg(region: Region, swap_lateral: bool = False) -> float:
    region = Region(region)
    center = _CONE_CENTER_DEG[region]
    if swap_lateral and region in (Region.LEFT, Region.RIGHT):
        center = -center
    return center


def occlude_angle(cloud: PointCloud, cone: ConeSelector, swap_lateral: bool = False) -> PointCloud:
    """Remove points inside the region whose azimuth falls within the cone.

    Azimuth is the full-quadrant arctangent of (y, x) in degrees; a point is
    removed iff it satisfies the region predicate and the wrapped angular
    distance to the cone center is at most cone_angle_deg / 2.
    """
    in_region = region_mask(cloud, cone.region, swap_lateral)
    theta = np.degrees(
        np.arctan2(cloud.records["y"].astype(np.float64), cloud.records["x"].astype(np.float64))
    )
    center = cone_center_deg(cone.region, swap_lateral)
    delta = (theta - center + 180.0) % 360.0 - 180.0
    removed = in_region & (np.abs(delta) <= cone.cone_angle_deg / 2.0)
    return cloud.take(np.flatnonzero(~removed))


def drop_sensor(
    scene: RadarScene,
    choice: str | None = None,
    rng: RngStream | None = None,
) -> tuple[RadarScene, str]:
    """Remove one radar sensor from a complete five-sensor scene.

    With no explicit ``choice`` the victim is drawn uniformly from the five
    sensors. The four survivors are passed through untouched.
    """
    if not scene.is_complete():
        missing = sorted(set(RADAR_SENSORS) - set(scene.sensors))
        raise InputError(f"scene is missing radar sensors: {missing}")
    if choice is not None:
        if choice not in RADAR_SENSORS:
            raise ParameterError(f"unknown radar sensor {choice!r}; expected one of {RADAR_SENSORS}")
        dropped = choice
    else:
        if rng is None:
            raise ParameterError("drop_sensor needs an RngStream when no explicit choice is given")
        dropped = RADAR_SENSORS[rng.index(len(RADAR_SENSORS))]
    remaining = {name: scene.sensors[name] for name in RADAR_SENSORS if name != dropped}
    return RadarScene(remaining), dropped


def point_azimuth_deg(x: float, y: float) -> float:
    """Scalar azimuth helper: degrees of atan2(y, x)."""
    return math.degrees(math.atan2(y, x))
