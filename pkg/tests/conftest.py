import numpy as np
import pytest

from occlusim import PointCloud, write_image
from occlusim.dataset_io import LIDAR_DTYPE, write_pcd
from occlusim.pointcloud import RADAR_SENSORS

# Field layout of nuScenes radar sweeps (18 fields, mixed widths).
RADAR_DTYPE = np.dtype(
    [
        ("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("dyn_prop", "<i1"), ("id", "<i2"),
        ("rcs", "<f4"), ("vx", "<f4"), ("vy", "<f4"), ("vx_comp", "<f4"),
        ("vy_comp", "<f4"), ("is_quality_valid", "<i1"), ("ambig_state", "<i1"),
        ("x_rms", "<i1"), ("y_rms", "<i1"), ("invalid_state", "<i1"), ("pdh0", "<i1"),
        ("vx_rms", "<i1"), ("vy_rms", "<i1"),
    ]
)

CAMERA_CHANNELS = (
    "CAM_FRONT", "CAM_FRONT_LEFT", "CAM_FRONT_RIGHT",
    "CAM_BACK", "CAM_BACK_LEFT", "CAM_BACK_RIGHT",
)


def make_image(seed: int, height: int = 64, width: int = 96) -> np.ndarray:
    """Mid-brightness textured test image: gradient + smooth blobs + grain."""
    g = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 90.0 + 70.0 * xs / max(width - 1, 1) + 25.0 * np.sin(ys / 7.0)
    for _ in range(4):
        cx, cy = g.uniform(0, width), g.uniform(0, height)
        r = g.uniform(0.15, 0.4) * min(height, width)
        amp = g.uniform(-45.0, 45.0)
        base += amp * np.exp(-(((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * r * r)))
    grain = g.normal(0.0, 6.0, (height, width))
    img = np.stack(
        [base + grain + shift for shift in (0.0, -8.0, 9.0)], axis=2
    )
    return np.clip(img, 0, 255).astype(np.uint8)


def make_lidar_records(seed: int, count: int) -> np.ndarray:
    g = np.random.default_rng(seed)
    rec = np.zeros(count, dtype=LIDAR_DTYPE)
    rec["x"] = g.normal(0, 20, count).astype(np.float32)
    rec["y"] = g.normal(0, 20, count).astype(np.float32)
    rec["z"] = g.normal(0, 3, count).astype(np.float32)
    rec["intensity"] = g.random(count).astype(np.float32)
    rec["ring"] = g.integers(0, 32, count).astype(np.float32)
    return rec


def make_lidar_cloud(seed: int, count: int) -> PointCloud:
    return PointCloud(make_lidar_records(seed, count))


def make_radar_records(seed: int, count: int) -> np.ndarray:
    g = np.random.default_rng(seed)
    rec = np.zeros(count, dtype=RADAR_DTYPE)
    for name in rec.dtype.names:
        if rec.dtype[name].kind == "f":
            rec[name] = g.normal(0, 30, count).astype(np.float32)
        else:
            rec[name] = g.integers(0, 7, count)
    return rec


def make_radar_cloud(seed: int, count: int) -> PointCloud:
    return PointCloud(make_radar_records(seed, count))


def make_boundary_free_cloud(seed: int, count: int) -> PointCloud:
    """Random lidar cloud with |x| and |y| bounded away from the axes."""
    g = np.random.default_rng(seed)
    rec = np.zeros(count, dtype=LIDAR_DTYPE)
    for axis in ("x", "y"):
        magnitude = g.uniform(0.05, 40.0, count)
        sign = np.where(g.random(count) < 0.5, -1.0, 1.0)
        rec[axis] = (magnitude * sign).astype(np.float32)
    rec["z"] = g.normal(0, 3, count).astype(np.float32)
    rec["intensity"] = g.random(count).astype(np.float32)
    rec["ring"] = g.integers(0, 32, count).astype(np.float32)
    return PointCloud(rec)


def build_fixture_tree(root, seed: int = 0, image_size=(64, 96), radar_points=50,
                       lidar_points=300) -> dict:
    """Mini dataset tree: 6 camera images, 5 radar sweeps, 1 lidar sweep."""
    counts = {"camera": 0, "radar": 0, "lidar": 0}
    token = "n008-2018-08-01-15-16-36-0924"
    for i, channel in enumerate(CAMERA_CHANNELS):
        directory = root / "samples" / channel
        directory.mkdir(parents=True, exist_ok=True)
        img = make_image(seed * 100 + i, *image_size)
        name = f"{token}__{channel}__153188353041247{i}.jpg"
        (directory / name).write_bytes(write_image(img, "jpeg", 95))
        counts["camera"] += 1
    for i, sensor in enumerate(RADAR_SENSORS):
        channel = f"RADAR_{sensor}"
        directory = root / "samples" / channel
        directory.mkdir(parents=True, exist_ok=True)
        cloud = make_radar_cloud(seed * 100 + 50 + i, radar_points)
        name = f"{token}__{channel}__153188353044937{i}.pcd"
        (directory / name).write_bytes(write_pcd(cloud))
        counts["radar"] += 1
    directory = root / "samples" / "LIDAR_TOP"
    directory.mkdir(parents=True, exist_ok=True)
    cloud = make_lidar_cloud(seed * 100 + 99, lidar_points)
    name = f"{token}__LIDAR_TOP__1531883530449377.pcd.bin"
    (directory / name).write_bytes(cloud.to_bytes())
    counts["lidar"] += 1
    return counts


@pytest.fixture
def fixture_tree(tmp_path):
    root = tmp_path / "dataset"
    root.mkdir()
    build_fixture_tree(root)
    return root
