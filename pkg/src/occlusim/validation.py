"""Degradation measurement: windowed SSIM for images, retention and noise
statistics for point clouds.

SSIM runs on the luma plane with the canonical 11x11 Gaussian window
(sigma 1.5) and stabilizers K1=0.01, K2=0.03 over a dynamic range of 255;
window statistics use the valid region only, so borders never bias the score.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .core import RngStream
from .dataset_io import Modality, read_image, scan_dataset
from .errors import InputError, ShapeError
from .pointcloud import PointCloud, retained_count

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise InputError("SSIM stabilizers K1 and K2 must be positive")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise InputError(f"window size must be odd and >= 3, got {self.window_size}")


def luma_plane(img: np.ndarray) -> np.ndarray:
    """Weighted RGB-to-luma conversion in float64."""
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        r, g, b = LUMA_WEIGHTS
        planes = img.astype(np.float64)
        return r * planes[:, :, 0] + g * planes[:, :, 1] + b * planes[:, :, 2]
    raise ShapeError(f"expected (H, W) or (H, W, 3) array, got {img.shape}")


def _window_mean(plane: np.ndarray, weights: np.ndarray, half: int) -> np.ndarray:
    # Border rows/cols are dropped afterwards, so the padding mode is irrelevant.
    smoothed = correlate1d(plane, weights, axis=0, mode="nearest")
    smoothed = correlate1d(smoothed, weights, axis=1, mode="nearest")
    return smoothed[half:-half, half:-half]


def ssim(clean: np.ndarray, degraded: np.ndarray, params: SsimParams | None = None) -> float:
    """Mean local structural similarity over the luma plane; symmetric, in [-1, 1]."""
    params = params or SsimParams()
    if clean.shape != degraded.shape:
        raise ShapeError(f"image shapes differ: {clean.shape} vs {degraded.shape}")
    a = luma_plane(clean)
    b = luma_plane(degraded)
    size = params.window_size
    if a.shape[0] < size or a.shape[1] < size:
        raise ShapeError(f"images must be at least {size}x{size}, got {a.shape}")
    half = size // 2
    offsets = np.arange(size, dtype=np.float64) - half
    weights = np.exp(-(offsets**2) / (2.0 * params.window_sigma**2))
    weights /= weights.sum()

    mu_a = _window_mean(a, weights, half)
    mu_b = _window_mean(b, weights, half)
    e_aa = _window_mean(a * a, weights, half)
    e_bb = _window_mean(b * b, weights, half)
    e_ab = _window_mean(a * b, weights, half)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2
    score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


@dataclass(frozen=True)
class ChannelSsimStats:
    channel: str
    requested: int
    used: int
    mean_ssim: float

    @property
    def mean_drop(self) -> float:
        return 1.0 - self.mean_ssim

    @property
    def shortfall(self) -> int:
        return self.requested - self.used


@dataclass(frozen=True)
class SsimSummary:
    label: str
    channels: tuple[ChannelSsimStats, ...]
    pair_count: int
    mean_ssim: float

    @property
    def mean_drop(self) -> float:
        return 1.0 - self.mean_ssim


def batch_ssim(
    clean_root: Path | str,
    occluded_root: Path | str,
    samples_per_camera: int,
    rng: RngStream,
    label: str = "",
    params: SsimParams | None = None,
) -> SsimSummary:
    """Seeded per-channel sampling of clean/occluded pairs and their mean SSIM.

    Channels holding fewer files than requested contribute everything they
    have; the shortfall is visible in the per-channel stats.
    """
    if samples_per_camera < 1:
        raise InputError(f"samples_per_camera must be >= 1, got {samples_per_camera}")
    clean_entries = {
        e.relpath: e for e in scan_dataset(clean_root, {Modality.CAMERA})
    }
    occluded_entries = {
        e.relpath: e for e in scan_dataset(occluded_root, {Modality.CAMERA})
    }
    shared = sorted(set(clean_entries) & set(occluded_entries))
    if not shared:
        raise InputError(
            f"no matching camera pairs between {clean_root} and {occluded_root}"
        )
    by_channel: dict[str, list[str]] = {}
    for relpath in shared:
        by_channel.setdefault(clean_entries[relpath].sensor_channel, []).append(relpath)

    stats = []
    scores_all = []
    for channel in sorted(by_channel):
        relpaths = by_channel[channel]
        used = min(samples_per_camera, len(relpaths))
        picks = rng.child(f"ssim-{label}-{channel}").sample_without_replacement(
            len(relpaths), used
        )
        scores = []
        for i in picks:
            relpath = relpaths[int(i)]
            clean = read_image((Path(clean_root) / relpath).read_bytes())
            degraded = read_image((Path(occluded_root) / relpath).read_bytes())
            scores.append(ssim(clean, degraded, params))
        mean = float(np.mean(scores)) if scores else 1.0
        scores_all.extend(scores)
        stats.append(
            ChannelSsimStats(
                channel=channel, requested=samples_per_camera, used=used, mean_ssim=mean
            )
        )
    return SsimSummary(
        label=label,
        channels=tuple(stats),
        pair_count=len(scores_all),
        mean_ssim=float(np.mean(scores_all)),
    )


# ---------------------------------------------------------------------------
# Point cloud checks


def _record_matrix(cloud: PointCloud) -> np.ndarray:
    arr = np.ascontiguousarray(cloud.records)
    return arr.view(np.uint8).reshape(len(arr), arr.dtype.itemsize)


def _row_hashes(matrix: np.ndarray) -> np.ndarray:
    # Polynomial byte hash in 64-bit wraparound arithmetic; only used to find
    # candidate positions, actual bytes are always compared afterwards.
    width = matrix.shape[1]
    coeffs = [1]
    for _ in range(width - 1):
        coeffs.append((coeffs[-1] * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF)
    powers = np.array(coeffs, dtype=np.uint64)
    return (matrix.astype(np.uint64) * powers).sum(axis=1, dtype=np.uint64)


def is_record_subsequence(original: PointCloud, degraded: PointCloud) -> bool:
    """True iff the degraded records appear in the original, in order, bit-exact."""
    a = _record_matrix(original)
    b = _record_matrix(degraded)
    if a.shape[1] != b.shape[1]:
        return False
    if len(b) == 0:
        return True
    if len(b) > len(a):
        return False
    h_a = _row_hashes(a)
    h_b = _row_hashes(b)
    order = np.argsort(h_a, kind="stable")
    sorted_h = h_a[order]
    if sorted_h.size == np.unique(sorted_h).size:
        pos = np.searchsorted(sorted_h, h_b)
        if np.any(pos >= len(sorted_h)) or np.any(sorted_h[pos] != h_b):
            return False
        src = order[pos]
        if np.any(np.diff(src) <= 0):
            return False
        return bool(np.array_equal(a[src], b))
    # Duplicate records: greedy two-pointer on raw bytes.
    i = 0
    for j in range(len(b)):
        row = b[j]
        while i < len(a) and not np.array_equal(a[i], row):
            i += 1
        if i == len(a):
            return False
        i += 1
    return True


@dataclass(frozen=True)
class RetentionCheck:
    passed: bool
    expected: int
    actual: int
    subsequence_ok: bool
    message: str


def verify_retention(original: PointCloud, degraded: PointCloud, drop_percent: float) -> RetentionCheck:
    """Check the retention count formula and that records survived bit-exact, in order."""
    if original.records.dtype != degraded.records.dtype:
        raise InputError(
            f"schema mismatch: {original.records.dtype} vs {degraded.records.dtype}"
        )
    expected = retained_count(original.count, drop_percent)
    actual = degraded.count
    subsequence_ok = is_record_subsequence(original, degraded)
    count_ok = actual == expected
    if count_ok and subsequence_ok:
        message = "ok"
    elif not count_ok:
        message = f"expected {expected} retained points, found {actual}"
    else:
        message = "degraded records are not an ordered bit-exact subset of the original"
    return RetentionCheck(
        passed=count_ok and subsequence_ok,
        expected=expected,
        actual=actual,
        subsequence_ok=subsequence_ok,
        message=message,
    )


@dataclass(frozen=True)
class NoiseCheck:
    passed: bool
    sigma: float
    std: tuple[float, float, float]
    mean: tuple[float, float, float]
    nonspatial_ok: bool
    message: str


def verify_noise_stats(original: PointCloud, degraded: PointCloud, sigma: float) -> NoiseCheck:
    """Check per-axis displacement statistics against the declared noise level.

    Passes when each axis' sample std is within 5% of sigma, each mean is
    within 4*sigma/sqrt(N) of zero, and the non-spatial bytes are identical.
    The 5% std bound holds for N >= 10^4; below that the tolerance widens to
    four standard errors of the std estimator (~4/sqrt(2N)) so small sweeps
    do not fail on sampling noise alone. sigma = 0 demands bit equality.
    """
    if original.records.dtype != degraded.records.dtype:
        raise InputError(
            f"schema mismatch: {original.records.dtype} vs {degraded.records.dtype}"
        )
    if original.count != degraded.count:
        raise InputError(f"point counts differ: {original.count} vs {degraded.count}")

    spatial = ("x", "y", "z")
    nonspatial_ok = all(
        np.array_equal(original.records[name], degraded.records[name])
        for name in original.records.dtype.names
        if name not in spatial
    )
    if sigma == 0.0:
        identical = nonspatial_ok and all(
            np.array_equal(original.records[n], degraded.records[n]) for n in spatial
        )
        return NoiseCheck(
            passed=identical,
            sigma=0.0,
            std=(0.0, 0.0, 0.0),
            mean=(0.0, 0.0, 0.0),
            nonspatial_ok=nonspatial_ok,
            message="ok" if identical else "sigma is 0 but clouds differ",
        )
    n = original.count
    if n < 2:
        return NoiseCheck(
            passed=nonspatial_ok, sigma=sigma, std=(0.0, 0.0, 0.0),
            mean=(0.0, 0.0, 0.0), nonspatial_ok=nonspatial_ok,
            message="ok (too few points for displacement statistics)"
            if nonspatial_ok else "non-spatial fields were modified",
        )
    disp = degraded.xyz() - original.xyz()
    std = tuple(float(s) for s in disp.std(axis=0, ddof=1))
    mean = tuple(float(m) for m in disp.mean(axis=0))
    rel_tol = max(0.05, 4.0 / np.sqrt(2.0 * n))
    std_ok = all(abs(s - sigma) <= rel_tol * sigma for s in std)
    mean_bound = 4.0 * sigma / np.sqrt(n)
    mean_ok = all(abs(m) <= mean_bound for m in mean)
    passed = std_ok and mean_ok and nonspatial_ok
    if passed:
        message = "ok"
    elif not std_ok:
        message = f"per-axis std {std} outside {rel_tol:.0%} of sigma={sigma}"
    elif not mean_ok:
        message = f"per-axis mean {mean} outside +/-{mean_bound:.3g}"
    else:
        message = "non-spatial fields were modified"
    return NoiseCheck(
        passed=passed, sigma=sigma, std=std, mean=mean,
        nonspatial_ok=nonspatial_ok, message=message,
    )
