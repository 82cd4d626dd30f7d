"""Camera lens occlusions: dirt buildup, water blur, scratches, and soiling haze.

All operations take and return 8-bit RGB arrays of shape (H, W, 3). Arithmetic
is carried out in float64 and quantized once at the end, rounding halves away
from zero. The additive dirt model clips into [0, 255]; the convex blends
(water blur, scratch) cannot leave the range and are written back unclipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve as _ndi_convolve
from scipy.ndimage import correlate1d

from .core import RngStream
from .errors import ParameterError, ShapeError

# Base intensity of the three dirt strata, before brightness weighting and opacity.
DIRT_LAYER_AMPLITUDES = (40.0, 80.0, 120.0)
DIRT_GRID = 10
DIRT_BRIGHTNESS_FLOOR = 0.25
DEFAULT_WATER_KERNEL_SIZE = 15


@dataclass(frozen=True)
class OverlayLayer:
    """A color layer plus a per-pixel blend weight in [0, 1]."""

    color: np.ndarray  # (H, W, 3), values in [0, 255]
    alpha: np.ndarray  # (H, W), values in [0, 1]

    def __post_init__(self):
        if self.color.ndim != 3 or self.color.shape[2] != 3:
            raise ShapeError(f"overlay color must be (H, W, 3), got {self.color.shape}")
        if self.alpha.shape != self.color.shape[:2]:
            raise ShapeError(
                f"overlay alpha {self.alpha.shape} does not match color {self.color.shape[:2]}"
            )
        if self.alpha.size and (self.alpha.min() < 0.0 or self.alpha.max() > 1.0):
            raise ParameterError("overlay alpha values must lie in [0, 1]")
        if self.color.size and (self.color.min() < 0 or self.color.max() > 255):
            raise ParameterError("overlay color values must lie in [0, 255]")


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate an 8-bit RGB buffer."""
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"image must be an (H, W, 3) array, got {getattr(img, 'shape', type(img))}")
    if img.dtype != np.uint8:
        raise ShapeError(f"image must be uint8, got {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeError(f"image must be non-empty, got {img.shape}")
    return img


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero (np.round rounds to even)."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def _quantize(values: np.ndarray, clip: bool) -> np.ndarray:
    if clip:
        values = np.clip(values, 0.0, 255.0)
    # every op feeds nonnegative values here (clipped, or a convex blend of
    # nonnegative data under a nonnegative kernel), so half-away-from-zero
    # reduces to floor(x + 0.5)
    return np.floor(values + 0.5).astype(np.uint8)


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    if size < 3 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 3, got {size}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Discrete 2-D Gaussian sampled at integer offsets, normalized to sum 1."""
    if size < 3 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 3, got {size}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    xx, yy = np.meshgrid(offsets, offsets)
    w = np.exp(-(xx**2 + yy**2) / (2.0 * sigma * sigma))
    return w / w.sum()


def identity_kernel(size: int = 1) -> np.ndarray:
    """Kernel with a single center weight of 1 (convolution is a no-op)."""
    if size % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {size}")
    k = np.zeros((size, size), dtype=np.float64)
    k[size // 2, size // 2] = 1.0
    return k


def _check_kernel(kernel: np.ndarray) -> np.ndarray:
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ParameterError(f"kernel must be odd and square, got shape {kernel.shape}")
    if abs(float(kernel.sum()) - 1.0) > 1e-6:
        raise ParameterError(f"kernel weights must sum to 1, got {kernel.sum()}")
    if kernel.min() < 0.0:
        # nonnegative weights keep the convolution inside [0, 255], which is
        # what lets the blend stages skip clipping
        raise ParameterError("kernel weights must be nonnegative")
    return kernel.astype(np.float64)


def convolve_rgb(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D convolution with replicate-edge padding, in float64."""
    kernel = _check_kernel(kernel)
    planes = img.astype(np.float64)
    out = np.empty_like(planes)
    for c in range(3):
        out[:, :, c] = _ndi_convolve(planes[:, :, c], kernel, mode="nearest")
    return out


def separable_gaussian_blur(plane: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """Gaussian blur as two 1-D passes; identical to the 2-D kernel up to float error."""
    w = gaussian_kernel_1d(size, sigma)
    tmp = correlate1d(plane.astype(np.float64), w, axis=0, mode="nearest")
    return correlate1d(tmp, w, axis=1, mode="nearest")


# ---------------------------------------------------------------------------
# Dirt


def grid_cells(height: int, width: int, grid: int = DIRT_GRID) -> list[tuple[int, int, int, int]]:
    """Non-empty (y0, y1, x0, x1) cell bounds of the patch placement grid."""
    cells = []
    for gy in range(grid):
        for gx in range(grid):
            y0, y1 = gy * height // grid, (gy + 1) * height // grid
            x0, x1 = gx * width // grid, (gx + 1) * width // grid
            if y1 > y0 and x1 > x0:
                cells.append((y0, y1, x0, x1))
    return cells


def _stamp_blob(layer: np.ndarray, cx: float, cy: float, rx: float, ry: float,
                theta: float, amplitude: float) -> None:
    """Max-composite one soft rotated ellipse into the layer."""
    h, w = layer.shape
    reach = max(rx, ry)
    x0 = max(0, int(np.floor(cx - reach)))
    x1 = min(w, int(np.ceil(cx + reach)) + 1)
    y0 = max(0, int(np.floor(cy - reach)))
    y1 = min(h, int(np.ceil(cy + reach)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dx = xs - cx
    dy = ys - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = (dx * ct + dy * st) / rx
    v = (-dx * st + dy * ct) / ry
    alpha = np.clip(1.0 - (u * u + v * v), 0.0, 1.0) ** 1.5
    region = layer[y0:y1, x0:x1]
    np.maximum(region, amplitude * alpha, out=region)


def _stamp_texture(layer: np.ndarray, patch: np.ndarray, cx: float, cy: float,
                   radius: float, theta: float, amplitude: float) -> None:
    """Max-composite an external alpha patch, rotated and scaled, into the layer."""
    from scipy.ndimage import affine_transform

    h, w = layer.shape
    side = int(np.ceil(2 * radius)) + 1
    if side < 2:
        return
    scale = max(patch.shape) / (2.0 * radius)
    ct, st = np.cos(theta), np.sin(theta)
    matrix = np.array([[ct, -st], [st, ct]]) * scale
    center_out = (side - 1) / 2.0
    center_in = (np.array(patch.shape, dtype=np.float64) - 1) / 2.0
    offset = center_in - matrix @ np.array([center_out, center_out])
    stamped = affine_transform(patch.astype(np.float64), matrix, offset=offset,
                               output_shape=(side, side), order=1, mode="constant", cval=0.0)
    x0 = int(np.floor(cx - center_out))
    y0 = int(np.floor(cy - center_out))
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1 = min(w, x0 + side)
    dy1 = min(h, y0 + side)
    if dx0 >= dx1 or dy0 >= dy1:
        return
    piece = stamped[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]
    region = layer[dy0:dy1, dx0:dx1]
    np.maximum(region, amplitude * np.clip(piece, 0.0, 1.0), out=region)


def generate_dirt_layers(
    img: np.ndarray,
    rng: RngStream,
    density: float = 0.5,
    patch_alphas: list[np.ndarray] | None = None,
) -> list[np.ndarray]:
    """Build the three dirt strata for an image.

    The frame is divided into a 10x10 grid; each cell independently receives a
    randomly scaled, rotated and offset patch with probability ``density``. A
    patch's amplitude is its stratum base value times the local brightness
    weight ``clamp(mean_luma / 255, 0.25, 1.0)`` of its cell.

    Parameters
    ----------
    img : (H, W, 3) uint8
    rng : RngStream, consumed deterministically
    density : per-cell patch probability
    patch_alphas : optional external patch textures (each (h, w) in [0, 1]);
        when absent, soft procedural blobs are stamped instead.
    """
    check_image(img)
    h, w = img.shape[:2]
    luma = img.astype(np.float64).mean(axis=2)
    layers = []
    for k, amplitude in enumerate(DIRT_LAYER_AMPLITUDES):
        stream = rng.child(f"dirt-layer-{k}")
        layer = np.zeros((h, w), dtype=np.float64)
        for y0, y1, x0, x1 in grid_cells(h, w):
            if stream.random() >= density:
                continue
            weight = float(
                np.clip(luma[y0:y1, x0:x1].mean() / 255.0, DIRT_BRIGHTNESS_FLOOR, 1.0)
            )
            cw, ch = x1 - x0, y1 - y0
            cx = x0 + stream.random() * cw
            cy = y0 + stream.random() * ch
            cell = min(cw, ch)
            if patch_alphas:
                patch = patch_alphas[stream.index(len(patch_alphas))]
                radius = max(1.0, 0.55 * cell * stream.uniform(0.5, 1.5))
                theta = stream.uniform(0.0, 2.0 * np.pi)
                _stamp_texture(layer, patch, cx, cy, radius, theta, amplitude * weight)
            else:
                blobs = 1 + stream.index(3)
                for _ in range(blobs):
                    bx = cx + stream.uniform(-0.3, 0.3) * cw
                    by = cy + stream.uniform(-0.3, 0.3) * ch
                    rx = max(1.0, 0.45 * cell * stream.uniform(0.5, 1.5))
                    ry = max(1.0, rx * stream.uniform(0.4, 1.0))
                    theta = stream.uniform(0.0, np.pi)
                    _stamp_blob(layer, bx, by, rx, ry, theta, amplitude * weight)
        layers.append(layer)
    return layers


def apply_dirt(
    img: np.ndarray,
    opacity: float,
    rng: RngStream,
    layers: list[np.ndarray] | None = None,
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> np.ndarray:
    """Additive dirt: out = clip(img + opacity * tint * sum(layers), 0, 255).

    The default tint is neutral (grayscale deposits); per-channel weights in
    [0, 1] shade the deposits, e.g. (1.0, 0.8, 0.6) for a brownish cast.
    """
    check_image(img)
    if not 0.0 <= opacity <= 1.0:
        raise ParameterError(f"opacity must be in [0, 1], got {opacity}")
    if len(tint) != 3 or any(not 0.0 <= t <= 1.0 for t in tint):
        raise ParameterError(f"tint must be three weights in [0, 1], got {tint}")
    if layers is None:
        layers = generate_dirt_layers(img, rng)
    if len(layers) != 3:
        raise ParameterError(f"expected 3 dirt layers, got {len(layers)}")
    total = np.zeros(img.shape[:2], dtype=np.float64)
    for layer in layers:
        if layer.shape != img.shape[:2]:
            raise ShapeError(f"layer shape {layer.shape} does not match image {img.shape[:2]}")
        if layer.size and layer.min() < 0:
            raise ParameterError("dirt layers must be nonnegative")
        total += layer
    out = img.astype(np.float64) + opacity * total[:, :, None] * np.asarray(tint)
    return _quantize(out, clip=True)


# ---------------------------------------------------------------------------
# Water blur


def droplet_blur_kernel(rng: RngStream, size: int = DEFAULT_WATER_KERNEL_SIZE) -> np.ndarray:
    """Directional blur kernel from an elongated droplet footprint.

    The footprint is an anisotropic Gaussian streak, rotated by a uniform angle
    in [0, 360) degrees and scaled by a uniform factor in [0.75, 1.5], then
    renormalized to sum 1.
    """
    if size < 3 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 3, got {size}")
    theta = rng.uniform(0.0, 2.0 * np.pi)
    scale = rng.uniform(0.75, 1.5)
    sx = 0.16 * size * scale
    sy = sx * rng.uniform(0.25, 0.6)
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    xx, yy = np.meshgrid(offsets, offsets)
    ct, st = np.cos(theta), np.sin(theta)
    u = xx * ct + yy * st
    v = -xx * st + yy * ct
    w = np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    return w / w.sum()


def droplet_overlay(
    shape: tuple[int, int],
    rng: RngStream,
    droplet_alphas: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Droplet obstruction image: soft bright discs over a flat haze background.

    Returns (H, W, 3) float64 in [0, 255].
    """
    h, w = shape
    overlay = np.full((h, w), 185.0)
    count = 8 + rng.index(9)
    for _ in range(count):
        cx = rng.random() * w
        cy = rng.random() * h
        radius = max(1.5, rng.uniform(0.02, 0.09) * min(h, w))
        value = rng.uniform(120.0, 235.0)
        if droplet_alphas:
            patch = droplet_alphas[rng.index(len(droplet_alphas))]
            theta = rng.uniform(0.0, 2.0 * np.pi)
            stamp = np.zeros_like(overlay)
            _stamp_texture(stamp, patch, cx, cy, radius, theta, 1.0)
            overlay = overlay * (1.0 - stamp) + value * stamp
        else:
            x0 = max(0, int(cx - radius - 1))
            x1 = min(w, int(cx + radius + 2))
            y0 = max(0, int(cy - radius - 1))
            y1 = min(h, int(cy + radius + 2))
            if x0 >= x1 or y0 >= y1:
                continue
            ys, xs = np.mgrid[y0:y1, x0:x1]
            d2 = ((xs - cx) ** 2 + (ys - cy) ** 2) / (radius * radius)
            alpha = np.clip(1.0 - d2, 0.0, 1.0) ** 1.2
            overlay[y0:y1, x0:x1] = overlay[y0:y1, x0:x1] * (1.0 - alpha) + value * alpha
    return np.repeat(overlay[:, :, None], 3, axis=2)


def apply_water_blur(
    img: np.ndarray,
    opacity: float,
    rng: RngStream,
    kernel: np.ndarray | None = None,
    overlay: np.ndarray | None = None,
) -> np.ndarray:
    """Directional blur then convex blend with a droplet overlay.

    out = (1 - opacity) * (img ⊛ kernel) + opacity * overlay, per channel.
    The blend is convex, so no clipping is required.
    """
    check_image(img)
    if not 0.0 <= opacity <= 1.0:
        raise ParameterError(f"opacity must be in [0, 1], got {opacity}")
    if kernel is None:
        kernel = droplet_blur_kernel(rng)
    if overlay is None:
        overlay = droplet_overlay(img.shape[:2], rng)
    overlay = np.asarray(overlay, dtype=np.float64)
    if overlay.ndim == 2:
        overlay = overlay[:, :, None]
    if overlay.shape[:2] != img.shape[:2]:
        raise ShapeError(f"overlay shape {overlay.shape[:2]} does not match image {img.shape[:2]}")
    if overlay.size and (overlay.min() < 0 or overlay.max() > 255):
        raise ParameterError("overlay values must lie in [0, 255]")
    blurred = convolve_rgb(img, kernel)
    out = (1.0 - opacity) * blurred + opacity * overlay
    return _quantize(out, clip=False)


# ---------------------------------------------------------------------------
# Scratch


def apply_scratch(img: np.ndarray, overlay: OverlayLayer) -> np.ndarray:
    """Per-pixel convex blend with a scratch texture.

    out(x, y) = (1 - a(x, y)) * img(x, y) + a(x, y) * color(x, y); the blend
    weight comes from the texture, so no clipping is required.
    """
    check_image(img)
    if overlay.color.shape[:2] != img.shape[:2]:
        raise ShapeError(
            f"overlay dims {overlay.color.shape[:2]} do not match image {img.shape[:2]}"
        )
    alpha = overlay.alpha[:, :, None]
    out = (1.0 - alpha) * img.astype(np.float64) + alpha * overlay.color.astype(np.float64)
    return _quantize(out, clip=False)


# ---------------------------------------------------------------------------
# Soiling


def apply_soiling(img: np.ndarray, mask: np.ndarray, kernel_size: int) -> np.ndarray:
    """Translucent haze over masked regions.

    The binary mask is softened into weights m = G ⊛ mask with a Gaussian of
    sigma = kernel_size / 6; the output recombines the untouched content with
    the blurred masked content:

        out = img * (1 - m) + G ⊛ (img * m)
    """
    check_image(img)
    if kernel_size % 2 == 0 or kernel_size < 3:
        raise ParameterError(f"kernel_size must be odd and >= 3, got {kernel_size}")
    mask = np.asarray(mask)
    if mask.shape != img.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    values = np.unique(mask)
    if not np.all(np.isin(values, (0, 1))):
        raise ParameterError("soiling mask must be binary (values 0 and 1)")
    sigma = kernel_size / 6.0
    weights = separable_gaussian_blur(mask.astype(np.float64), kernel_size, sigma)
    planes = img.astype(np.float64)
    out = np.empty_like(planes)
    for c in range(3):
        masked = planes[:, :, c] * weights
        blurred = separable_gaussian_blur(masked, kernel_size, sigma)
        out[:, :, c] = planes[:, :, c] * (1.0 - weights) + blurred
    return _quantize(out, clip=True)
