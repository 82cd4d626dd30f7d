"""Procedural occlusion textures and loading of external mask/texture directories.

External textures are single-channel images: interpreted as alpha in [0, 1]
for scratches, droplets, and dirt patches, or thresholded at 128 into binary
masks for soiling. When no texture directory is configured, every generator
falls back to a procedural, seed-deterministic equivalent.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .camera import OverlayLayer
from .core import RngStream
from .errors import DecodeError, ParameterError

SCRATCH_COLOR = 228.0
_TEXTURE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def load_alpha_texture(path: Path | str) -> np.ndarray:
    """Read a single-channel image as a [0, 1] alpha map."""
    try:
        with Image.open(path) as im:
            plane = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot read texture {path}: {exc}") from exc
    return plane / 255.0


def load_binary_mask(path: Path | str) -> np.ndarray:
    """Read a single-channel image and threshold it at 128 into {0, 1}."""
    try:
        with Image.open(path) as im:
            plane = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot read mask {path}: {exc}") from exc
    return (plane >= 128).astype(np.uint8)


def fit_to_frame(plane: np.ndarray, shape: tuple[int, int], rng: RngStream,
                 binary: bool = False) -> np.ndarray:
    """Scale a texture plane to the full frame with a random flip/quarter-turn."""
    h, w = shape
    turns = rng.index(4)
    flip = rng.random() < 0.5
    out = np.rot90(plane, turns)
    if flip:
        out = np.fliplr(out)
    if out.shape != (h, w):
        im = Image.fromarray((np.clip(out, 0.0, 1.0) * 255).astype(np.uint8) if not binary
                             else (out * 255).astype(np.uint8))
        resample = Image.BILINEAR if not binary else Image.NEAREST
        out = np.asarray(im.resize((w, h), resample), dtype=np.float64) / 255.0
    if binary:
        return (out >= 0.5).astype(np.uint8)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Procedural generators


def procedural_scratch_overlay(shape: tuple[int, int], rng: RngStream,
                               density: float = 1.0) -> OverlayLayer:
    """Thin polylines with soft alpha falloff, resembling lens scratches."""
    if density < 0:
        raise ParameterError(f"density must be >= 0, got {density}")
    h, w = shape
    ink = np.zeros((h, w), dtype=np.float64)
    diag = float(np.hypot(h, w))
    lines = max(1, int(round(3 + 9 * density)))
    for _ in range(lines):
        x0 = rng.random() * w
        y0 = rng.random() * h
        heading = rng.uniform(0.0, 2.0 * np.pi)
        length = rng.uniform(0.3, 1.2) * diag
        strength = rng.uniform(0.45, 0.95)
        steps = max(2, int(length / 0.6))
        turns = rng.uniform(-0.02, 0.02, steps).cumsum() + heading
        xs = x0 + np.cos(turns).cumsum() * 0.6
        ys = y0 + np.sin(turns).cumsum() * 0.6
        xi = np.round(xs).astype(np.int64)
        yi = np.round(ys).astype(np.int64)
        keep = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        np.maximum.at(ink, (yi[keep], xi[keep]), strength)
    alpha = np.clip(gaussian_filter(ink, sigma=0.7) * 2.0, 0.0, 1.0)
    color = np.full((h, w, 3), SCRATCH_COLOR)
    return OverlayLayer(color=color, alpha=alpha)


def procedural_soiling_mask(shape: tuple[int, int], rng: RngStream,
                            coverage: float = 0.35) -> np.ndarray:
    """Binary soiling footprint from thresholded smooth noise."""
    if not 0.0 < coverage < 1.0:
        raise ParameterError(f"coverage must be in (0, 1), got {coverage}")
    h, w = shape
    field = gaussian_filter(rng.random((h, w)), sigma=max(2.0, min(h, w) / 12.0))
    threshold = np.quantile(field, 1.0 - coverage)
    return (field >= threshold).astype(np.uint8)


class TextureBank:
    """Resolves occlusion source textures, external when available, procedural otherwise.

    Layout of an external texture root (every subdirectory optional)::

        <root>/scratch/*.png   alpha textures
        <root>/soiling/*.png   binary masks (thresholded at 128)
        <root>/droplet/*.png   droplet alpha patches
        <root>/dirt/*.png      dirt patch alphas
    """

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self._scratch = self._listing("scratch")
        self._soiling = self._listing("soiling")
        self._droplet = self._listing("droplet")
        self._dirt = self._listing("dirt")

    def _listing(self, name: str) -> list[Path]:
        if self.root is None:
            return []
        sub = self.root / name
        if not sub.is_dir():
            return []
        return sorted(p for p in sub.iterdir() if p.suffix.lower() in _TEXTURE_SUFFIXES)

    def dirt_patches(self) -> list[np.ndarray] | None:
        if not self._dirt:
            return None
        return [load_alpha_texture(p) for p in self._dirt]

    def droplet_patches(self) -> list[np.ndarray] | None:
        if not self._droplet:
            return None
        return [load_alpha_texture(p) for p in self._droplet]

    def scratch_overlay(self, shape: tuple[int, int], opacity: float,
                        rng: RngStream) -> OverlayLayer:
        """Severity (via opacity) selects the texture rank or the procedural density."""
        if not self._scratch:
            return procedural_scratch_overlay(shape, rng, density=opacity / 0.3)
        rank = min(len(self._scratch) - 1, int(round(opacity / 0.3 * (len(self._scratch) - 1))))
        alpha = fit_to_frame(load_alpha_texture(self._scratch[rank]), shape, rng)
        color = np.full((*shape, 3), SCRATCH_COLOR)
        return OverlayLayer(color=color, alpha=alpha)

    def soiling_mask(self, shape: tuple[int, int], rng: RngStream) -> np.ndarray:
        if not self._soiling:
            return procedural_soiling_mask(shape, rng)
        path = self._soiling[rng.index(len(self._soiling))]
        return fit_to_frame(load_binary_mask(path).astype(np.float64), shape, rng, binary=True)
