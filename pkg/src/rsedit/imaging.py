"""Single-channel image grids, resampling, bilateral smoothing and file I/O.

Images and latents are plain 2-D ``float64`` numpy arrays indexed ``[y, x]``.
Images live in ``[0, 1]``; latents (noise, relevance, guidance) carry no
range restriction beyond being finite.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

MAP_KINDS = ("latent", "relevance", "guidance", "mask")


class ImageError(ValueError):
    """Raised for malformed image grids or invalid image parameters."""


def as_latent(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ImageError(f"expected a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ImageError("grid contains non-finite values")
    return arr


def as_gray(data) -> np.ndarray:
    """Validate and copy ``data`` into a gray image (finite, within [0, 1])."""
    arr = as_latent(data)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ImageError(
            f"gray image values must lie in [0, 1], got [{arr.min()}, {arr.max()}]"
        )
    return arr


def normalize_map(m: np.ndarray) -> np.ndarray:
    """Divide a non-negative map by its maximum; all-zero maps stay zero."""
    m = as_latent(m)
    if m.min() < 0.0:
        raise ImageError("normalize_map expects non-negative values")
    peak = m.max()
    if peak == 0.0:
        return np.zeros_like(m)
    # peak / peak is exactly 1.0, so the maximum lands on 1 without rounding
    return m / peak


def bilateral_filter(
    img: np.ndarray, sigma_domain: float = 2.0, sigma_range: float = 50.0
) -> np.ndarray:
    """Edge-preserving bilateral smoothing.

    Parameters
    ----------
    img : ndarray
        Gray image in [0, 1].
    sigma_domain : float
        Spatial Gaussian std dev in pixels. The square window has radius
        ``ceil(3 * sigma_domain)``.
    sigma_range : float
        Range Gaussian std dev, measured on the 0-255 intensity scale.

    Returns
    -------
    ndarray
        Filtered image with the same shape. Neighbours falling outside the
        image get zero weight and each pixel's kernel is renormalised.
    """
    img = as_latent(img)
    if not sigma_domain > 0 or not sigma_range > 0:
        raise ImageError("bilateral sigmas must be positive")
    radius = int(math.ceil(3.0 * sigma_domain))
    h, w = img.shape
    padded = np.pad(img, radius, mode="edge")
    inside = np.pad(np.ones_like(img), radius, mode="constant", constant_values=0.0)
    scaled_var = 2.0 * (sigma_range / 255.0) ** 2
    spatial_var = 2.0 * sigma_domain**2

    num = np.zeros_like(img)
    den = np.zeros_like(img)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            ys = slice(radius + dy, radius + dy + h)
            xs = slice(radius + dx, radius + dx + w)
            diff = padded[ys, xs] - img
            weight = (
                math.exp(-(dx * dx + dy * dy) / spatial_var)
                * np.exp(-(diff * diff) / scaled_var)
                * inside[ys, xs]
            )
            # accumulate offsets from the centre pixel so constant
            # neighbourhoods reproduce the input exactly
            num += weight * diff
            den += weight
    out = img + num / den
    return np.clip(out, img.min(), img.max())


def _axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-centre alignment."""
    img = as_latent(img)
    if width <= 0 or height <= 0:
        raise ImageError(f"target size must be positive, got {width}x{height}")
    h, w = img.shape
    if (w, h) == (width, height):
        return img.copy()
    y0, y1, wy = _axis_coords(height, h)
    x0, x1, wx = _axis_coords(width, w)
    rows = img[y0, :] + wy[:, None] * (img[y1, :] - img[y0, :])
    return rows[:, x0] + wx[None, :] * (rows[:, x1] - rows[:, x0])


def resize_nearest(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resampling; keeps binary masks binary."""
    mask = np.asarray(mask)
    h, w = mask.shape
    if (w, h) == (width, height):
        return mask.copy()
    ys = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.intp), w - 1)
    return mask[np.ix_(ys, xs)]


def quantize(img: np.ndarray) -> np.ndarray:
    """Values an image takes after an 8-bit PNG round-trip."""
    return to_uint8(img).astype(np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def atomic_write(path: Path, write) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_png(path, img: np.ndarray) -> None:
    """Write an 8-bit grayscale PNG (values clipped to [0, 1] first)."""
    pil = Image.fromarray(to_uint8(as_latent(img)), mode="L")
    atomic_write(Path(path), lambda fh: pil.save(fh, format="PNG"))


def write_rgb_png(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageError(f"expected an (h, w, 3) array, got {rgb.shape}")
    data = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    pil = Image.fromarray(data, mode="RGB")
    atomic_write(Path(path), lambda fh: pil.save(fh, format="PNG"))


def read_png(path) -> np.ndarray:
    """Read a PNG as a gray image in [0, 1]; colour inputs are converted to L."""
    with Image.open(path) as pil:
        if pil.mode != "L":
            pil = pil.convert("L")
        data = np.asarray(pil, dtype=np.uint8)
    return data.astype(np.float64) / 255.0


def render_overlay(img: np.ndarray, guidance: np.ndarray, alpha: float = 0.6) -> np.ndarray:
    """Blend a guidance map over a gray image as a red overlay, returns RGB."""
    img = np.clip(as_latent(img), 0.0, 1.0)
    g = np.clip(as_latent(guidance), 0.0, 1.0) * alpha
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    red = np.array([1.0, 0.0, 0.0])
    return rgb * (1.0 - g[:, :, None]) + red * g[:, :, None]


def write_raw(path, grid: np.ndarray, kind: str) -> tuple[Path, Path]:
    """Persist a map as little-endian float32 plus a JSON sidecar.

    ``path`` names the ``.bin`` file; the sidecar sits next to it with a
    ``.json`` suffix. Returns both paths.
    """
    if kind not in MAP_KINDS:
        raise ImageError(f"unknown map kind {kind!r}; expected one of {MAP_KINDS}")
    grid = as_latent(grid)
    bin_path = Path(path)
    meta_path = bin_path.with_suffix(".json")
    h, w = grid.shape
    payload = np.ascontiguousarray(grid, dtype="<f4").tobytes()
    meta = json.dumps({"width": w, "height": h, "kind": kind}, sort_keys=True) + "\n"
    atomic_write(bin_path, lambda fh: fh.write(payload))
    atomic_write(meta_path, lambda fh: fh.write(meta.encode("ascii")))
    return bin_path, meta_path


def read_raw(path) -> tuple[np.ndarray, str]:
    bin_path = Path(path)
    meta = json.loads(bin_path.with_suffix(".json").read_text())
    w, h, kind = int(meta["width"]), int(meta["height"]), meta["kind"]
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    if raw.size != w * h:
        raise ImageError(f"{bin_path}: expected {w * h} floats, found {raw.size}")
    return raw.reshape(h, w).astype(np.float64), kind
