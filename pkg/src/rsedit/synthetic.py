"""Deterministic synthetic fixtures: smooth phantoms, noise, default world and registry."""

from __future__ import annotations

import numpy as np

# findings carrying box annotations in the reference data
ANNOTATED_FINDINGS = (
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "lung_opacity",
    "pleural_effusion",
    "pneumonia",
    "pneumothorax",
)

# (cx, cy, radius) as fractions of the canvas; boxes follow the same layout
_LAYOUT = {
    "atelectasis": (0.30, 0.68, 0.09),
    "cardiomegaly": (0.55, 0.62, 0.12),
    "consolidation": (0.70, 0.60, 0.09),
    "edema": (0.50, 0.45, 0.16),
    "lung_opacity": (0.32, 0.40, 0.10),
    "pleural_effusion": (0.25, 0.80, 0.08),
    "pneumonia": (0.72, 0.38, 0.09),
    "pneumothorax": (0.70, 0.22, 0.08),
}


def smooth_image(rng: np.random.Generator, size: int, n_blobs: int = 6) -> np.ndarray:
    """Sum of anisotropic Gaussians on a dark background, scaled into [0, 1].

    Blob centres stay in the central part of the canvas so the image is
    near zero at the border, which matches zero-filled warps.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(n_blobs):
        cx, cy = rng.uniform(0.3, 0.7, size=2) * size
        sx, sy = rng.uniform(0.06, 0.14, size=2) * size
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = c * (xs - cx) + s * (ys - cy)
        v = -s * (xs - cx) + c * (ys - cy)
        img += rng.uniform(0.3, 1.0) * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))
    return img / img.max() * 0.95


def noise_image(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(size, size))


def phantom(size: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Chest-radiograph-like phantom: two dark lung fields in a brighter body."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) / size
    body = np.exp(-(((xs - 0.5) / 0.42) ** 4 + ((ys - 0.55) / 0.48) ** 4))
    lungs = np.zeros_like(body)
    for cx in (0.32, 0.68):
        lungs += np.exp(-(((xs - cx) / 0.14) ** 2 + ((ys - 0.5) / 0.28) ** 2))
    img = 0.15 + 0.45 * body - 0.25 * lungs
    if rng is not None:
        img = img + rng.normal(0.0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def default_world_json(size: int) -> dict:
    findings = {}
    for name, (cx, cy, r) in _LAYOUT.items():
        findings[name] = {
            "center": [round(cx * size, 3), round(cy * size, 3)],
            "radius": round(r * size, 3),
            "amplitude": 0.08,
        }
    return {"findings": findings}


def default_registry_json(size: int) -> dict:
    findings = {}
    for name, (cx, cy, r) in _LAYOUT.items():
        # two overlapping boxes per finding, as if from two annotators
        a = [cx - 1.2 * r, cy - 1.1 * r, cx + 1.0 * r, cy + 1.2 * r]
        b = [cx - 1.0 * r, cy - 1.3 * r, cx + 1.3 * r, cy + 1.0 * r]
        boxes = []
        for box in (a, b):
            x0, y0, x1, y1 = (int(round(min(max(v, 0.0), 1.0) * size)) for v in box)
            boxes.append([x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)])
        findings[name] = boxes
    return {"width": size, "height": size, "findings": findings}
