"""Region-specific editing: relevance map, guidance map, thresholding, masked sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diffusion import (
    Denoiser,
    GuidanceScales,
    NoiseSchedule,
    add_noise,
    sample,
    seeded_noise,
)
from .imaging import as_gray, normalize_map
from .maskreg import MaskRegistry, fit_to_canvas, resolve_pseudo_mask, user_mask_override

# fixed sub-stream offsets under the run seed
RELEVANCE_NOISE = 1
SAMPLING_NOISE = 2


@dataclass(frozen=True)
class EditConfig:
    tau: float = 0.1
    scales: GuidanceScales = field(default_factory=GuidanceScales)
    t_rel: int = 500
    steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.t_rel < 1:
            raise ValueError("t_rel must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class EditResult:
    image: np.ndarray
    relevance: np.ndarray
    guidance: np.ndarray
    mask: np.ndarray
    pseudo_mask: np.ndarray


def relevance_map(
    image: np.ndarray,
    text: tuple,
    t_rel: int,
    seed: int,
    denoiser: Denoiser,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Normalised |eps(z, I, T) - eps(z, I, "")| at a single noised state."""
    t_rel = sched.check_step(t_rel, allow_zero=False)
    eps = seeded_noise(seed, RELEVANCE_NOISE, image.shape)
    z = add_noise(image, eps, t_rel, sched)
    diff = np.abs(denoiser(z, t_rel, image, tuple(text)) - denoiser(z, t_rel, image, ()))
    return normalize_map(diff)


def guidance_map(relevance: np.ndarray, pseudo_mask: np.ndarray) -> np.ndarray:
    relevance = np.asarray(relevance, dtype=np.float64)
    pseudo_mask = np.asarray(pseudo_mask, dtype=np.float64)
    if relevance.shape != pseudo_mask.shape:
        raise ValueError(f"shape mismatch {relevance.shape} vs {pseudo_mask.shape}")
    return pseudo_mask * relevance


def binarize(guidance: np.ndarray, tau: float) -> np.ndarray:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    return (np.asarray(guidance) >= tau).astype(np.float64)


def pseudo_mask_for(
    text: tuple,
    shape: tuple[int, int],
    registry: Optional[MaskRegistry] = None,
    user_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    h, w = shape
    if user_mask is not None:
        return user_mask_override(user_mask, w, h)
    if registry is None:
        return np.ones(shape)
    return fit_to_canvas(resolve_pseudo_mask(registry, text), w, h)


def edit(
    image: np.ndarray,
    text: tuple,
    cfg: EditConfig,
    denoiser: Denoiser,
    sched: NoiseSchedule,
    registry: Optional[MaskRegistry] = None,
    user_mask: Optional[np.ndarray] = None,
) -> EditResult:
    """Edit ``image`` per ``text`` while pinning every pixel outside the edit mask.

    The relevance map is computed once, gated by the pseudo mask (or the
    user mask when given) and thresholded at ``cfg.tau``. During sampling,
    pixels outside the binary mask are reset after every step to the input
    noised with one fixed per-run draw, so at ``t = 0`` they equal the input.
    """
    image = as_gray(image)
    text = tuple(text)
    pseudo = pseudo_mask_for(text, image.shape, registry, user_mask)
    relevance = relevance_map(image, text, cfg.t_rel, cfg.seed, denoiser, sched)
    guidance = guidance_map(relevance, pseudo)
    mask = binarize(guidance, cfg.tau)
    keep = mask == 1.0

    eps = seeded_noise(cfg.seed, SAMPLING_NOISE, image.shape)

    def pin(z, t):
        return np.where(keep, z, add_noise(image, eps, t, sched))

    z_T = add_noise(image, eps, sched.T, sched)
    z0 = sample(z_T, image, text, cfg.scales, denoiser, sched, cfg.steps, on_step=pin)
    return EditResult(np.clip(z0, 0.0, 1.0), relevance, guidance, mask, pseudo)
