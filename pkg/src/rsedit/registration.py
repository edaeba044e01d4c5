"""Rigid registration of image pairs by mutual-information search.

A transform maps input coordinates ``q`` to output coordinates
``c + scale * R(angle) @ (q - c) + (tx, ty)`` where ``c`` is the image
centre. ``apply_rigid`` resamples by inverse warping.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .imaging import as_latent

DEFAULT_MI_THRESHOLD = -0.88
DEFAULT_BINS = 64


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class RigidTransform:
    angle: float = 0.0  # radians
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        vals = (self.angle, self.scale, self.tx, self.ty)
        if not all(math.isfinite(v) for v in vals):
            raise RegistrationError(f"non-finite transform parameters {vals}")
        if self.scale <= 0:
            raise RegistrationError("scale must be positive")
        # wrap into (-pi, pi]
        a = math.remainder(self.angle, 2 * math.pi)
        if a == -math.pi:
            a = math.pi
        object.__setattr__(self, "angle", a)

    @property
    def is_identity(self) -> bool:
        return self.angle == 0.0 and self.scale == 1.0 and self.tx == 0.0 and self.ty == 0.0

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return self.scale * np.array([[c, -s], [s, c]])

    def inverse(self) -> "RigidTransform":
        inv = np.linalg.inv(self.matrix())
        t = -inv @ np.array([self.tx, self.ty])
        return RigidTransform(-self.angle, 1.0 / self.scale, float(t[0]), float(t[1]))

    def as_list(self) -> list[float]:
        return [self.angle, self.scale, self.tx, self.ty]


IDENTITY = RigidTransform()


def _sample(
    img: np.ndarray, t: RigidTransform, xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample ``img`` at the pre-images of the grid ``ys x xs``."""
    h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    inv = np.linalg.inv(t.matrix())
    px = xs - cx - t.tx
    py = ys - cy - t.ty
    qx = (inv[0, 0] * px)[None, :] + (inv[0, 1] * py)[:, None] + cx
    qy = (inv[1, 0] * px)[None, :] + (inv[1, 1] * py)[:, None] + cy
    eps = 1e-9
    valid = (qx >= -eps) & (qx <= w - 1 + eps) & (qy >= -eps) & (qy <= h - 1 + eps)
    np.clip(qx, 0.0, w - 1, out=qx)
    np.clip(qy, 0.0, h - 1, out=qy)
    x0 = np.minimum(qx.astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(qy.astype(np.intp), max(h - 2, 0))
    fx = qx - x0
    fy = qy - y0
    dx = 1 if w > 1 else 0
    dy = w if h > 1 else 0
    flat = img.ravel()
    i = y0 * w + x0
    a, b = flat[i], flat[i + dx]
    c, d = flat[i + dy], flat[i + dy + dx]
    top = a + fx * (b - a)
    bot = c + fx * (d - c)
    out = top + fy * (bot - top)
    out[~valid] = 0.0
    return out, valid


def warp(img: np.ndarray, t: RigidTransform) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``img`` by ``t``; returns the image and its in-bounds mask."""
    img = as_latent(img)
    if t.is_identity:
        return img.copy(), np.ones(img.shape, dtype=bool)
    h, w = img.shape
    return _sample(img, t, np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))


def apply_rigid(img: np.ndarray, t: RigidTransform) -> np.ndarray:
    """Inverse-warp with bilinear sampling and zero fill outside the input."""
    return warp(img, t)[0]


def _bin_index(v: np.ndarray, bins: int) -> np.ndarray:
    return np.minimum((np.clip(v, 0.0, 1.0) * bins).astype(np.intp), bins - 1)


def _entropy(counts: np.ndarray, n: int) -> float:
    c = np.sort(counts[counts > 0]).astype(np.float64)
    return math.log(n) - float(np.dot(c, np.log(c))) / n


def mutual_information(
    a: np.ndarray, b: np.ndarray, bins: int = DEFAULT_BINS, valid: np.ndarray | None = None
) -> float:
    """Negated mutual information (nats) from a ``bins x bins`` joint histogram.

    Intensities are binned with equal-width bins on [0, 1]. Pixels where
    ``valid`` is false are left out of the histogram. The joint entropy sums
    sorted counts, so swapping ``a`` and ``b`` gives the identical float.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise RegistrationError(f"shape mismatch {a.shape} vs {b.shape}")
    if bins < 2:
        raise RegistrationError("bins must be at least 2")
    ia, ib = _bin_index(a, bins), _bin_index(b, bins)
    if valid is not None:
        ia, ib = ia[valid], ib[valid]
    ia, ib = ia.ravel(), ib.ravel()
    n = ia.size
    if n == 0:
        return 0.0
    ha = _entropy(np.bincount(ia, minlength=bins), n)
    hb = _entropy(np.bincount(ib, minlength=bins), n)
    hab = _entropy(np.bincount(ia * bins + ib, minlength=bins * bins), n)
    mi = (ha + hb) - hab
    return -max(mi, 0.0)


@dataclass(frozen=True)
class RegistrationConfig:
    angle_bound_deg: float = 10.0
    scale_min: float = 0.9
    scale_max: float = 1.1
    shift_bound: float = 20.0
    bins: int = DEFAULT_BINS
    restarts: int = 8
    threshold: float = DEFAULT_MI_THRESHOLD
    sample_stride: int = 2
    initial_step: float = 0.15
    xatol: float = 1e-3
    fatol: float = 1e-5
    maxiter: int = 400

    def __post_init__(self):
        if not (self.angle_bound_deg >= 0 and self.shift_bound >= 0):
            raise RegistrationError("search bounds must be non-negative")
        if not (0 < self.scale_min <= 1.0 <= self.scale_max):
            raise RegistrationError("scale bounds must bracket 1.0")
        if (
            self.angle_bound_deg == 0
            and self.shift_bound == 0
            and self.scale_min == self.scale_max
        ):
            raise RegistrationError("empty search bounds")
        if self.restarts < 1:
            raise RegistrationError("restarts must be >= 1")
        if self.sample_stride < 1:
            raise RegistrationError("sample_stride must be >= 1")

    def decode(self, u: np.ndarray) -> RigidTransform:
        u = np.clip(u, -1.0, 1.0)
        mid = 0.5 * (self.scale_max + self.scale_min)
        half = 0.5 * (self.scale_max - self.scale_min)
        return RigidTransform(
            math.radians(self.angle_bound_deg) * u[0],
            mid + half * u[1],
            self.shift_bound * u[2],
            self.shift_bound * u[3],
        )

    def identity_code(self) -> np.ndarray:
        half = 0.5 * (self.scale_max - self.scale_min)
        mid = 0.5 * (self.scale_max + self.scale_min)
        return np.array([0.0, 0.0 if half == 0 else (1.0 - mid) / half, 0.0, 0.0])


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    score: float
    accepted: bool
    evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.as_list(),
            "mi": self.score,
            "accepted": self.accepted,
        }


def _seed_grid(cfg: RegistrationConfig) -> list[np.ndarray]:
    ident = cfg.identity_code()
    grid = [ident]
    for code in itertools.product((-0.5, 0.0, 0.5), repeat=4):
        if any(code):
            grid.append(np.clip(ident + np.array(code), -1.0, 1.0))
    return grid


def register_rigid(
    fixed: np.ndarray, moving: np.ndarray, cfg: RegistrationConfig | None = None
) -> RegistrationResult:
    """Find the transform aligning ``moving`` onto ``fixed``.

    The search cost is the negated MI on every ``sample_stride``-th pixel
    of each axis. Every point of a coarse seed grid is scored; the identity
    and the best ``restarts - 1`` other seeds start a bounded Nelder-Mead
    search in normalised parameter space. The winner is rescored on the full
    grid and never reported worse than the identity.
    """
    cfg = cfg or RegistrationConfig()
    fixed = as_latent(fixed)
    moving = as_latent(moving)
    if fixed.shape != moving.shape:
        raise RegistrationError(f"shape mismatch {fixed.shape} vs {moving.shape}")
    h, w = fixed.shape
    step = cfg.sample_stride
    xs = np.arange(0, w, step, dtype=np.float64)
    ys = np.arange(0, h, step, dtype=np.float64)
    fixed_sub = fixed[::step, ::step]
    evals = 0

    def cost(u):
        nonlocal evals
        evals += 1
        warped, valid = _sample(moving, cfg.decode(u), xs, ys)
        return mutual_information(fixed_sub, warped, cfg.bins, valid)

    ident = cfg.identity_code()
    seeds = _seed_grid(cfg)
    scored = sorted((cost(s), i) for i, s in enumerate(seeds[1:], 1))
    starts = [ident] + [seeds[i] for _, i in scored[: cfg.restarts - 1]]
    def descend(start, size):
        simplex = [start]
        for k in range(4):
            e = np.zeros(4)
            e[k] = size if start[k] + size <= 1.0 else -size
            simplex.append(start + e)
        res = minimize(
            cost,
            start,
            method="Nelder-Mead",
            bounds=[(-1.0, 1.0)] * 4,
            options={
                "initial_simplex": np.array(simplex),
                "xatol": cfg.xatol,
                "fatol": cfg.fatol,
                "maxiter": cfg.maxiter,
            },
        )
        return np.clip(res.x, -1.0, 1.0), float(res.fun)

    best_u, best_f = ident, math.inf
    for start in starts:
        u, f = descend(start, cfg.initial_step)
        if f < best_f:
            best_u, best_f = u, f

    t = cfg.decode(best_u)
    warped, valid = warp(moving, t)
    score = mutual_information(fixed, warped, cfg.bins, valid)
    ident_score = mutual_information(fixed, moving, bins=cfg.bins)
    if ident_score <= score:
        t, score = IDENTITY, ident_score
    return RegistrationResult(t, score, score <= cfg.threshold, evals)
