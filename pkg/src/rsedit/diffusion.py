"""Noise schedule, forward noising, two-scale guidance and a deterministic sampler.

The latent space is the pixel grid itself. ``BlobWorld`` provides a
closed-form denoiser whose clean-image target is known analytically, so the
sampler's output can be checked exactly.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .instruction import EditInstruction, Operation

DEFAULT_SEVERITY_SCALE = {
    "minimal": 0.3,
    "small": 0.5,
    "mild": 0.5,
    "moderate": 0.75,
    "severe": 1.0,
    "large": 1.0,
}
SEVERITY_RANK = ("minimal", "small", "mild", "moderate", "severe", "large")

# denoiser(z, t, image, text) -> predicted noise
Denoiser = Callable[[np.ndarray, int, np.ndarray, tuple], np.ndarray]


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule; ``alpha_bar[t]`` for t in 0..T with alpha_bar[0] = 1."""

    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_bar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T < 1:
            raise ScheduleError("T must be >= 1")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ScheduleError("need 0 < beta_start <= beta_end < 1")
        if self.T > 1 and self.beta_start == self.beta_end:
            raise ScheduleError("betas must be strictly increasing")
        betas = np.linspace(self.beta_start, self.beta_end, self.T)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        betas.setflags(write=False)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    def check_step(self, t: int, allow_zero: bool = True) -> int:
        t = int(t)
        lo = 0 if allow_zero else 1
        if not lo <= t <= self.T:
            raise ScheduleError(f"timestep {t} outside [{lo}, {self.T}]")
        return t

    def timesteps(self, steps: int) -> list[int]:
        """Evenly spaced descending sub-sequence ``T = t_0 > ... > t_steps = 0``."""
        if steps < 1:
            raise ScheduleError("steps must be >= 1")
        if steps > self.T:
            raise ScheduleError(f"steps={steps} exceeds schedule length T={self.T}")
        return [int(round(v)) for v in np.linspace(self.T, 0, steps + 1)]


def forward_noise(x0: np.ndarray, eps: np.ndarray, alpha_bar: float) -> np.ndarray:
    return math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps


def add_noise(x0: np.ndarray, eps: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """``z_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps``."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} does not match {x0.shape}")
    t = sched.check_step(t)
    return forward_noise(x0, eps, float(sched.alpha_bar[t]))


def seeded_noise(seed: int, offset: int, shape: tuple[int, int]) -> np.ndarray:
    """Standard normal draw from a sub-stream derived from ``(seed, offset)``."""
    return np.random.default_rng([int(seed), int(offset)]).standard_normal(shape)


@dataclass(frozen=True)
class GuidanceScales:
    s_image: float = 1.5
    s_text: float = 7.5

    def __post_init__(self):
        if not (math.isfinite(self.s_image) and math.isfinite(self.s_text)):
            raise ValueError("guidance scales must be finite")


@dataclass(frozen=True)
class Blob:
    center: tuple[float, float]
    radius: float
    amplitude: float

    def profile(self, shape: tuple[int, int]) -> np.ndarray:
        """Gaussian with std ``radius / 2``, cut to zero outside the disc ``radius``."""
        h, w = shape
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        d2 = (xs - self.center[0]) ** 2 + (ys - self.center[1]) ** 2
        sigma = self.radius / 2.0
        return np.where(d2 <= self.radius**2, np.exp(-d2 / (2 * sigma * sigma)), 0.0)

    def support(self, shape: tuple[int, int]) -> np.ndarray:
        h, w = shape
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        return (xs - self.center[0]) ** 2 + (ys - self.center[1]) ** 2 <= self.radius**2


@dataclass(frozen=True)
class BlobWorld:
    """Analytic edit targets: each finding adds, removes or rescales a blob.

    ``target(I, T) = clip(I + sum_k sign_k * amplitude_k * scale_k * blob_k, 0, 1)``.
    Add contributes ``+scale(severity)``, Remove ``-scale(severity)`` and
    ChangeLevel ``scale(target) - scale(reference_severity)``, i.e. the
    finding is assumed present at the reference level.
    """

    findings: Mapping[str, Blob]
    severity_scale: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SEVERITY_SCALE)
    )
    default_scale: float = 1.0
    reference_severity: str = "moderate"

    def __post_init__(self):
        ranked = [self.severity_scale[s] for s in SEVERITY_RANK if s in self.severity_scale]
        if any(b < a for a, b in zip(ranked, ranked[1:])):
            raise ValueError("severity scale must be monotone in severity rank")
        if self.reference_severity not in self.severity_scale:
            raise ValueError(f"unknown reference severity {self.reference_severity!r}")

    def scale(self, severity: Optional[str]) -> float:
        if severity is None:
            return self.default_scale
        return self.severity_scale.get(severity, self.default_scale)

    def signed_weight(self, ins: EditInstruction) -> float:
        if ins.operation is Operation.ADD:
            return self.scale(ins.severity)
        if ins.operation is Operation.REMOVE:
            return -self.scale(ins.severity)
        return self.scale(ins.severity) - self.scale(self.reference_severity)

    def delta(self, shape: tuple[int, int], instrs: Iterable[EditInstruction]) -> np.ndarray:
        out = np.zeros(shape)
        for ins in instrs:
            blob = self.findings.get(ins.finding)
            if blob is not None:
                out += self.signed_weight(ins) * blob.amplitude * blob.profile(shape)
        return out

    def check_canvas(self, width: int, height: int) -> None:
        for name, b in self.findings.items():
            x, y = b.center
            if not (0 <= x < width and 0 <= y < height):
                raise ValueError(f"blob {name!r} centre {b.center} lies outside {width}x{height}")
            if b.radius <= 0:
                raise ValueError(f"blob {name!r} needs a positive radius")

    def target(self, image: np.ndarray, instrs: Iterable[EditInstruction]) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        instrs = tuple(instrs)
        if not instrs:
            return image.copy()
        return np.clip(image + self.delta(image.shape, instrs), 0.0, 1.0)

    @classmethod
    def from_json(cls, obj: dict) -> "BlobWorld":
        findings = {
            name: Blob(tuple(map(float, entry["center"])), float(entry["radius"]),
                       float(entry["amplitude"]))
            for name, entry in obj["findings"].items()
        }
        kwargs = {}
        if "severity_scale" in obj:
            kwargs["severity_scale"] = {k: float(v) for k, v in obj["severity_scale"].items()}
        if "reference_severity" in obj:
            kwargs["reference_severity"] = obj["reference_severity"]
        return cls(findings, **kwargs)

    @classmethod
    def load(cls, path) -> "BlobWorld":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {
            "findings": {
                k: {"center": list(b.center), "radius": b.radius, "amplitude": b.amplitude}
                for k, b in sorted(self.findings.items())
            },
            "severity_scale": dict(self.severity_scale),
            "reference_severity": self.reference_severity,
        }


class OracleDenoiser:
    """Exact noise predictor for a ``BlobWorld``: inverts the forward process."""

    def __init__(self, world: BlobWorld, sched: NoiseSchedule):
        self.world = world
        self.sched = sched
        self._deltas: dict = {}

    def target(self, image: np.ndarray, text: tuple) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        text = tuple(text)
        if not text:
            return image
        key = (image.shape, text)
        if key not in self._deltas:
            self._deltas[key] = self.world.delta(image.shape, text)
        return np.clip(image + self._deltas[key], 0.0, 1.0)

    def __call__(self, z, t, image, text) -> np.ndarray:
        t = self.sched.check_step(t, allow_zero=False)
        ab = float(self.sched.alpha_bar[t])
        x0 = self.target(image, text)
        return (np.asarray(z, dtype=np.float64) - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)


def cfg_epsilon(
    z: np.ndarray,
    t: int,
    image: np.ndarray,
    text: tuple,
    scales: GuidanceScales,
    denoiser: Denoiser,
) -> np.ndarray:
    """Two-scale classifier-free guidance.

    ``e(0,0) + s_I (e(I,0) - e(0,0)) + s_T (e(I,T) - e(I,0))``, evaluated in
    the regrouped form ``s_T e(I,T) + (s_I - s_T) e(I,0) + (1 - s_I) e(0,0)``
    so unit scales return ``e(I,T)`` bit for bit. The null image is all zeros
    and the null text the empty instruction set.
    """
    image = np.asarray(image, dtype=np.float64)
    e_null = denoiser(z, t, np.zeros_like(image), ())
    e_img = denoiser(z, t, image, ())
    e_full = denoiser(z, t, image, tuple(text))
    s_i, s_t = scales.s_image, scales.s_text
    return s_t * e_full + (s_i - s_t) * e_img + (1.0 - s_i) * e_null


def sample(
    z_T: np.ndarray,
    image: np.ndarray,
    text: tuple,
    scales: GuidanceScales,
    denoiser: Denoiser,
    sched: NoiseSchedule,
    steps: int = 50,
    on_step: Optional[Callable[[np.ndarray, int], np.ndarray]] = None,
) -> np.ndarray:
    """Deterministic (eta = 0) sampler from ``t = T`` down to ``t = 0``.

    ``on_step(z, t)`` runs after every update and may return a modified
    state; region-restricted editing uses it to pin unmasked pixels.
    """
    ts = sched.timesteps(steps)
    z = np.asarray(z_T, dtype=np.float64).copy()
    for t, t_next in zip(ts[:-1], ts[1:]):
        eps = cfg_epsilon(z, t, image, text, scales, denoiser)
        ab, ab_next = float(sched.alpha_bar[t]), float(sched.alpha_bar[t_next])
        x0_hat = (z - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)
        z = forward_noise(x0_hat, eps, ab_next)
        if on_step is not None:
            z = on_step(z, t_next)
    return z
