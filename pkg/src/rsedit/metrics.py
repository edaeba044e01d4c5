"""Evaluation metrics: AUROC, Pearson, CMIG, KL divergence and Frechet distance."""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .imaging import resize

PROB_CLAMP = 1e-9


class MetricError(ValueError):
    pass


def auroc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg), ties counted one half.

    Uses midranks, so it equals the pair-counting definition exactly for
    any set of ties.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise MetricError("labels and scores must be equal-length 1-D sequences")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    # 2U is an integer, so doubling keeps the arithmetic exact
    twice_u = int(round(2.0 * ranks[pos].sum())) - n_pos * (n_pos + 1)
    return twice_u / (2.0 * n_pos * n_neg)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("pearson needs equal-length 1-D inputs")
    if x.size < 2:
        raise MetricError("pearson needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise MetricError("pearson is undefined for zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _check_unit(values: Sequence[float], name: str) -> list[float]:
    values = [float(v) for v in values]
    if not values:
        raise MetricError(f"{name} list is empty")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise MetricError(f"{name} value {v} outside [0, 1]")
    return values


def cmig(accuracy: Sequence[float], retention: Sequence[float]) -> float:
    """sqrt(geomean(accuracy) * geomean(retention)), evaluated in log space."""
    a = _check_unit(accuracy, "accuracy")
    f = _check_unit(retention, "retention")
    if min(a) == 0.0 or min(f) == 0.0:
        return 0.0
    log_a = math.fsum(math.log(v) for v in a) / len(a)
    log_f = math.fsum(math.log(v) for v in f) / len(f)
    return math.exp(0.5 * (log_a + log_f))


@dataclass(frozen=True)
class PathologyDistribution:
    classes: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.classes) != len(self.probs):
            raise MetricError("one probability per class is required")
        if len(set(self.classes)) != len(self.classes):
            raise MetricError("duplicate class names")


def kl_divergence(p: PathologyDistribution, q: PathologyDistribution, eps: float = PROB_CLAMP) -> float:
    """sum_i P(i) ln(P(i) / Q(i)) over per-class mean probabilities, in nats.

    Both distributions are clamped to ``[eps, 1 - eps]`` first so a class
    predicted at exactly 0 or 1 gives a large finite value.
    """
    if tuple(p.classes) != tuple(q.classes):
        raise MetricError(f"class lists differ: {p.classes} vs {q.classes}")
    total = []
    for pi, qi in zip(p.probs, q.probs):
        pi = min(max(float(pi), eps), 1.0 - eps)
        qi = min(max(float(qi), eps), 1.0 - eps)
        total.append(pi * math.log(pi / qi))
    return math.fsum(total)


@dataclass(frozen=True)
class EmbeddingStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise MetricError(f"covariance {cov.shape} does not match mean {mean.shape}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise MetricError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(s1: EmbeddingStats, s2: EmbeddingStats) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)."""
    if s1.mean.shape != s2.mean.shape:
        raise MetricError(f"dimension mismatch {s1.mean.shape} vs {s2.mean.shape}")
    d = s1.mean - s2.mean
    root1 = _psd_sqrt(s1.cov)
    inner = root1 @ s2.cov @ root1
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    trace_cross = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    value = float(d @ d) + float(np.trace(s1.cov) + np.trace(s2.cov)) - 2.0 * trace_cross
    return max(value, 0.0)


class RandomProjectionExtractor:
    """Average-pool to ``pool x pool`` then project with a fixed seeded matrix."""

    def __init__(self, pool: int = 16, dim: int = 32, seed: int = 0):
        self.pool = pool
        self.dim = dim
        rng = np.random.default_rng([seed, 7])
        self.weights = rng.standard_normal((pool * pool, dim)) / pool

    def __call__(self, img: np.ndarray) -> np.ndarray:
        h, w = img.shape
        if h % self.pool == 0 and w % self.pool == 0:
            pooled = img.reshape(self.pool, h // self.pool, self.pool, w // self.pool).mean(axis=(1, 3))
        else:
            pooled = resize(img, self.pool, self.pool)
        return pooled.ravel() @ self.weights


def identity_extractor(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64).ravel()


def embed_and_fit(
    images: Sequence[np.ndarray], extractor: Callable[[np.ndarray], np.ndarray] | None = None
) -> EmbeddingStats:
    """Mean and unbiased covariance of extracted feature vectors."""
    if len(images) < 2:
        raise MetricError("need at least two images to fit embedding statistics")
    extractor = extractor or RandomProjectionExtractor()
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1:
        raise MetricError(f"inconsistent image shapes {sorted(shapes)}")
    feats = np.stack([np.atleast_1d(extractor(np.asarray(im, dtype=np.float64))) for im in images])
    # shift by the first sample so duplicated inputs centre to exact zeros
    shifted = feats - feats[0]
    offset = shifted.mean(axis=0)
    mean = feats[0] + offset
    centered = shifted - offset
    cov = centered.T @ centered / (len(images) - 1)
    return EmbeddingStats(mean, 0.5 * (cov + cov.T), len(images))


@dataclass
class MetricReport:
    accuracy: dict[str, float] = field(default_factory=dict)
    retention: dict[str, float] = field(default_factory=dict)
    cmig: float | None = None
    kl: float | None = None
    fid: float | None = None
    n: int = 0

    def to_json(self) -> dict:
        return {
            "accuracy": dict(sorted(self.accuracy.items())),
            "retention": dict(sorted(self.retention.items())),
            "cmig": self.cmig,
            "kl": self.kl,
            "fid": self.fid,
            "n": self.n,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False)


def mean_probabilities(
    probe: Callable[[np.ndarray], Mapping[str, float]], images: Sequence[np.ndarray]
) -> PathologyDistribution:
    """Average per-class probe outputs over a set of images."""
    rows = [probe(im) for im in images]
    if not rows:
        raise MetricError("no images to probe")
    classes = tuple(sorted(rows[0]))
    for r in rows:
        if tuple(sorted(r)) != classes:
            raise MetricError("probe returned inconsistent class lists")
    probs = tuple(math.fsum(r[c] for r in rows) / len(rows) for c in classes)
    return PathologyDistribution(classes, probs)


class SyntheticPathologyProbe:
    """Deterministic stand-in classifier: sigmoid of a seeded linear read-out."""

    def __init__(self, classes: Sequence[str], pool: int = 16, seed: int = 0):
        self.classes = tuple(classes)
        self.extractor = RandomProjectionExtractor(pool=pool, dim=len(self.classes), seed=seed)

    def __call__(self, img: np.ndarray) -> dict[str, float]:
        logits = self.extractor(img)
        return {c: float(1.0 / (1.0 + math.exp(-v))) for c, v in zip(self.classes, logits)}
