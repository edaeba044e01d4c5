"""Dataset plumbing: view filtering, registration gating, manifests and statistics."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional

from .imaging import atomic_write, bilateral_filter, read_png, resize
from .instruction import (
    EditInstruction,
    FindingState,
    Operation,
    generate_instructions,
    parse_instruction,
    render_instruction,
)
from .registration import RegistrationConfig, RegistrationResult, RigidTransform, register_rigid

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SPLITS = ("train", "holdout", "test", "validation")
# per-mille bucket upper edges, roughly the reference split proportions
_SPLIT_EDGES = ((875, "train"), (977, "holdout"), (992, "test"), (1000, "validation"))
OP_NAMES = {Operation.ADD: "add", Operation.REMOVE: "remove", Operation.CHANGE_LEVEL: "change"}


def split_for_patient(patient_id: str) -> str:
    """Stable patient-wise split from a hash bucket of the patient id."""
    digest = hashlib.sha256(patient_id.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:8], "big") % 1000
    for edge, name in _SPLIT_EDGES:
        if bucket < edge:
            return name
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class PairRecord:
    id: str
    past: str
    current: str
    view: Optional[str]
    past_findings: tuple[FindingState, ...] = ()
    current_findings: tuple[FindingState, ...] = ()
    split: str = ""
    patient: Optional[str] = None

    def __post_init__(self):
        if self.past == self.current:
            raise ValueError(f"record {self.id}: past and current paths must differ")
        if not self.split:
            object.__setattr__(self, "split", split_for_patient(self.patient or self.id))

    @classmethod
    def from_json(cls, obj: dict) -> "PairRecord":
        return cls(
            id=str(obj["id"]),
            past=obj["past"],
            current=obj["current"],
            view=obj.get("view"),
            past_findings=tuple(FindingState.from_dict(d) for d in obj.get("past_findings", [])),
            current_findings=tuple(
                FindingState.from_dict(d) for d in obj.get("current_findings", [])
            ),
            split=obj.get("split") or "",
            patient=obj.get("patient"),
        )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "past": self.past,
            "current": self.current,
            "view": self.view,
            "patient": self.patient,
            "split": self.split,
            "past_findings": [s.to_dict() for s in self.past_findings],
            "current_findings": [s.to_dict() for s in self.current_findings],
        }


@dataclass(frozen=True)
class ManifestEntry:
    record: PairRecord
    registration: RegistrationResult
    instructions: tuple[EditInstruction, ...]
    text: str

    def __post_init__(self):
        if not self.registration.accepted:
            raise ValueError(f"record {self.record.id}: rejected pairs are not manifest entries")
        if parse_instruction(self.text) != self.instructions:
            raise ValueError(f"record {self.record.id}: text does not re-parse to instructions")

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "id": self.record.id,
            "past": self.record.past,
            "current": self.record.current,
            "view": self.record.view,
            "transform": self.registration.transform.as_list(),
            "mi": self.registration.score,
            "instructions": [i.to_dict() for i in self.instructions],
            "text": self.text,
            "split": self.record.split,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        record = PairRecord(
            id=obj["id"], past=obj["past"], current=obj["current"], view=obj.get("view"),
            split=obj["split"],
        )
        reg = RegistrationResult(RigidTransform(*obj["transform"]), float(obj["mi"]), True)
        instrs = tuple(EditInstruction.from_dict(d) for d in obj["instructions"])
        return cls(record, reg, instrs, obj["text"])


@dataclass
class DatasetStats:
    split_counts: dict[str, int] = field(default_factory=dict)
    op_counts: dict[str, int] = field(default_factory=dict)
    op_percent: dict[str, float] = field(default_factory=dict)
    total_samples: int = 0
    total_ops: int = 0
    avg_ops: float = 0.0
    rejected: int = 0
    unreadable: int = 0
    view_dropped: int = 0
    unlabeled: int = 0
    no_change: int = 0

    def to_json(self) -> dict:
        return {
            "split_counts": self.split_counts,
            "op_counts": self.op_counts,
            "op_percent": self.op_percent,
            "total_samples": self.total_samples,
            "total_ops": self.total_ops,
            "avg_ops": self.avg_ops,
            "rejected": self.rejected,
            "unreadable": self.unreadable,
            "view_dropped": self.view_dropped,
            "unlabeled": self.unlabeled,
            "no_change": self.no_change,
        }


def _round(num: int, den: int, places: str) -> float:
    if den == 0:
        return 0.0
    return float((Decimal(num) / Decimal(den)).quantize(Decimal(places), rounding=ROUND_HALF_UP))


def compute_stats(entries: Iterable[ManifestEntry]) -> DatasetStats:
    """Per-split sample counts and per-operation totals, shares and average."""
    splits: Counter = Counter()
    ops: Counter = Counter()
    n = 0
    for e in entries:
        n += 1
        splits[e.record.split] += 1
        for ins in e.instructions:
            ops[OP_NAMES[ins.operation]] += 1
    total_ops = sum(ops.values())
    split_names = list(SPLITS) + sorted(set(splits) - set(SPLITS))
    return DatasetStats(
        split_counts={s: splits.get(s, 0) for s in split_names},
        op_counts={k: ops.get(k, 0) for k in OP_NAMES.values()},
        op_percent={k: _round(100 * ops.get(k, 0), total_ops, "0.1") for k in OP_NAMES.values()},
        total_samples=n,
        total_ops=total_ops,
        avg_ops=_round(total_ops, n, "0.01"),
    )


def filter_view(
    records: Iterable[PairRecord], keep: str = "PA"
) -> tuple[list[PairRecord], int]:
    """Keep records whose view label equals ``keep``.

    Records without a label are dropped; their count is returned alongside.
    """
    kept, unlabeled = [], 0
    for r in records:
        if not r.view:
            unlabeled += 1
        elif r.view == keep:
            kept.append(r)
    return kept, unlabeled


@dataclass(frozen=True)
class ManifestConfig:
    canvas: int = 512
    view: str = "PA"
    sigma_domain: float = 2.0
    sigma_range: float = 50.0
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)


def prepare_image(path: Path, cfg: ManifestConfig):
    img = resize(read_png(path), cfg.canvas, cfg.canvas)
    return bilateral_filter(img, cfg.sigma_domain, cfg.sigma_range)


def build_manifest(
    records: Sequence[PairRecord], cfg: ManifestConfig, base_dir: Path | None = None
) -> tuple[list[ManifestEntry], DatasetStats]:
    """Filter, align, gate and diff every record; entries come out sorted by id."""
    base_dir = Path(base_dir or ".")
    kept, unlabeled = filter_view(records, cfg.view)
    view_dropped = len(records) - len(kept)
    entries = []
    rejected = unreadable = no_change = 0
    for rec in sorted(kept, key=lambda r: r.id):
        try:
            past = prepare_image(base_dir / rec.past, cfg)
            current = prepare_image(base_dir / rec.current, cfg)
        except OSError as exc:
            log.warning("skipping %s: %s", rec.id, exc)
            unreadable += 1
            continue
        # align the target onto the input so the edit keeps input geometry
        reg = register_rigid(past, current, cfg.registration)
        if not reg.accepted:
            log.info("rejecting %s: MI %.4f above %.4f", rec.id, reg.score, cfg.registration.threshold)
            rejected += 1
            continue
        instrs = generate_instructions(rec.past_findings, rec.current_findings)
        if not instrs:
            no_change += 1
            continue
        entries.append(ManifestEntry(rec, reg, instrs, render_instruction(instrs)))
    stats = compute_stats(entries)
    stats.rejected = rejected
    stats.unreadable = unreadable
    stats.view_dropped = view_dropped
    stats.unlabeled = unlabeled
    stats.no_change = no_change
    if not entries:
        log.warning("no pairs accepted; manifest is empty")
    return entries, stats


def dumps_manifest(entries: Iterable[ManifestEntry]) -> str:
    return "".join(json.dumps(e.to_json()) + "\n" for e in entries)


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    data = dumps_manifest(entries).encode("utf-8")
    atomic_write(Path(path), lambda fh: fh.write(data))


def read_manifest(path) -> list[ManifestEntry]:
    lines = Path(path).read_text().splitlines()
    return [ManifestEntry.from_json(json.loads(line)) for line in lines if line.strip()]


def read_records(path) -> list[PairRecord]:
    lines = Path(path).read_text().splitlines()
    return [PairRecord.from_json(json.loads(line)) for line in lines if line.strip()]


def write_json(path, obj) -> None:
    data = (json.dumps(obj, indent=2) + "\n").encode("utf-8")
    atomic_write(Path(path), lambda fh: fh.write(data))
