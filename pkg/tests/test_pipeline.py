import json
import random

import numpy as np
import pytest

from rsedit.imaging import write_png
from rsedit.instruction import EditInstruction, FindingState, Operation, render_instruction
from rsedit.pipeline import (
    SPLITS,
    DatasetStats,
    ManifestConfig,
    ManifestEntry,
    PairRecord,
    build_manifest,
    compute_stats,
    dumps_manifest,
    filter_view,
    read_manifest,
    read_records,
    split_for_patient,
    write_manifest,
)
from rsedit.registration import RegistrationConfig, RegistrationResult, RigidTransform, apply_rigid
from rsedit.synthetic import noise_image, smooth_image

ADD = EditInstruction(Operation.ADD, "edema")
REMOVE = EditInstruction(Operation.REMOVE, "pneumothorax")
CHANGE = EditInstruction(Operation.CHANGE_LEVEL, "atelectasis", severity="mild")


def rec(i, view="PA", **kw):
    return PairRecord(str(i), f"p{i}.png", f"c{i}.png", view, **kw)


def fake_entry(i, instrs, split="train"):
    reg = RegistrationResult(RigidTransform(), -1.5, True)
    return ManifestEntry(rec(i, split=split), reg, tuple(instrs), render_instruction(instrs))


def test_filter_view():
    records = [rec(1, "PA"), rec(2, "AP"), rec(3, None), rec(4, "PA"), rec(5, "")]
    kept, unlabeled = filter_view(records, "PA")
    assert [r.id for r in kept] == ["1", "4"] and unlabeled == 2
    ap, _ = filter_view(records, "AP")
    labeled = {r.id for r in records if r.view}
    assert {r.id for r in ap} | {r.id for r in kept} == labeled
    none_kept, dropped = filter_view([rec(6, None), rec(7, None)])
    assert none_kept == [] and dropped == 2


def test_compute_stats_reference_counts():
    # the per-sample layout is arbitrary; only the totals matter
    n, adds, removes, changes = 21957, 14195, 14172, 830
    ops = [ADD] * adds + [REMOVE] * removes + [CHANGE] * changes
    # spread ops so every sample gets at least one, at most one of each kind
    buckets = [[] for _ in range(n)]
    for k, op in enumerate(o for o in ops if o is ADD):
        buckets[k % n].append(op)
    for k, op in enumerate(o for o in ops if o is REMOVE):
        buckets[(k + adds) % n].append(op)
    for k, op in enumerate(o for o in ops if o is CHANGE):
        buckets[(k + 15000) % n].append(op)
    assert all(buckets)
    stats = compute_stats(DummyEntry(b) for b in buckets)
    assert stats.total_samples == 21957
    assert stats.total_ops == 29197
    assert stats.op_counts == {"add": 14195, "remove": 14172, "change": 830}
    assert stats.op_percent == {"add": 48.6, "remove": 48.5, "change": 2.8}
    assert stats.avg_ops == 1.33


class DummyEntry:
    """Just enough of a manifest entry for the statistics pass."""

    class _Rec:
        split = "train"

    def __init__(self, instrs):
        self.instructions = instrs
        self.record = self._Rec()


def test_compute_stats_small_examples():
    empty = compute_stats([])
    assert empty.total_samples == 0 and empty.avg_ops == 0.0 and empty.total_ops == 0
    assert set(empty.split_counts) == set(SPLITS)
    three = compute_stats([fake_entry(1, [ADD]), fake_entry(2, [REMOVE]), fake_entry(3, [ADD, CHANGE])])
    assert three.avg_ops == 1.33 and three.total_ops == 4
    assert three.op_percent == {"add": 50.0, "remove": 25.0, "change": 25.0}


def test_stats_permutation_invariant():
    entries = [fake_entry(i, [ADD] if i % 3 else [REMOVE, CHANGE], SPLITS[i % 4]) for i in range(30)]
    ref = compute_stats(entries).to_json()
    rng = random.Random(0)
    for _ in range(5):
        rng.shuffle(entries)
        assert compute_stats(entries).to_json() == ref


def test_split_assignment_stable():
    assert split_for_patient("p10") == split_for_patient("p10")
    assert PairRecord("x", "a", "b", "PA", patient="p10").split == split_for_patient("p10")
    counts = {s: 0 for s in SPLITS}
    for i in range(5000):
        counts[split_for_patient(f"patient{i}")] += 1
    assert counts["train"] > counts["holdout"] > counts["test"] > 0 and counts["validation"] > 0


def test_entry_rejects_unaccepted_and_mismatched_text():
    reg = RegistrationResult(RigidTransform(), -0.5, False)
    with pytest.raises(ValueError):
        ManifestEntry(rec(1), reg, (ADD,), "add edema")
    ok = RegistrationResult(RigidTransform(), -1.5, True)
    with pytest.raises(ValueError):
        ManifestEntry(rec(1), ok, (ADD,), "remove edema")


def write_fixture(root, size=64):
    rng = np.random.default_rng(42)
    records = []
    edema = {"finding": "edema", "location": None, "severity": "mild"}
    cases = [
        ("a1", True, [edema], []),
        ("a2", True, [], [{"finding": "pneumothorax", "location": "left", "severity": None}]),
        ("r1", False, [edema], []),
        ("r2", False, [], [edema]),
    ]
    for rid, aligned, past_f, cur_f in cases:
        past = smooth_image(rng, size)
        if aligned:
            cur = apply_rigid(past, RigidTransform(np.radians(3.0), 1.0, 2.0, -1.0))
        else:
            cur = noise_image(rng, size)
        write_png(root / f"{rid}_past.png", past)
        write_png(root / f"{rid}_cur.png", cur)
        records.append({
            "id": rid, "past": f"{rid}_past.png", "current": f"{rid}_cur.png", "view": "PA",
            "patient": f"pat-{rid}", "past_findings": past_f, "current_findings": cur_f,
        })
    records.append({"id": "ap", "past": "a1_past.png", "current": "a1_cur.png", "view": "AP"})
    path = root / "records.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


FAST = ManifestConfig(canvas=64, registration=RegistrationConfig(restarts=3))


def test_build_manifest_fixture(tmp_path):
    records = read_records(write_fixture(tmp_path))
    entries, stats = build_manifest(records, FAST, tmp_path)
    assert [e.record.id for e in entries] == ["a1", "a2"]
    assert entries[0].text == "remove mild edema"
    assert entries[1].text == "add left pneumothorax"
    assert stats.rejected == 2 and stats.view_dropped == 1 and stats.unlabeled == 0
    assert stats.total_samples == 2 and stats.total_ops == 2
    assert all(e.registration.score <= -0.88 for e in entries)


def test_build_manifest_unreadable_and_no_change(tmp_path):
    write_png(tmp_path / "x.png", smooth_image(np.random.default_rng(0), 64))
    write_png(tmp_path / "y.png", smooth_image(np.random.default_rng(0), 64))
    same = [FindingState("edema")]
    records = [
        PairRecord("gone", "missing.png", "y.png", "PA"),
        PairRecord("same", "x.png", "y.png", "PA", tuple(same), tuple(same)),
    ]
    entries, stats = build_manifest(records, FAST, tmp_path)
    assert entries == [] and stats.unreadable == 1 and stats.no_change == 1


def test_manifest_deterministic_and_round_trips(tmp_path):
    path = write_fixture(tmp_path)
    records = read_records(path)
    a, _ = build_manifest(records, FAST, tmp_path)
    b, _ = build_manifest(list(reversed(records)), FAST, tmp_path)
    assert dumps_manifest(a) == dumps_manifest(b)
    write_manifest(tmp_path / "m1.jsonl", a)
    write_manifest(tmp_path / "m2.jsonl", b)
    assert (tmp_path / "m1.jsonl").read_bytes() == (tmp_path / "m2.jsonl").read_bytes()
    back = read_manifest(tmp_path / "m1.jsonl")
    assert dumps_manifest(back) == dumps_manifest(a)
    for line in (tmp_path / "m1.jsonl").read_text().splitlines():
        assert json.loads(line)["schema"] == 1


def test_stats_json_shape():
    s = DatasetStats()
    assert set(s.to_json()) >= {"split_counts", "op_counts", "op_percent", "avg_ops", "rejected"}
