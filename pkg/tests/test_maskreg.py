import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsedit.instruction import EditInstruction, Operation
from rsedit.maskreg import (
    BoundingBox,
    MaskError,
    MaskRegistry,
    build_pathology_mask,
    fit_to_canvas,
    resolve_pseudo_mask,
    user_mask_override,
)


def add(finding):
    return EditInstruction(Operation.ADD, finding)


def union_count(boxes):
    # inclusion-exclusion over all non-empty subsets of boxes
    total = 0
    for k in range(1, len(boxes) + 1):
        for subset in itertools.combinations(boxes, k):
            x0 = max(b[0] for b in subset)
            y0 = max(b[1] for b in subset)
            x1 = min(b[2] for b in subset)
            y1 = min(b[3] for b in subset)
            area = max(0, x1 - x0) * max(0, y1 - y0)
            total += (-1) ** (k + 1) * area
    return total


def test_overlapping_boxes_pixel_count():
    reg = MaskRegistry(512, 512, {"edema": [(10, 10, 50, 50), (40, 40, 80, 80)]})
    mask = build_pathology_mask(reg, "edema")
    assert mask.sum() == 3100 == union_count([(10, 10, 50, 50), (40, 40, 80, 80)])
    assert set(np.unique(mask)) == {0.0, 1.0}


def test_full_canvas_box_and_unlisted_finding():
    reg = MaskRegistry(512, 512, {"edema": [(0, 0, 512, 512)]})
    assert np.all(build_pathology_mask(reg, "edema") == 1.0)
    other = build_pathology_mask(reg, "unlisted_thing")
    assert other.shape == (512, 512) and np.all(other == 1.0)


def test_resolve_disjoint_union_and_singleton():
    reg = MaskRegistry(64, 64, {"a": [(0, 0, 10, 10)], "b": [(20, 20, 30, 35)]})
    both = resolve_pseudo_mask(reg, [add("a"), add("b")])
    assert both.sum() == 100 + 150
    assert np.array_equal(resolve_pseudo_mask(reg, [add("a")]), build_pathology_mask(reg, "a"))
    assert np.all(resolve_pseudo_mask(reg, [add("a"), add("zzz")]) == 1.0)


def test_resolve_rejects_empty():
    with pytest.raises(MaskError):
        resolve_pseudo_mask(MaskRegistry(4, 4, {}), [])


def test_user_mask_override_validation():
    m = np.zeros((8, 8))
    m[2:4, 2:5] = 1.0
    assert np.array_equal(user_mask_override(m, 8, 8), m)
    with pytest.raises(MaskError):
        user_mask_override(np.full((8, 8), 0.5), 8, 8)
    with pytest.raises(MaskError):
        user_mask_override(np.zeros((256, 256)), 512, 512)


def test_registry_rejects_out_of_canvas_box():
    with pytest.raises(MaskError):
        MaskRegistry(10, 10, {"a": [(0, 0, 11, 5)]})
    with pytest.raises(MaskError):
        BoundingBox(3, 3, 3, 5)


def test_registry_json_round_trip(tmp_path):
    reg = MaskRegistry(32, 16, {"b": [(0, 0, 4, 4)], "a": [(1, 2, 3, 4), (5, 5, 9, 9)]})
    path = tmp_path / "reg.json"
    import json
    path.write_text(json.dumps(reg.to_json()))
    back = MaskRegistry.load(path)
    assert back == reg


def test_fit_to_canvas_keeps_binary():
    m = np.zeros((16, 16))
    m[4:8, 4:12] = 1.0
    up = fit_to_canvas(m, 64, 64)
    assert up.shape == (64, 64) and set(np.unique(up)) <= {0.0, 1.0}
    assert up.sum() == m.sum() * 16


boxes_st = st.lists(
    st.tuples(st.integers(0, 19), st.integers(0, 19), st.integers(1, 20), st.integers(1, 20))
    .filter(lambda b: b[0] < b[2] and b[1] < b[3]),
    min_size=1,
    max_size=5,
)


@given(boxes_st)
def test_union_matches_inclusion_exclusion(boxes):
    reg = MaskRegistry(20, 20, {"f": boxes})
    assert build_pathology_mask(reg, "f").sum() == union_count(boxes)


@given(boxes_st, boxes_st)
def test_union_is_monotone(a, b):
    small = build_pathology_mask(MaskRegistry(20, 20, {"f": a}), "f")
    big = build_pathology_mask(MaskRegistry(20, 20, {"f": a + b}), "f")
    assert np.all(big >= small)


@given(st.permutations(["a", "b", "c", "nope"]), st.integers(1, 4))
def test_resolve_order_independent(order, k):
    reg = MaskRegistry(20, 20, {"a": [(0, 0, 5, 5)], "b": [(3, 3, 9, 9)], "c": [(10, 0, 20, 4)]})
    chosen = order[:k]
    ref = resolve_pseudo_mask(reg, [add(f) for f in sorted(chosen)])
    assert np.array_equal(resolve_pseudo_mask(reg, [add(f) for f in chosen]), ref)
