from __future__ import annotations

import json

import numpy as np
import pytest

from ground3d.errors import PairingMismatch
from ground3d.evaluation import ReferenceItem, evaluate, load_references
from ground3d.scene import Box3D
from ground3d.viewpoint import GroundingResult

UNIT = Box3D(np.zeros(3), np.ones(3))


def box_with_iou(target: Box3D, iou: float) -> Box3D:
    """Shrink the x extent: IoU of the nested box is its volume fraction."""
    lo, hi = target.lo.copy(), target.hi.copy()
    hi[0] = lo[0] + iou * (hi[0] - lo[0])
    return Box3D(lo, hi)


def grounded(query, box, scene_id="s"):
    return GroundingResult(query, scene_id, "grounded", 0, box, "ok")


def ref(query, tags=None, scene_id="s"):
    return ReferenceItem(scene_id, query, UNIT, tags or {})


def test_threshold_counting():
    ious = [0.6, 0.3, 0.26, 0.1]
    pairs = [(grounded(f"q{i}", box_with_iou(UNIT, v)), ref(f"q{i}")) for i, v in enumerate(ious)]
    report = evaluate(pairs)
    assert report.n == 4
    assert report.acc_025 == pytest.approx(0.75)
    assert report.acc_05 == pytest.approx(0.25)


def test_all_no_match_is_zero():
    pairs = [
        (GroundingResult(f"q{i}", "s", "no_match", None, None, ""), ref(f"q{i}"))
        for i in range(3)
    ]
    report = evaluate(pairs)
    assert report.acc_025 == 0.0 and report.acc_05 == 0.0


def test_errors_count_as_misses():
    pairs = [
        (grounded("q0", UNIT), ref("q0")),
        (GroundingResult("q1", "s", "error", None, None, "boom"), ref("q1")),
    ]
    report = evaluate(pairs)
    assert report.acc_025 == pytest.approx(0.5)


def test_acc_ordering_invariant(rng):
    pairs = []
    for i in range(20):
        iou = float(rng.uniform(0, 1))
        pairs.append((grounded(f"q{i}", box_with_iou(UNIT, iou)), ref(f"q{i}")))
    report = evaluate(pairs)
    assert report.acc_05 <= report.acc_025


def test_permutation_leaves_aggregates_unchanged(rng):
    pairs = [
        (grounded(f"q{i}", box_with_iou(UNIT, v)), ref(f"q{i}", tags={"split": "unique" if i % 2 else "multiple"}))
        for i, v in enumerate([0.9, 0.4, 0.2, 0.6, 0.1])
    ]
    a = evaluate(pairs)
    shuffled = list(pairs)
    rng.shuffle(shuffled)
    b = evaluate(shuffled)
    assert (a.n, a.acc_025, a.acc_05) == (b.n, b.acc_025, b.acc_05)
    assert a.per_tag == b.per_tag


def test_per_tag_breakdowns():
    pairs = [
        (grounded("q0", UNIT), ref("q0", tags={"split": "unique"})),
        (grounded("q1", box_with_iou(UNIT, 0.3)), ref("q1", tags={"split": "multiple"})),
        (GroundingResult("q2", "s", "no_match", None, None, ""), ref("q2", tags={"split": "multiple"})),
    ]
    report = evaluate(pairs)
    assert report.per_tag["split=unique"]["acc_05"] == 1.0
    assert report.per_tag["split=multiple"]["n"] == 2
    assert report.per_tag["split=multiple"]["acc_025"] == pytest.approx(0.5)
    assert report.per_tag["split=multiple"]["acc_05"] == 0.0


def test_pairing_mismatch():
    with pytest.raises(PairingMismatch):
        evaluate([(grounded("q0", UNIT), ref("other query"))])
    with pytest.raises(PairingMismatch):
        evaluate([(grounded("q0", UNIT, scene_id="a"), ref("q0", scene_id="b"))])


def test_load_references(tmp_path):
    payload = [
        {"scene_id": "s", "query": "q", "gt_box": {"min": [0, 0, 0], "max": [1, 1, 1]},
         "tags": {"split": "unique"}},
    ]
    p = tmp_path / "refs.json"
    p.write_text(json.dumps(payload))
    (item,) = load_references(p)
    assert item.scene_id == "s"
    assert np.allclose(item.gt_box.hi, [1, 1, 1])
    assert item.tags == {"split": "unique"}


def test_report_serialization_roundtrip():
    pairs = [(grounded("q0", UNIT), ref("q0"))]
    report = evaluate(pairs)
    data = json.loads(json.dumps(report.to_json()))
    assert data["n"] == 1
    assert data["items"][0]["hit_05"] is True
