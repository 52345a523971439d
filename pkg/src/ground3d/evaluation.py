"""Benchmark evaluation: hit fractions at 3D IoU 0.25 and 0.5."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import PairingMismatch
from .geometry import iou_3d
from .scene import Box3D
from .viewpoint import STATUS_GROUNDED, GroundingResult


@dataclass(frozen=True)
class ReferenceItem:
    scene_id: str
    query: str
    gt_box: Box3D
    tags: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: dict) -> "ReferenceItem":
        return cls(
            scene_id=str(obj["scene_id"]),
            query=str(obj["query"]),
            gt_box=Box3D.from_json(obj["gt_box"]),
            tags=dict(obj.get("tags", {})),
        )


def load_references(path) -> list[ReferenceItem]:
    with open(Path(path)) as fh:
        return [ReferenceItem.from_json(entry) for entry in json.load(fh)]


@dataclass(frozen=True)
class EvalReport:
    n: int
    acc_025: float
    acc_05: float
    per_tag: dict
    items: tuple[dict, ...]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "acc_025": self.acc_025,
            "acc_05": self.acc_05,
            "per_tag": self.per_tag,
            "items": list(self.items),
        }


def evaluate(pairs) -> EvalReport:
    """Score (GroundingResult, ReferenceItem) pairs.

    A pair hits at threshold t when the result is grounded and its box
    overlaps ground truth with IoU >= t; no_match and error results count
    as misses. Aggregates are order-independent.
    """
    items = []
    tag_groups: dict[str, list[dict]] = {}
    for result, ref in pairs:
        if not isinstance(result, GroundingResult):
            raise PairingMismatch(f"expected a GroundingResult, got {type(result).__name__}")
        if result.scene_id != ref.scene_id or result.query != ref.query:
            raise PairingMismatch(
                f"result ({result.scene_id!r}, {result.query!r}) paired with "
                f"reference ({ref.scene_id!r}, {ref.query!r})"
            )
        overlap = 0.0
        if result.status == STATUS_GROUNDED and result.box is not None:
            overlap = iou_3d(result.box, ref.gt_box)
        item = {
            "scene_id": ref.scene_id,
            "query": ref.query,
            "status": result.status,
            "pred_box": result.box.to_json() if result.box is not None else None,
            "gt_box": ref.gt_box.to_json(),
            "iou3d": overlap,
            "hit_025": result.status == STATUS_GROUNDED and overlap >= 0.25,
            "hit_05": result.status == STATUS_GROUNDED and overlap >= 0.5,
        }
        items.append(item)
        for key, value in sorted(ref.tags.items()):
            tag_groups.setdefault(f"{key}={value}", []).append(item)

    def accuracy(group, key):
        if not group:
            return 0.0
        return sum(1 for item in group if item[key]) / len(group)

    per_tag = {
        tag: {
            "n": len(group),
            "acc_025": accuracy(group, "hit_025"),
            "acc_05": accuracy(group, "hit_05"),
        }
        for tag, group in sorted(tag_groups.items())
    }
    return EvalReport(
        n=len(items),
        acc_025=accuracy(items, "hit_025"),
        acc_05=accuracy(items, "hit_05"),
        per_tag=per_tag,
        items=tuple(items),
    )
