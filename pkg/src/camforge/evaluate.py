"""Localization/classification scoring over prediction and ground-truth files.

A predicted box counts as a localization hit at rank k when the true class
appears among the top-k predicted classes AND that class's box overlaps
some ground-truth box with IoU strictly greater than 0.5.  The GT-known
variant ignores the class ranking and scores the box predicted for the
true class, isolating pure box quality.  Reported errors are
100 * (1 - correct / n), rounded to two decimals.

File formats:
  ground truth  CSV rows ``image_id,class_index,x0,y0,x1,y1`` (an image may
                repeat to carry several boxes, all with the same class)
  predictions   JSON lines ``{"image_id": ..., "classes": [...],
                "boxes": {"<class>": [x0, y0, x1, y1], ...}}``
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .errors import CamforgeError
from .localize import BoundingBox

_MOD = "evaluate"

IOU_THRESHOLD = 0.5  # strict: an overlap of exactly 0.5 does not count


@dataclass(frozen=True, eq=False)
class Prediction:
    """Ranked class guesses for one image plus a box per candidate class."""

    image_id: str
    ranked_classes: tuple[int, ...]
    boxes: dict[int, BoundingBox]

    def __post_init__(self):
        ranked = tuple(int(c) for c in self.ranked_classes)
        if len(ranked) < 1:
            raise CamforgeError(_MOD, "bad_prediction", f"{self.image_id}: need at least one ranked class")
        if len(set(ranked)) != len(ranked):
            raise CamforgeError(_MOD, "bad_prediction", f"{self.image_id}: ranked classes must be distinct")
        object.__setattr__(self, "ranked_classes", ranked)
        object.__setattr__(self, "boxes", {int(c): b for c, b in self.boxes.items()})


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True class and one or more reference boxes for one image."""

    image_id: str
    class_index: int
    boxes: tuple[BoundingBox, ...]

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if len(boxes) < 1:
            raise CamforgeError(_MOD, "bad_ground_truth", f"{self.image_id}: need at least one box")
        object.__setattr__(self, "boxes", boxes)


@dataclass(frozen=True)
class EvalRecord:
    """Per-image correctness flags."""

    image_id: str
    top1_loc: bool
    top5_loc: bool
    gt_known: bool
    top1_cls: bool
    top5_cls: bool
    missing_box: bool


@dataclass(frozen=True)
class EvalReport:
    """Aggregated error percentages (two decimals) over n images."""

    top1_loc_err: float
    top5_loc_err: float
    gt_known_err: float
    top1_cls_err: float
    top5_cls_err: float
    n: int
    missing_box_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "top1_loc_err": self.top1_loc_err,
            "top5_loc_err": self.top5_loc_err,
            "gt_known_err": self.gt_known_err,
            "top1_cls_err": self.top1_cls_err,
            "top5_cls_err": self.top5_cls_err,
            "n": self.n,
            "missing_box_ids": list(self.missing_box_ids),
        }

    def to_table(self) -> str:
        rows = [
            ("top1_loc_err", f"{self.top1_loc_err:.2f}"),
            ("top5_loc_err", f"{self.top5_loc_err:.2f}"),
            ("gt_known_err", f"{self.gt_known_err:.2f}"),
            ("top1_cls_err", f"{self.top1_cls_err:.2f}"),
            ("top5_cls_err", f"{self.top5_cls_err:.2f}"),
            ("n", str(self.n)),
            ("missing_boxes", str(len(self.missing_box_ids))),
        ]
        width = max(len(name) for name, _ in rows)
        value_width = max(len(value) for _, value in rows)
        return "\n".join(f"{name:<{width}}  {value:>{value_width}}" for name, value in rows)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two half-open boxes, in [0, 1]."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _hit(box: BoundingBox | None, gt: GroundTruth) -> bool:
    return box is not None and any(iou(box, g) > IOU_THRESHOLD for g in gt.boxes)


def _topk_outcome(pred: Prediction, gt: GroundTruth, k: int) -> tuple[bool, bool]:
    """(localization hit within top-k, class matched but its box was missing)."""
    for c in pred.ranked_classes[:k]:
        if c == gt.class_index:
            box = pred.boxes.get(c)
            return _hit(box, gt), box is None
    return False, False


def loc_correct(pred: Prediction, gt: GroundTruth, k: int) -> bool:
    """True iff the true class is in the top-k and its box clears the IoU bar."""
    if pred.image_id != gt.image_id:
        raise CamforgeError(_MOD, "unmatched_ids", f"prediction {pred.image_id!r} vs ground truth {gt.image_id!r}")
    hit, _ = _topk_outcome(pred, gt, k)
    return hit


def gt_known_correct(pred_box: BoundingBox, gt: GroundTruth) -> bool:
    """Box-only correctness: IoU above the bar against any ground-truth box."""
    return _hit(pred_box, gt)


def _record(pred: Prediction, gt: GroundTruth) -> EvalRecord:
    top1, miss1 = _topk_outcome(pred, gt, 1)
    top5, miss5 = _topk_outcome(pred, gt, 5)
    gt_box = pred.boxes.get(gt.class_index)
    return EvalRecord(
        image_id=pred.image_id,
        top1_loc=top1,
        top5_loc=top5,
        gt_known=_hit(gt_box, gt),
        top1_cls=pred.ranked_classes[0] == gt.class_index,
        top5_cls=gt.class_index in pred.ranked_classes[:5],
        missing_box=miss1 or miss5 or gt_box is None,
    )


def aggregate(predictions, ground_truths) -> EvalReport:
    """Match predictions to ground truths by image id and score everything.

    Ids must match one-to-one; any unmatched or duplicated id fails with the
    offending ids listed.  The result is independent of input order.
    """
    predictions = list(predictions)
    ground_truths = list(ground_truths)
    preds = {p.image_id: p for p in predictions}
    gts = {g.image_id: g for g in ground_truths}
    if len(preds) != len(predictions) or len(gts) != len(ground_truths):
        raise CamforgeError(_MOD, "unmatched_ids", "duplicate image ids in predictions or ground truth")
    missing = sorted(set(gts) ^ set(preds))
    if missing:
        raise CamforgeError(_MOD, "unmatched_ids", f"ids without a counterpart: {', '.join(missing)}")
    if not preds:
        raise CamforgeError(_MOD, "no_records", "nothing to aggregate")

    records = [_record(preds[i], gts[i]) for i in sorted(preds)]
    n = len(records)

    def err(flag: str) -> float:
        correct = sum(1 for r in records if getattr(r, flag))
        return round(100.0 * (1.0 - correct / n), 2)

    return EvalReport(
        top1_loc_err=err("top1_loc"),
        top5_loc_err=err("top5_loc"),
        gt_known_err=err("gt_known"),
        top1_cls_err=err("top1_cls"),
        top5_cls_err=err("top5_cls"),
        n=n,
        missing_box_ids=tuple(r.image_id for r in records if r.missing_box),
    )


def read_ground_truth_csv(path) -> list[GroundTruth]:
    """Load ground truth rows, merging repeated image ids into multi-box entries."""
    boxes: dict[str, list[BoundingBox]] = {}
    classes: dict[str, int] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (line_no == 1 and row[0].strip().lower() == "image_id"):
                continue
            if len(row) != 6:
                raise CamforgeError(_MOD, "bad_csv", f"{path} line {line_no}: expected 6 columns, got {len(row)}")
            try:
                image_id = row[0].strip()
                class_index = int(row[1])
                box = BoundingBox(*(float(v) for v in row[2:6]))
            except ValueError as exc:
                raise CamforgeError(_MOD, "bad_csv", f"{path} line {line_no}: {exc}") from exc
            if image_id in classes and classes[image_id] != class_index:
                raise CamforgeError(_MOD, "bad_csv", f"{path} line {line_no}: conflicting class for {image_id!r}")
            if image_id not in classes:
                classes[image_id] = class_index
                order.append(image_id)
            boxes.setdefault(image_id, []).append(box)
    return [GroundTruth(i, classes[i], tuple(boxes[i])) for i in order]


def read_predictions_jsonl(path) -> list[Prediction]:
    """Load one JSON prediction object per line."""
    out: list[Prediction] = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(Prediction(
                    image_id=str(obj["image_id"]),
                    ranked_classes=tuple(int(c) for c in obj["classes"]),
                    boxes={int(c): BoundingBox(*(float(v) for v in xyxy))
                           for c, xyxy in obj.get("boxes", {}).items()},
                ))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CamforgeError(_MOD, "bad_jsonl", f"{path} line {line_no}: {exc}") from exc
    return out


def prediction_to_json(pred: Prediction) -> str:
    """Serialize one prediction as a compact JSON line."""
    return json.dumps({
        "image_id": pred.image_id,
        "classes": list(pred.ranked_classes),
        "boxes": {str(c): list(b.as_tuple()) for c, b in sorted(pred.boxes.items())},
    }, sort_keys=True)
