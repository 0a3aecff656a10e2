"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sohem import BBox, RoiRecord


def unit_box(slot: int, width: float = 8.0) -> BBox:
    """A box in its own lane so pairwise IoU is zero between slots."""
    x1 = 20.0 * slot
    return BBox(x1, 0.0, x1 + width, width)


def make_record(
    roi_id: int,
    *,
    l_cls: float = 0.5,
    l_loc: float = 0.25,
    fg: bool = True,
    image_id: int = 0,
    iteration: int = 0,
    box: BBox | None = None,
    target: BBox | None = None,
    with_p_u: bool = False,
) -> RoiRecord:
    box = box or unit_box(roi_id)
    if fg:
        target = target or box
        true_class = 1
    else:
        target = None
        l_loc = 0.0
        true_class = 0
    return RoiRecord(
        roi_id=roi_id,
        image_id=image_id,
        iteration=iteration,
        true_class=true_class,
        l_cls=l_cls,
        l_loc=l_loc,
        bbox_pred=box,
        bbox_target=target,
        p_u=math.exp(-l_cls) if with_p_u else None,
    )


def random_batch(
    rng: np.random.Generator,
    n: int,
    *,
    iteration: int = 0,
    n_images: int = 2,
    fg_fraction: float = 0.5,
) -> list[RoiRecord]:
    """Valid records with distinct losses and non-overlapping boxes."""
    # distinct losses make every ordering unique, so set comparisons are exact
    cls_losses = rng.permutation(n) * 0.01 + rng.uniform(0.0, 0.005)
    loc_losses = rng.permutation(n) * 0.01 + rng.uniform(0.0, 0.005)
    records = []
    for i in range(n):
        fg = rng.random() < fg_fraction
        records.append(
            make_record(
                i,
                l_cls=float(cls_losses[i]),
                l_loc=float(loc_losses[i]) + 0.001,
                fg=fg,
                image_id=int(rng.integers(0, n_images)),
                iteration=iteration,
            )
        )
    return records


def iou_reference(a: tuple, b: tuple) -> float:
    """Scalar corner-form IoU written independently of the package."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def nms_oracle(scored: list[tuple[RoiRecord, float]], iou_threshold: float) -> list[RoiRecord]:
    """O(n²) greedy reference: repeatedly keep the best survivor, drop overlaps."""
    alive = list(scored)
    kept: list[RoiRecord] = []
    while alive:
        best = min(alive, key=lambda rs: (-rs[1], rs[0].roi_id))
        kept.append(best[0])
        survivors = []
        for record, score in alive:
            if record is best[0]:
                continue
            overlap = iou_reference(best[0].bbox_pred.as_tuple(), record.bbox_pred.as_tuple())
            if overlap <= iou_threshold:
                survivors.append((record, score))
        alive = survivors
    return kept


def topk_oracle(records: list[RoiRecord], scores: dict[int, float], k: int) -> list[int]:
    """Sort-based selection reference: roi_ids of the top-k by score."""
    ordered = sorted(records, key=lambda r: (-scores[r.roi_id], r.roi_id))
    return [r.roi_id for r in ordered[:k]]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
