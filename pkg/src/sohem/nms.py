"""Loss-based non-maximum suppression over co-located candidates.

Run per image: overlap across different images is meaningless, so callers
must partition by image_id first (the miner does). Suppression is greedy by
descending score with strict-inequality overlap (IoU exactly equal to the
threshold survives).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import MixedImages
from .records import RoiRecord


def nms_by_loss(scored: Sequence[tuple[RoiRecord, float]], iou_threshold: float) -> list[RoiRecord]:
    """Greedy suppression of lower-scored overlapping records.

    Args:
        scored: (record, score) pairs from a single image.
        iou_threshold: overlap above which the lower-scored record is removed.

    Returns:
        Kept records in descending score order, ties broken by roi_id
        ascending. Every removed record overlaps a kept record of a score
        at least its own by more than the threshold.
    """
    if not scored:
        return []
    if len({r.image_id for r, _ in scored}) > 1:
        raise MixedImages("suppression runs per image; partition by image_id first")

    n = len(scored)
    order = sorted(range(n), key=lambda i: (-scored[i][1], scored[i][0].roi_id))
    boxes = np.array([scored[i][0].bbox_pred.as_tuple() for i in order], dtype=np.float64)
    x1, y1, x2, y2 = boxes.T
    areas = (x2 - x1) * (y2 - y1)
    # one vectorized n x n overlap table, then a scalar greedy pass over it
    iw = np.clip(np.minimum(x2[:, None], x2[None, :]) - np.maximum(x1[:, None], x1[None, :]), 0.0, None)
    ih = np.clip(np.minimum(y2[:, None], y2[None, :]) - np.maximum(y1[:, None], y1[None, :]), 0.0, None)
    inter = iw * ih
    doomed = (inter / (areas[:, None] + areas[None, :] - inter) > iou_threshold).tolist()

    kept: list[RoiRecord] = []
    alive = [True] * n
    for i in range(n):
        if not alive[i]:
            continue
        kept.append(scored[order[i]][0])
        row = doomed[i]
        for j in range(i + 1, n):
            if alive[j] and row[j]:
                alive[j] = False
    return kept
