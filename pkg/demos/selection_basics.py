"""
Scoring and selecting hard examples from one mini-batch
=======================================================

Walks the smallest possible path through the engine: build a few candidate
records by hand, score them under different loss weightings, watch the
per-image suppression drop a duplicate, and let the miner pick a budget's
worth of hard examples.
"""

from sohem import (
    BBox,
    MiningConfig,
    RoiRecord,
    initial_miner,
    log_loss,
    mine,
    nms_by_loss,
    selection_score,
    smooth_l1_inverse,
)

# Two candidates from the same image. The first is slightly harder to
# classify, the second slightly harder to localize.
roi_a = RoiRecord(
    roi_id=1, image_id=0, iteration=0, true_class=1,
    l_cls=0.21, l_loc=0.11,
    bbox_pred=BBox(10, 10, 30, 30), bbox_target=BBox(12, 10, 32, 30),
)
roi_b = RoiRecord(
    roi_id=2, image_id=0, iteration=0, true_class=2,
    l_cls=0.19, l_loc=0.12,
    bbox_pred=BBox(50, 10, 70, 30), bbox_target=BBox(50, 12, 70, 32),
)

print("combined selection score, equal weights:")
for roi in (roi_a, roi_b):
    score = selection_score(roi.l_cls, roi.l_loc, alpha=1.0, beta=1.0)
    print(f"  roi {roi.roi_id}: 1.0*{roi.l_cls} + 1.0*{roi.l_loc} = {score:.2f}")

print("same records, localization-only weights:")
for roi in (roi_a, roi_b):
    score = selection_score(roi.l_cls, roi.l_loc, alpha=0.0, beta=1.0)
    print(f"  roi {roi.roi_id}: score {score:.2f}")

# The classification loss is a negative log probability, so a loss value
# can be read back as "how confident was the model in the truth":
print(f"\np=0.615 under log10 -> l_cls {log_loss(0.615, base='base10'):.3f}")
print(f"a summed smooth-L1 of 0.01 -> offset magnitude {smooth_l1_inverse(0.01):.4f}")

# Suppression keeps the highest-scoring record of any overlapping cluster.
# roi 3 sits on top of roi 1 with a lower score, so it is dropped.
roi_dup = RoiRecord(
    roi_id=3, image_id=0, iteration=0, true_class=1,
    l_cls=0.05, l_loc=0.02,
    bbox_pred=BBox(11, 10, 31, 30), bbox_target=BBox(12, 10, 32, 30),
)
scored = [(r, selection_score(r.l_cls, r.l_loc, 1.0, 1.0)) for r in (roi_a, roi_b, roi_dup)]
kept = nms_by_loss(scored, iou_threshold=0.7)
print(f"\nsurvivors of IoU-0.7 suppression: {[r.roi_id for r in kept]}")

# The miner runs the whole pipeline: validate, update thresholds, compute
# the weights in force, suppress, then keep the top of the budget.
config = MiningConfig(batch_size=2, frozen_weights=(1.0, 1.0))
result, state = mine(initial_miner(config), [roi_a, roi_b, roi_dup])
print(f"\nminer selected {[e.roi_id for e in result.selected]} "
      f"(suppressed {result.suppressed_count})")
for entry in result.selected:
    print(f"  roi {entry.roi_id}: l_select {entry.l_select:.2f}, stratum {entry.stratum.value}")
