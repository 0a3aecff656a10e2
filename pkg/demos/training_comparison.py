"""
Stratified mining vs the equal-weight baseline on the synthetic trainer
=======================================================================

Trains the toy two-head model twice per seed with identical scenes and
identical budgets: once with stratified quota selection under the ramping
schedule, once with plain equal-weight top-k mining. Prints the windowed
loss tails and the final average precision of both arms.

A couple of seeds at a few thousand iterations is enough to see the
direction; the full twenty-seed comparison lives in the acceptance tests.
"""

from sohem import MiningConfig
from sohem.harness import EVAL_IOU_THRESHOLDS, TrainerSpec, simulation_profile, train

ITERS = 3000
SEEDS = (0, 1)

spec = TrainerSpec(iterations=ITERS)
arms = {
    "stratified": MiningConfig(
        batch_size=8,
        selection_mode="strata",
        schedule_profile=simulation_profile("voc07", ITERS),
    ),
    "equal-weight": MiningConfig(
        batch_size=8,
        selection_mode="scalar",
        frozen_weights=(1.0, 1.0),
        schedule_profile=simulation_profile("voc07", ITERS),
    ),
}

for seed in SEEDS:
    print(f"seed {seed}")
    finals = {}
    for name, config in arms.items():
        trace = train(config, spec, seed=seed)
        last = trace.windows[-1]
        finals[name] = last.mean_l_loc
        ap = "  ".join(
            f"AP@{t}={trace.ap_by_iou[t]:.3f}" for t in EVAL_IOU_THRESHOLDS
        )
        print(f"  {name:13s} final window: l_cls {last.mean_l_cls:.4f} "
              f"l_loc {last.mean_l_loc:.4f} (beta {last.beta:.2f})  {ap}")
    gap = finals["equal-weight"] - finals["stratified"]
    rel = gap / finals["equal-weight"]
    print(f"  localization gap: {gap:+.5f} ({rel:+.1%} relative)\n")

print("the stratified arm shifts selection toward localization-hard examples "
      "once its ramp completes, which is where the loc-loss edge comes from")
