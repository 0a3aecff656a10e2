"""
Watching the loss-weight schedule move through its phases
=========================================================

The schedule starts classification-only, waits for the windowed total loss
to flatten out, then ramps the localization weight linearly to its target.
This script feeds a synthetic decaying loss stream into the observer and
prints the phase transitions, a coarse trace of beta, and how the
per-stratum quotas shift as the ramp progresses.
"""

import numpy as np

from sohem import initial_schedule, observe_losses, profile, stratum_quotas

# A short profile so the whole story fits in a few hundred iterations.
prof = profile("voc07", window_iters=25, ramp_iters=150, stability_windows=3)
state = initial_schedule(prof)
print(f"profile: target beta {prof.beta_target}, window {prof.window_iters} iters, "
      f"ramp {prof.ramp_iters} iters\n")

rng = np.random.default_rng(0)
phase = state.phase
marks = []
for it in range(600):
    # losses decay early, then settle; the observer should notice the settling
    level = 1.0 + 2.0 * np.exp(-it / 40.0)
    noise = 1.0 + rng.normal(0.0, 0.01)
    state = observe_losses(state, it, 0.6 * level * noise, 0.3 * level * noise)
    if state.phase != phase:
        print(f"iteration {it:3d}: {phase} -> {state.phase} "
              f"(alpha {state.alpha}, beta {state.beta:.3f})")
        phase = state.phase
    if it % 50 == 49:
        marks.append(state.beta)

print("\nbeta every 50 iterations:")
print("  " + "  ".join(f"{b:.2f}" for b in marks))

# Quotas: how a budget of 16 is split across the four strata (high/low
# classification x high/low localization loss) as the ramp fraction grows.
counts = (10, 10, 10, 10)
print(f"\nquota split of budget 16 over strata {counts}:")
for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
    quotas = stratum_quotas(state, 16, counts, rho=rho)
    print(f"  ramp fraction {rho:4.2f}: s1={quotas[0]:2d} s2={quotas[1]:2d} "
          f"s3={quotas[2]:2d} s4={quotas[3]:2d}")

print("\nthe localization-heavy strata (s1, s3) absorb the budget as the ramp "
      "completes; before it starts, half the budget stays with s2 and s4")
