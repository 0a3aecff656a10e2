"""Pure loss and geometry functions used throughout the mining pipeline.

Everything here is stateless and operates on plain floats, so the functions
can be called per record inside the miner or vectorised externally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import BothWeightsZero, DegenerateBox, DomainError

if TYPE_CHECKING:
    from .records import BBox

LOG_BASES = ("natural", "base10")


@dataclass(frozen=True, slots=True)
class OffsetVector:
    """Dimensionless box-offset parameters.

    t_x/t_y are the center shift normalized by the anchor size, t_w/t_h the
    log-scale size ratios.
    """

    t_x: float
    t_y: float
    t_w: float
    t_h: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.t_x, self.t_y, self.t_w, self.t_h)


def log_loss(p_u: float, base: str = "natural") -> float:
    """Classification log loss -log(p_u) of the true-class probability.

    Args:
        p_u: probability assigned to the true class, in (0, 1].
        base: "natural" (default) or "base10"; the base-10 variant exists
            for closed-form worked examples quoted in probabilities.
    """
    if not (0.0 < p_u <= 1.0):
        raise DomainError(f"p_u must be in (0, 1], got {p_u!r}")
    if base == "natural":
        return -math.log(p_u)
    if base == "base10":
        return -math.log10(p_u)
    raise DomainError(f"unknown log base {base!r}; expected one of {LOG_BASES}")


def smooth_l1(x: float) -> float:
    """Piecewise quadratic/linear regression loss: 0.5*x^2 inside |x| < 1, |x| - 0.5 outside."""
    ax = abs(x)
    if ax < 1.0:
        return 0.5 * x * x
    return ax - 0.5


def smooth_l1_inverse(loss: float) -> float:
    """The unique non-negative x with smooth_l1(x) == loss.

    sqrt(2*loss) on the quadratic branch (loss < 0.5), loss + 0.5 on the
    linear branch.
    """
    if loss < 0.5:
        return math.sqrt(2.0 * loss)
    return loss + 0.5


def loc_loss(pred: OffsetVector, target: OffsetVector) -> float:
    """Localization loss: smooth L1 summed over the four offset coordinates."""
    return (
        smooth_l1(pred.t_x - target.t_x)
        + smooth_l1(pred.t_y - target.t_y)
        + smooth_l1(pred.t_w - target.t_w)
        + smooth_l1(pred.t_h - target.t_h)
    )


def box_to_offsets(box: "BBox", anchor: "BBox") -> OffsetVector:
    """Offset parameterization of `box` relative to `anchor` (natural log sizes)."""
    bw, bh = box.x2 - box.x1, box.y2 - box.y1
    aw, ah = anchor.x2 - anchor.x1, anchor.y2 - anchor.y1
    if not (bw > 0.0 and bh > 0.0 and math.isfinite(bw) and math.isfinite(bh)):
        raise DegenerateBox(f"box has non-positive or non-finite size {bw}x{bh}")
    if not (aw > 0.0 and ah > 0.0 and math.isfinite(aw) and math.isfinite(ah)):
        raise DegenerateBox(f"anchor has non-positive or non-finite size {aw}x{ah}")
    return OffsetVector(
        t_x=((box.x1 + box.x2) - (anchor.x1 + anchor.x2)) / (2.0 * aw),
        t_y=((box.y1 + box.y2) - (anchor.y1 + anchor.y2)) / (2.0 * ah),
        t_w=math.log(bw / aw),
        t_h=math.log(bh / ah),
    )


def offsets_to_box(anchor: "BBox", offsets: OffsetVector) -> "BBox":
    """Inverse of :func:`box_to_offsets`: apply offsets to an anchor box."""
    from .records import BBox

    aw, ah = anchor.x2 - anchor.x1, anchor.y2 - anchor.y1
    if not (aw > 0.0 and ah > 0.0):
        raise DegenerateBox(f"anchor has non-positive size {aw}x{ah}")
    cx = 0.5 * (anchor.x1 + anchor.x2) + offsets.t_x * aw
    cy = 0.5 * (anchor.y1 + anchor.y2) + offsets.t_y * ah
    w = aw * math.exp(offsets.t_w)
    h = ah * math.exp(offsets.t_h)
    return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def iou(a: "BBox", b: "BBox") -> float:
    """Intersection over union of two corner-form boxes; 0.0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    if ix <= 0.0:
        return 0.0
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter
    return inter / union


def selection_score(l_cls: float, l_loc: float, alpha: float, beta: float) -> float:
    """Weighted selection score alpha*l_cls + beta*l_loc used to rank candidates."""
    if alpha == 0.0 and beta == 0.0:
        raise BothWeightsZero("selection score needs alpha or beta nonzero")
    return alpha * l_cls + beta * l_loc
