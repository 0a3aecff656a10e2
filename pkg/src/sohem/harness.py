"""Desk-scale synthetic trainer: two linear heads fed through the miner.

Scenes are procedurally generated boxes with class labels; the model is a
linear softmax classifier plus a linear offset regressor over a small
feature vector (class evidence, encoded geometry, bias). That keeps
gradients exact and full training runs in seconds while still giving the
miner a real workload: classification loss dominates early, localization
improves only through the foreground records that actually get selected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import DivergedLoss
from .miner import initial_miner, mine
from .records import BBox, MiningConfig, RoiRecord, encode_record, encode_selection
from .schedule import ScheduleProfile, profile

EVAL_IOU_THRESHOLDS = (0.5, 0.6, 0.7)

_EVAL_STREAM = 0x5EED
_MAX_RESAMPLE_ROUNDS = 64
_SCENE_BLOCK_ITERS = 32


def simulation_profile(name: str, total_iters: int) -> ScheduleProfile:
    """Named schedule preset rescaled for a toy run of `total_iters`.

    Window and ramp lengths scale proportionally. The stability bound is
    loosened to 0.08: synthetic windowed means are far noisier than the
    reference training curves the 0.02 default assumes, and would otherwise
    keep the ramp from ever starting.
    """
    return profile(name, stability_rel_delta=0.08).scaled(total_iters)


@dataclass(frozen=True, slots=True)
class TrainerSpec:
    """Generator and optimizer settings for a synthetic run.

    The two jitter scales make localization difficulty heavy-tailed: most
    foreground candidates sit close to their truth box, a hard minority is
    pushed toward the IoU floor. Class evidence and geometry noise are
    independent, so classification hardness says nothing about
    localization hardness.
    """

    n_classes: int = 3
    images_per_batch: int = 2
    rois_per_image: int = 16
    fg_fraction: float = 0.25
    objects_min: int = 1
    objects_max: int = 4
    scene_extent: float = 100.0
    box_size_min: float = 12.0
    box_size_max: float = 40.0
    gt_max_iou: float = 0.3
    jitter_scale: float = 0.20
    jitter_scale_hard: float = 0.70
    hard_fraction: float = 0.40
    class_signal: float = 1.5
    class_noise: float = 1.0
    offset_gain: float = 0.5
    offset_noise: float = 0.05
    iterations: int = 20_000
    learning_rate: float = 0.03
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 7_500
    eval_scenes: int = 64
    detection_nms_iou: float = 0.3

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("need a background class plus at least one object class")
        if self.rois_per_image < 1 or self.images_per_batch < 1:
            raise ValueError("rois_per_image and images_per_batch must be >= 1")
        if not (1 <= self.objects_min <= self.objects_max):
            raise ValueError("objects_min..objects_max must be a range from >= 1")
        if not (0.0 < self.fg_fraction <= 1.0):
            raise ValueError("fg_fraction must be in (0, 1]")
        if not (0.0 < self.box_size_min <= self.box_size_max < self.scene_extent):
            raise ValueError("box sizes must fit the scene extent")

    @property
    def feature_dim(self) -> int:
        return self.n_classes + 4 + 1


@dataclass(frozen=True, slots=True)
class SyntheticScene:
    """One generated image: truth boxes plus scored candidates, all arrays."""

    image_id: int
    gt_boxes: np.ndarray      # (G, 4) corner form
    gt_classes: np.ndarray    # (G,) ints >= 1
    cand_boxes: np.ndarray    # (R, 4)
    cand_classes: np.ndarray  # (R,) ints, 0 = background
    cand_targets: np.ndarray  # (R, 4), NaN rows for background
    features: np.ndarray      # (R, feature_dim)
    fg_mask: np.ndarray       # (R,) bool


def _boxes_from_centers(centers: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    half = sizes / 2.0
    return np.concatenate([centers - half, centers + half], axis=1)


def _pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between (N,4) and (M,4) corner-form boxes."""
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def _paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise IoU of row-aligned (N,4) box arrays."""
    ix = np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0])
    iy = np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a + area_b - inter)


def _offsets_vec(boxes: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Vectorized offset parameterization of `boxes` relative to `anchors`."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    t = np.empty((len(boxes), 4))
    t[:, 0] = ((boxes[:, 0] + boxes[:, 2]) - (anchors[:, 0] + anchors[:, 2])) / (2.0 * aw)
    t[:, 1] = ((boxes[:, 1] + boxes[:, 3]) - (anchors[:, 1] + anchors[:, 3])) / (2.0 * ah)
    t[:, 2] = np.log(bw / aw)
    t[:, 3] = np.log(bh / ah)
    return t


def _apply_offsets_vec(anchors: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    cx = 0.5 * (anchors[:, 0] + anchors[:, 2]) + offsets[:, 0] * aw
    cy = 0.5 * (anchors[:, 1] + anchors[:, 3]) + offsets[:, 1] * ah
    # exp is clipped: a wild regressor must not overflow the evaluator
    w = aw * np.exp(np.clip(offsets[:, 2], -4.0, 4.0))
    h = ah * np.exp(np.clip(offsets[:, 3], -4.0, 4.0))
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def _iou_scalar(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    if ix <= 0.0:
        return 0.0
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


@dataclass(frozen=True, slots=True)
class _SceneBatch:
    """Scenes of one iteration, plus their candidate arrays stacked row-wise."""

    scenes: list[SyntheticScene]
    features: np.ndarray
    classes: np.ndarray
    fg_mask: np.ndarray
    cand_boxes: np.ndarray
    target_offsets: np.ndarray  # zeros on background rows


def _generate_batch(rng: np.random.Generator, spec: TrainerSpec,
                    image_ids: Sequence[int]) -> _SceneBatch:
    """Draw a batch of scenes with one shared set of vectorized rounds.

    Foreground candidates are jittered copies of an assigned truth box,
    resampled until they overlap it at IoU >= 0.5 (falling back to an exact
    copy if jitter keeps missing); background candidates are resampled until
    they clear every truth box of their scene below 0.5.
    """
    n_img = len(image_ids)
    r = spec.rois_per_image
    n_fg = max(1, round(r * spec.fg_fraction))
    n_bg = r - n_fg
    rows = n_img * r

    # truth boxes: one vector draw, scalar fix-up of the rare crowded pairs
    n_gt = rng.integers(spec.objects_min, spec.objects_max + 1, n_img)
    total_gt = int(n_gt.sum())
    gt_sizes = rng.uniform(spec.box_size_min, spec.box_size_max, (total_gt, 2))
    gt_centers = rng.uniform(gt_sizes / 2.0, spec.scene_extent - gt_sizes / 2.0)
    all_gt = _boxes_from_centers(gt_centers, gt_sizes)
    gt_offset = np.concatenate([[0], np.cumsum(n_gt)])
    if spec.objects_max > 1:
        gt_rows = all_gt.tolist()
        for s in range(n_img):
            lo, hi = int(gt_offset[s]), int(gt_offset[s + 1])
            for i in range(lo + 1, hi):
                for _ in range(_MAX_RESAMPLE_ROUNDS):
                    if all(_iou_scalar(gt_rows[i], gt_rows[j]) <= spec.gt_max_iou
                           for j in range(lo, i)):
                        break
                    w = rng.uniform(spec.box_size_min, spec.box_size_max)
                    h = rng.uniform(spec.box_size_min, spec.box_size_max)
                    cx = rng.uniform(w / 2.0, spec.scene_extent - w / 2.0)
                    cy = rng.uniform(h / 2.0, spec.scene_extent - h / 2.0)
                    gt_rows[i] = [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]
        all_gt = np.array(gt_rows)
    all_gt_classes = rng.integers(1, spec.n_classes, total_gt)

    # foreground: every scene's jittered candidates share the redraw rounds
    total_fg = n_img * n_fg
    assign_local = rng.integers(0, np.repeat(n_gt, n_fg))
    assign = assign_local + np.repeat(gt_offset[:-1], n_fg)
    base = all_gt[assign]
    base_w = base[:, 2] - base[:, 0]
    base_h = base[:, 3] - base[:, 1]
    jit = np.where(rng.random(total_fg) < spec.hard_fraction,
                   spec.jitter_scale_hard, spec.jitter_scale)

    fg_boxes = np.empty((total_fg, 4))
    todo = np.ones(total_fg, dtype=bool)
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        idx = np.flatnonzero(todo)
        if idx.size == 0:
            break
        j = jit[idx]
        sub = base[idx]
        dx = rng.normal(0.0, 1.0, idx.size) * j * base_w[idx]
        dy = rng.normal(0.0, 1.0, idx.size) * j * base_h[idx]
        sw = base_w[idx] * np.exp(rng.normal(0.0, 1.0, idx.size) * j * 0.5)
        sh = base_h[idx] * np.exp(rng.normal(0.0, 1.0, idx.size) * j * 0.5)
        cx = (sub[:, 0] + sub[:, 2]) / 2 + dx
        cy = (sub[:, 1] + sub[:, 3]) / 2 + dy
        cand = np.stack([cx - sw / 2, cy - sh / 2, cx + sw / 2, cy + sh / 2], axis=1)
        good = _paired_iou(cand, sub) >= 0.5
        fg_boxes[idx[good]] = cand[good]
        todo[idx[good]] = False
    # a truth box overlaps itself fully, so exhausted rows stay valid foreground
    fg_boxes[todo] = base[todo]

    # background: clearance is against the candidate's own scene only
    total_bg = n_img * n_bg
    bg_scene = np.repeat(np.arange(n_img), n_bg)
    gt_scene = np.repeat(np.arange(n_img), n_gt)
    bg_boxes = np.empty((total_bg, 4))
    todo = np.ones(total_bg, dtype=bool)
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        idx = np.flatnonzero(todo)
        if idx.size == 0:
            break
        sizes = rng.uniform(spec.box_size_min, spec.box_size_max, (idx.size, 2))
        centers = rng.uniform(sizes / 2.0, spec.scene_extent - sizes / 2.0)
        cand = _boxes_from_centers(centers, sizes)
        overlap = _pairwise_iou(cand, all_gt)
        own = gt_scene[None, :] == bg_scene[idx][:, None]
        clear = np.where(own, overlap, 0.0).max(axis=1) < 0.5
        bg_boxes[idx[clear]] = cand[clear]
        todo[idx[clear]] = False
    if todo.any():
        raise RuntimeError("background sampling failed to clear the truth boxes")

    fg_targets = all_gt[assign]
    fg_offsets = _offsets_vec(fg_targets, fg_boxes)

    # row layout: per scene, n_fg foreground rows then n_bg background rows
    fg_rows = (np.arange(total_fg) // n_fg) * r + np.arange(total_fg) % n_fg
    bg_rows = (np.arange(total_bg) // n_bg) * r + n_fg + np.arange(total_bg) % n_bg
    cand_boxes = np.empty((rows, 4))
    cand_boxes[fg_rows] = fg_boxes
    cand_boxes[bg_rows] = bg_boxes
    classes = np.zeros(rows, dtype=np.int64)
    classes[fg_rows] = all_gt_classes[assign]
    fg_mask = np.zeros(rows, dtype=bool)
    fg_mask[fg_rows] = True
    cand_targets = np.full((rows, 4), np.nan)
    cand_targets[fg_rows] = fg_targets
    target_offsets = np.zeros((rows, 4))
    target_offsets[fg_rows] = fg_offsets

    features = rng.normal(0.0, spec.offset_noise, (rows, spec.feature_dim))
    features[:, : spec.n_classes] = rng.normal(0.0, spec.class_noise, (rows, spec.n_classes))
    features[np.arange(rows), classes] += spec.class_signal
    features[fg_rows, spec.n_classes : spec.n_classes + 4] += fg_offsets * spec.offset_gain
    features[:, -1] = 1.0

    scenes = []
    for s, image_id in enumerate(image_ids):
        lo, hi = s * r, (s + 1) * r
        glo, ghi = int(gt_offset[s]), int(gt_offset[s + 1])
        scenes.append(SyntheticScene(
            image_id=image_id,
            gt_boxes=all_gt[glo:ghi],
            gt_classes=all_gt_classes[glo:ghi],
            cand_boxes=cand_boxes[lo:hi],
            cand_classes=classes[lo:hi],
            cand_targets=cand_targets[lo:hi],
            features=features[lo:hi],
            fg_mask=fg_mask[lo:hi],
        ))
    return _SceneBatch(
        scenes=scenes,
        features=features,
        classes=classes,
        fg_mask=fg_mask,
        cand_boxes=cand_boxes,
        target_offsets=target_offsets,
    )


def generate_scene(rng: np.random.Generator, spec: TrainerSpec, image_id: int = 0) -> SyntheticScene:
    """Draw one scene: truth boxes, then jittered foreground and clear background.

    Deterministic in the generator state: the same seeded rng yields the
    same scene. Foreground rows come first, then background.
    """
    return _generate_batch(rng, spec, [image_id]).scenes[0]


@dataclass(slots=True)
class ToyModel:
    """Linear classifier + linear offset regressor, trained with plain SGD."""

    w_cls: np.ndarray  # (feature_dim, n_classes)
    w_reg: np.ndarray  # (feature_dim, 4)

    @classmethod
    def zeros(cls, spec: TrainerSpec) -> "ToyModel":
        return cls(
            w_cls=np.zeros((spec.feature_dim, spec.n_classes)),
            w_reg=np.zeros((spec.feature_dim, 4)),
        )

    def forward(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Class probabilities (softmax rows) and predicted offsets."""
        logits = features @ self.w_cls
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        return p, features @ self.w_reg

    def step(self, g_cls: np.ndarray, g_reg: np.ndarray, lr: float) -> None:
        self.w_cls -= lr * g_cls
        self.w_reg -= lr * g_reg


def selected_mean_loss(model: ToyModel, features: np.ndarray, classes: np.ndarray,
                       target_offsets: np.ndarray, fg_mask: np.ndarray,
                       selected: np.ndarray) -> float:
    """Mean (l_cls + l_loc) over the selected rows; the quantity SGD descends."""
    probs, pred = model.forward(features[selected])
    cls = classes[selected]
    l_cls = -np.log(probs[np.arange(len(cls)), cls])
    fg = fg_mask[selected]
    diff = pred[fg] - target_offsets[selected][fg]
    a = np.abs(diff)
    sl1 = np.where(a < 1.0, 0.5 * a * a, a - 0.5).sum(axis=1)
    return float((l_cls.sum() + sl1.sum()) / len(cls))


def batch_gradients(model: ToyModel, features: np.ndarray, classes: np.ndarray,
                    target_offsets: np.ndarray, fg_mask: np.ndarray,
                    selected: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of :func:`selected_mean_loss` for both heads."""
    x = features[selected]
    probs, pred = model.forward(x)
    y = np.zeros_like(probs)
    y[np.arange(len(selected)), classes[selected]] = 1.0
    g_cls = x.T @ (probs - y) / len(selected)

    fg = fg_mask[selected]
    g_reg = np.zeros_like(model.w_reg)
    if fg.any():
        diff = np.clip(pred[fg] - target_offsets[selected][fg], -1.0, 1.0)
        g_reg = x[fg].T @ diff / len(selected)
    return g_cls, g_reg


@dataclass(frozen=True, slots=True)
class WindowStats:
    """Losses averaged over one schedule window, with the weights in force."""

    index: int
    end_iteration: int
    mean_l_cls: float
    mean_l_loc: float
    alpha: float
    beta: float


@dataclass(frozen=True, slots=True)
class MetricsTrace:
    """Everything a run produces: windowed losses, final AP, the model."""

    seed: int
    windows: tuple[WindowStats, ...]
    ap_by_iou: dict[float, float]
    ap_per_class: dict[float, dict[int, float]]
    model: ToyModel

    @property
    def final_window(self) -> WindowStats:
        if not self.windows:
            raise ValueError("trace has no completed windows")
        return self.windows[-1]


def _build_records(scenes: Sequence[SyntheticScene], iteration: int,
                   probs: np.ndarray, pred_offsets: np.ndarray,
                   target_offsets: np.ndarray) -> list[RoiRecord]:
    classes = np.concatenate([s.cand_classes for s in scenes])
    p_u_all = np.maximum(probs[np.arange(len(classes)), classes], 1e-12)
    l_cls_all = (-np.log(p_u_all)).tolist()
    p_u_all = p_u_all.tolist()
    d = np.abs(pred_offsets - target_offsets)
    l_loc_all = np.where(d < 1.0, 0.5 * d * d, d - 0.5).sum(axis=1).tolist()

    records = []
    row = 0
    for scene in scenes:
        boxes = scene.cand_boxes.tolist()
        targets = scene.cand_targets.tolist()
        fg = scene.fg_mask.tolist()
        cls = scene.cand_classes.tolist()
        for j in range(len(boxes)):
            records.append(RoiRecord(
                roi_id=row,
                image_id=scene.image_id,
                iteration=iteration,
                true_class=cls[j],
                l_cls=l_cls_all[row],
                l_loc=l_loc_all[row] if fg[j] else 0.0,
                bbox_pred=BBox(*boxes[j]),
                bbox_target=BBox(*targets[j]) if fg[j] else None,
                p_u=p_u_all[row],
            ))
            row += 1
    return records


def train(miner_config: MiningConfig, spec: TrainerSpec, seed: int,
          record_sink: IO[str] | None = None,
          selection_sink: IO[str] | None = None) -> MetricsTrace:
    """Run one synthetic training job with the miner choosing the gradients.

    Per iteration: draw an images_per_batch scene batch, forward the model on
    every candidate, hand true per-record losses to the miner, then take one
    SGD step on the mean loss of the selected records only. Backpropagation
    always weights the two losses equally; the schedule biases selection, not
    the gradient.

    Raises:
        DivergedLoss: a windowed mean loss left the sane range (> 1e3).
    """
    rng = np.random.default_rng(seed)
    model = ToyModel.zeros(spec)
    miner = initial_miner(miner_config)
    window_iters = miner_config.schedule_profile.window_iters
    n = spec.images_per_batch
    rows = n * spec.rois_per_image

    windows: list[WindowStats] = []
    win_cls = win_loc = 0.0
    win_count = 0
    lr = spec.learning_rate
    block: _SceneBatch | None = None

    for it in range(spec.iterations):
        if it > 0 and it % spec.lr_decay_every == 0:
            lr *= spec.lr_decay_factor

        # scenes are independent of the model, so they are drawn a block of
        # iterations at a time; only the miner and the SGD step are stateful
        k = it % _SCENE_BLOCK_ITERS
        if k == 0:
            m = min(_SCENE_BLOCK_ITERS, spec.iterations - it)
            block = _generate_batch(rng, spec, range(n * it, n * (it + m)))
        sl = slice(k * rows, (k + 1) * rows)
        features = block.features[sl]
        classes = block.classes[sl]
        fg_mask = block.fg_mask[sl]
        target_offsets = block.target_offsets[sl]

        probs, pred_offsets = model.forward(features)
        records = _build_records(block.scenes[k * n : (k + 1) * n], it,
                                 probs, pred_offsets, target_offsets)

        selection, miner = mine(miner, records)
        if record_sink is not None:
            record_sink.write("".join(encode_record(rec) + "\n" for rec in records))
        if selection_sink is not None:
            selection_sink.write(encode_selection(selection) + "\n")

        if selection.selected:
            sel = np.array([e.roi_id for e in selection.selected], dtype=np.intp)
            g_cls, g_reg = batch_gradients(model, features, classes, target_offsets,
                                           fg_mask, sel)
            model.step(g_cls, g_reg, lr)

        mean_cls = sum(rec.l_cls for rec in records) / len(records)
        n_fg = int(fg_mask.sum())
        mean_loc = (sum(rec.l_loc for rec in records) / n_fg) if n_fg else 0.0
        win_cls += mean_cls
        win_loc += mean_loc
        win_count += 1
        if win_count == window_iters:
            stats = WindowStats(
                index=len(windows),
                end_iteration=it,
                mean_l_cls=win_cls / win_count,
                mean_l_loc=win_loc / win_count,
                alpha=selection.alpha,
                beta=selection.beta,
            )
            if stats.mean_l_cls > 1e3 or stats.mean_l_loc > 1e3:
                raise DivergedLoss(
                    f"window {stats.index} means ({stats.mean_l_cls:.3g}, "
                    f"{stats.mean_l_loc:.3g}) exceed 1e3"
                )
            windows.append(stats)
            win_cls = win_loc = 0.0
            win_count = 0

    ap_by_iou: dict[float, float] = {}
    ap_per_class: dict[float, dict[int, float]] = {}
    eval_rng = np.random.default_rng([seed, _EVAL_STREAM])
    eval_scenes = _generate_batch(eval_rng, spec, range(spec.eval_scenes)).scenes
    for thr in EVAL_IOU_THRESHOLDS:
        result = evaluate_ap(model, eval_scenes, thr, nms_iou=spec.detection_nms_iou)
        ap_by_iou[thr] = result.mean
        ap_per_class[thr] = dict(result.per_class)

    return MetricsTrace(
        seed=seed,
        windows=tuple(windows),
        ap_by_iou=ap_by_iou,
        ap_per_class=ap_per_class,
        model=model,
    )


@dataclass(frozen=True, slots=True)
class ApResult:
    """Per-class average precision and its mean at one IoU threshold."""

    iou_threshold: float
    per_class: tuple[tuple[int, float], ...]

    @property
    def mean(self) -> float:
        if not self.per_class:
            return 0.0
        return sum(ap for _, ap in self.per_class) / len(self.per_class)


def _greedy_box_nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Indices kept by plain score-ranked NMS (strict-inequality suppression)."""
    n = len(scores)
    order = np.lexsort((np.arange(n), -scores))
    doomed = (_pairwise_iou(boxes[order], boxes[order]) > iou_threshold).tolist()
    keep = []
    alive = [True] * n
    for i in range(n):
        if not alive[i]:
            continue
        keep.append(int(order[i]))
        row = doomed[i]
        for j in range(i + 1, n):
            if alive[j] and row[j]:
                alive[j] = False
    return np.array(keep, dtype=np.intp)


def average_precision(scores: np.ndarray, matched: np.ndarray, n_truth: int) -> float:
    """Area under the precision-recall curve, continuous integration.

    `matched` flags each detection (already sorted with `scores` descending)
    as a true positive. Precision is replaced by its running maximum from the
    right before integrating, so the curve is its monotone envelope.
    """
    if n_truth == 0:
        return 0.0
    if len(scores) == 0:
        return 0.0
    tp = np.cumsum(matched)
    fp = np.cumsum(~matched)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev_recall) * precision).sum())


def evaluate_ap(model: ToyModel, scenes: Sequence[SyntheticScene],
                iou_threshold: float, nms_iou: float = 0.3) -> ApResult:
    """Score every candidate, dedupe per class, greedily match, integrate PR.

    Detections are ranked by class probability and matched to the
    highest-IoU unmatched truth box of the same class in the same scene;
    a match requires IoU >= iou_threshold.
    """
    per_class_dets: dict[int, list[tuple[float, int, np.ndarray]]] = {}
    n_truth: dict[int, int] = {}
    for si, scene in enumerate(scenes):
        for c in scene.gt_classes.tolist():
            n_truth[c] = n_truth.get(c, 0) + 1
        probs, offsets = model.forward(scene.features)
        refined = _apply_offsets_vec(scene.cand_boxes, offsets)
        for c in range(1, probs.shape[1]):
            scores = probs[:, c]
            keep = _greedy_box_nms(refined, scores, nms_iou)
            for j in keep.tolist():
                per_class_dets.setdefault(c, []).append((float(scores[j]), si, refined[j]))

    per_class: list[tuple[int, float]] = []
    for c in sorted(n_truth):
        dets = per_class_dets.get(c, [])
        dets.sort(key=lambda d: (-d[0], d[1]))
        matched = np.zeros(len(dets), dtype=bool)
        used: set[tuple[int, int]] = set()
        for di, (_, si, box) in enumerate(dets):
            gt = scenes[si]
            rows = np.flatnonzero(gt.gt_classes == c)
            if rows.size == 0:
                continue
            overlap = _pairwise_iou(box[None, :], gt.gt_boxes[rows])[0]
            best = -1
            best_iou = 0.0
            for k, gi in enumerate(rows.tolist()):
                if (si, gi) in used:
                    continue
                if overlap[k] >= iou_threshold and overlap[k] > best_iou:
                    best, best_iou = gi, overlap[k]
            if best >= 0:
                used.add((si, best))
                matched[di] = True
        scores = np.array([d[0] for d in dets])
        per_class.append((c, average_precision(scores, matched, n_truth[c])))
    return ApResult(iou_threshold=iou_threshold, per_class=tuple(per_class))
