"""Instance-segmentation metrics: AP over IoU thresholds and per-category mIoU.

Matching is greedy: predictions in descending score order (lowest id first
on ties) each take the unmatched ground truth of highest IoU at or above the
threshold. AP is the area under the precision envelope (all-point
interpolation).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .taxonomy import NO_INSTANCE, BuildingCategory, InvalidInputError

AP_RANGES = {
    "25-95": tuple(round(0.25 + 0.05 * i, 2) for i in range(15)),
    "50-95": tuple(round(0.50 + 0.05 * i, 2) for i in range(10)),
}
AP_THRESHOLDS = AP_RANGES["25-95"]
CATEGORY_ABBREV = {
    BuildingCategory.COMMERCIAL: "Co", BuildingCategory.RESIDENTIAL: "Re", BuildingCategory.OFFICE: "Of",
    BuildingCategory.CULTURAL: "Cu", BuildingCategory.TRANSPORTATION: "Tr", BuildingCategory.MUNICIPAL: "Mu",
    BuildingCategory.TEMPORARY: "Te",
}


def instance_iou(pred, gt) -> float:
    p = np.unique(np.asarray(pred, dtype=np.int64))
    g = np.unique(np.asarray(gt, dtype=np.int64))
    if p.size == 0 and g.size == 0:
        raise InvalidInputError("IoU of two empty sets is undefined")
    inter = np.intersect1d(p, g, assume_unique=True).size
    return inter / (p.size + g.size - inter)


def iou_matrix(preds, gts) -> np.ndarray:
    """Pairwise IoU between prediction and ground-truth index sets."""
    preds = [np.unique(np.asarray(p, dtype=np.int64)) for p in preds]
    gts = [np.unique(np.asarray(g, dtype=np.int64)) for g in gts]
    out = np.zeros((len(preds), len(gts)))
    if not preds or not gts:
        return out
    gsize = np.array([g.size for g in gts])
    flat = np.concatenate(gts) if gts else np.zeros(0, np.int64)
    if np.unique(flat).size == flat.size and flat.size:
        label = np.full(int(flat.max()) + 1, -1, dtype=np.int64)
        label[flat] = np.repeat(np.arange(len(gts)), gsize)
        for i, p in enumerate(preds):
            hit = label[p[p < label.size]]
            inter = np.bincount(hit[hit >= 0], minlength=len(gts))
            out[i] = inter / (p.size + gsize - inter)
    else:
        for i, p in enumerate(preds):
            for j, g in enumerate(gts):
                if p.size or g.size:
                    out[i, j] = instance_iou(p, g)
    return out


def score_order(scores) -> np.ndarray:
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def greedy_match(ious: np.ndarray, scores, threshold: float) -> np.ndarray:
    """Matched ground-truth index per prediction (``-1`` when unmatched)."""
    n_pred, n_gt = ious.shape
    matched = np.full(n_pred, -1, dtype=np.int64)
    taken = np.zeros(n_gt, dtype=bool)
    for i in score_order(scores):
        cand = np.where(taken | (ious[i] < threshold), -1.0, ious[i])
        if n_gt and cand.max() >= 0:
            j = int(np.argmax(cand))
            matched[i] = j
            taken[j] = True
    return matched


def precision_recall(scores, tp, n_gt: int):
    """Ranked precision and recall arrays for matches flagged by ``tp``."""
    order = score_order(scores)
    hits = np.asarray(tp, dtype=np.float64)[order]
    cum = np.cumsum(hits)
    precision = cum / np.arange(1, hits.size + 1)
    recall = cum / n_gt if n_gt else np.zeros_like(cum)
    return precision, recall, hits.astype(bool)


def ap_from_matches(scores, tp, n_gt: int) -> float:
    n_pred = len(scores)
    if n_gt == 0:
        return 1.0 if n_pred == 0 else 0.0
    if n_pred == 0:
        return 0.0
    precision, _, hits = precision_recall(scores, tp, n_gt)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[hits].sum() / n_gt)


def average_precision(preds, scores, gts, iou_threshold: float) -> float:
    """AP of scored prediction index sets against ground-truth index sets."""
    if not 0.0 < iou_threshold <= 1.0:
        raise InvalidInputError(f"IoU threshold must lie in (0, 1], got {iou_threshold}")
    ious = iou_matrix(preds, gts)
    matched = greedy_match(ious, scores, iou_threshold)
    return ap_from_matches(scores, matched >= 0, len(gts))


def ap_summary(preds, scores, gts, thresholds=AP_THRESHOLDS) -> tuple[float, float, float]:
    """``(AP, AP50, AP25)``: AP averaged over ``thresholds`` plus the 0.5 and 0.25 values."""
    ious = iou_matrix(preds, gts)
    table = MatchTable.from_ious(ious, scores, sorted(set(thresholds) | {0.25, 0.5}))
    return table.ap_mean(thresholds), table.ap(0.5), table.ap(0.25)


@dataclass
class MatchTable:
    """Per-threshold true-positive flags of scored predictions.

    Tables from disjoint point sets (e.g. blocks) merge by concatenation, so
    scene-level AP ranks all predictions together.
    """

    n_gt: int
    scores: np.ndarray
    hits: dict[float, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_ious(cls, ious, scores, thresholds=AP_THRESHOLDS) -> MatchTable:
        scores = np.asarray(scores, dtype=np.float64)
        return cls(ious.shape[1], scores, {t: greedy_match(ious, scores, t) >= 0 for t in thresholds})

    def merge(self, other: MatchTable) -> MatchTable:
        return MatchTable(self.n_gt + other.n_gt, np.concatenate([self.scores, other.scores]),
                          {t: np.concatenate([self.hits[t], other.hits[t]]) for t in self.hits})

    def ap(self, threshold: float) -> float:
        return ap_from_matches(self.scores, self.hits[threshold], self.n_gt)

    def ap_mean(self, thresholds=AP_THRESHOLDS) -> float:
        return float(sum(self.ap(t) for t in thresholds) / len(thresholds))

    def curve(self, threshold: float):
        precision, recall, _ = precision_recall(self.scores, self.hits[threshold], self.n_gt)
        return precision, recall


def category_iou(pred_labels, gt_labels) -> dict[BuildingCategory, float | None]:
    """Point-wise IoU of each labeled building category's mask.

    ``None`` marks categories absent from both prediction and ground truth.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    gt = np.asarray(gt_labels, dtype=np.int64)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"label arrays differ in length: {pred.shape} vs {gt.shape}")
    out: dict[BuildingCategory, float | None] = {}
    for c in BuildingCategory.labeled():
        p, g = pred == c, gt == c
        union = np.count_nonzero(p | g)
        out[c] = None if union == 0 else np.count_nonzero(p & g) / union
    return out


def miou_by_category(pred_labels, gt_labels):
    """Per-category IoU and their mean over categories present in the ground truth."""
    per = category_iou(pred_labels, gt_labels)
    present = set(np.unique(np.asarray(gt_labels, dtype=np.int64)).tolist())
    values = [v for c, v in per.items() if int(c) in present]
    return per, (float(np.mean(values)) if values else None)


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap25: float
    thresholds: list[float]
    ap_by_threshold: dict[str, float]
    category_iou: dict[str, float | None]
    miou: float | None
    n_pred: int
    n_gt: int
    n_points: int
    curves: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        return cls(**json.loads(text))

    def table(self) -> str:
        heads = ["AP", "AP50", "AP25"] + list(CATEGORY_ABBREV.values()) + ["mIoU"]
        vals = [self.ap, self.ap50, self.ap25] + [self.category_iou.get(a) for a in CATEGORY_ABBREV.values()]
        vals.append(self.miou)
        cells = ["-" if v is None else f"{v:.3f}" for v in vals]
        width = [max(len(h), len(c)) for h, c in zip(heads, cells)]
        line = lambda xs: "  ".join(x.rjust(w) for x, w in zip(xs, width))  # noqa: E731
        return "\n".join([line(heads), line(cells)])


def instance_sets(labels, groups=None) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split per-point labels (negative = none) into index sets.

    With ``groups`` (e.g. block ids), equal labels in different groups are
    distinct instances. Returns the ``(group, label)`` keys and their sets.
    """
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.zeros_like(labels) if groups is None else np.asarray(groups, dtype=np.int64)
    idx = np.flatnonzero(labels >= 0)
    if idx.size == 0:
        return np.zeros((0, 2), dtype=np.int64), []
    keys, inverse = np.unique(np.stack([groups[idx], labels[idx]], axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(keys.shape[0] + 1))
    return keys, [idx[order[bounds[k]:bounds[k + 1]]] for k in range(keys.shape[0])]


def evaluate(pred_instance, pred_scores: dict[int, float], pred_category: dict[int, int],
             gt_instance, gt_category, groups=None, ap_range: str = "25-95",
             with_curves: bool = False) -> EvalReport:
    """Score a labelled prediction against ground truth over a shared point set.

    ``pred_instance`` holds a proposal id per point (negative = unassigned);
    ``pred_scores``/``pred_category`` are keyed by proposal id. Ground-truth
    instances are split by ``groups`` when given, so a building cut by a block
    boundary counts once per block.
    """
    pred_instance = np.asarray(pred_instance, dtype=np.int64)
    gt_instance = np.asarray(gt_instance, dtype=np.int64)
    gt_category = np.asarray(gt_category, dtype=np.int64)
    if not (pred_instance.shape == gt_instance.shape == gt_category.shape):
        raise InvalidInputError("prediction and ground truth cover different point sets")
    if ap_range not in AP_RANGES:
        raise InvalidInputError(f"ap_range must be one of {sorted(AP_RANGES)}")
    thresholds = AP_RANGES[ap_range]
    pkeys, psets = instance_sets(pred_instance)
    gt_labels = np.where(gt_instance == NO_INSTANCE, -1, gt_instance)
    _, gsets = instance_sets(gt_labels, groups)
    scores = np.array([pred_scores[int(k)] for k in pkeys[:, 1]], dtype=np.float64)
    table = MatchTable.from_ious(iou_matrix(psets, gsets), scores, sorted(set(thresholds) | {0.25, 0.5}))

    pred_cat = np.full(pred_instance.size, int(BuildingCategory.UNLABELED), dtype=np.int64)
    for (_, pid), members in zip(pkeys, psets):
        pred_cat[members] = pred_category.get(int(pid), int(BuildingCategory.UNLABELED))
    gt_cat = np.where(gt_instance == NO_INSTANCE, int(BuildingCategory.UNLABELED), gt_category)
    per, miou = miou_by_category(pred_cat, gt_cat)

    curves = {}
    if with_curves:
        for t in thresholds:
            precision, recall = table.curve(t)
            curves[f"{t:.2f}"] = {"precision": precision.tolist(), "recall": recall.tolist()}
    return EvalReport(
        ap=table.ap_mean(thresholds), ap50=table.ap(0.5), ap25=table.ap(0.25),
        thresholds=list(thresholds), ap_by_threshold={f"{t:.2f}": table.ap(t) for t in thresholds},
        category_iou={CATEGORY_ABBREV[c]: v for c, v in per.items()}, miou=miou,
        n_pred=len(psets), n_gt=len(gsets), n_points=int(pred_instance.size), curves=curves,
    )
