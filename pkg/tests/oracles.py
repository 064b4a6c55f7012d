"""Independent reference implementations used to check the library."""
import itertools


def ap_reference(scores, tp, n_gt):
    """All-point interpolated AP via recall steps, written with plain loops."""
    if n_gt == 0:
        return 1.0 if not scores else 0.0
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    prec, rec = [], []
    for rank, i in enumerate(order, 1):
        hits += bool(tp[i])
        prec.append(hits / rank)
        rec.append(hits / n_gt)
    mrec = [0.0] + rec + [1.0]
    mpre = [0.0] + prec + [0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    return sum((mrec[i] - mrec[i - 1]) * mpre[i] for i in range(1, len(mrec)) if mrec[i] != mrec[i - 1])


def set_iou(a, b):
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 0.0


def best_matching_ap(preds, scores, gts, threshold):
    """Highest AP over every one-to-one matching of predictions to ground truth."""
    ious = [[set_iou(p, g) for g in gts] for p in preds]
    best = 0.0 if gts else (1.0 if not preds else 0.0)
    options = [[None] + [j for j in range(len(gts)) if ious[i][j] >= threshold] for i in range(len(preds))]
    for choice in itertools.product(*options):
        used = [j for j in choice if j is not None]
        if len(used) != len(set(used)):
            continue
        tp = [j is not None for j in choice]
        best = max(best, ap_reference(scores, tp, len(gts)))
    return best


def greedy_reference(preds, scores, gts, threshold):
    """Greedy matching written independently: returns the TP flags."""
    ious = [[set_iou(p, g) for g in gts] for p in preds]
    taken = set()
    tp = [False] * len(preds)
    for i in sorted(range(len(preds)), key=lambda i: (-scores[i], i)):
        best_j, best_iou = None, -1.0
        for j in range(len(gts)):
            if j not in taken and ious[i][j] >= threshold and ious[i][j] > best_iou:
                best_j, best_iou = j, ious[i][j]
        if best_j is not None:
            taken.add(best_j)
            tp[i] = True
    return tp
