"""Pure-numpy versions of the compiled kernels, bit-identical to them."""
import numpy as np

ROW_CHUNK = 8192


def fps(points, k, start):
    n = points.shape[0]
    out = np.empty(k, dtype=np.int64)
    sel = np.empty(k, dtype=np.float64)
    dist = np.full(n, np.inf)
    cur = start
    sel[0] = np.inf
    for i in range(k):
        out[i] = cur
        dist[cur] = -1.0
        if i == k - 1:
            break
        diff = points - points[cur]
        s = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        live = dist >= 0.0
        np.minimum(dist, s, out=dist, where=live)
        cur = int(np.argmax(dist))
        sel[i + 1] = np.sqrt(dist[cur])
    return out, sel


def _sq_block(fg, cand):
    acc = np.zeros((fg.shape[0], cand.shape[0]))
    for c in range(fg.shape[1]):
        t = fg[:, c, None] - cand[None, :, c]
        acc += t * t
    return acc


def relation_matrix(fg, cand):
    out = np.empty((fg.shape[0], cand.shape[0]))
    for lo in range(0, fg.shape[0], ROW_CHUNK):
        out[lo:lo + ROW_CHUNK] = np.sqrt(_sq_block(fg[lo:lo + ROW_CHUNK], cand))
    return out


def nearest_candidate(fg, cand):
    n = fg.shape[0]
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n)
    for lo in range(0, n, ROW_CHUNK):
        d = np.sqrt(_sq_block(fg[lo:lo + ROW_CHUNK], cand))
        lab = np.argmin(d, axis=1)
        labels[lo:lo + ROW_CHUNK] = lab
        mind[lo:lo + ROW_CHUNK] = d[np.arange(d.shape[0]), lab]
    return labels, mind
