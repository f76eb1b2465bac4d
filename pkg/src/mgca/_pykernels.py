"""Reference implementations of the interval kernels (numpy / pure Python).

``_ckernels.pyx`` mirrors these function by function with the same
floating-point operation order, so both backends agree bit-for-bit.
"""

import numpy as np

BACKEND = "python"


def tiou(s1, e1, s2, e2):
    inter = min(e1, e2) - max(s1, s2)
    if inter < 0.0:
        inter = 0.0
    union = (e1 - s1) + (e2 - s2) - inter
    if union <= 0.0:
        return 1.0 if (s1 == s2 and e1 == e2) else 0.0
    return inter / union


def tiou_matrix(s1, e1, s2, e2):
    s1 = np.asarray(s1, dtype=np.float64)[:, None]
    e1 = np.asarray(e1, dtype=np.float64)[:, None]
    s2 = np.asarray(s2, dtype=np.float64)[None, :]
    e2 = np.asarray(e2, dtype=np.float64)[None, :]
    inter = np.maximum(np.minimum(e1, e2) - np.maximum(s1, s2), 0.0)
    union = (e1 - s1) + (e2 - s2) - inter
    same = (s1 == s2) & (e1 == e2)
    safe = np.where(union > 0.0, union, 1.0)
    return np.where(union > 0.0, inter / safe, np.where(same, 1.0, 0.0))


def aps_targets(times, prop_s, prop_e, gt_s, gt_e):
    """Containment mask and best covering-GT tIoU per position."""
    times = np.asarray(times, dtype=np.float64)
    n = times.shape[0]
    p_loc = np.zeros(n)
    p_hat = np.zeros(n)
    if len(gt_s) == 0 or n == 0:
        return p_loc, p_hat
    gt_s = np.asarray(gt_s, dtype=np.float64)
    gt_e = np.asarray(gt_e, dtype=np.float64)
    cover = (gt_s[None, :] <= times[:, None]) & (times[:, None] <= gt_e[None, :])
    iou = tiou_matrix(prop_s, prop_e, gt_s, gt_e)
    iou = np.where(cover, iou, -1.0)
    best = iou.max(axis=1)
    pos = cover.any(axis=1)
    p_loc[pos] = 1.0
    p_hat[pos] = best[pos]
    return p_loc, p_hat


def assign_targets(times, units, gt_s, gt_e, gt_cls):
    """Class id (-1 = background) and normalized (d_on, d_off) per position.

    Among covering GTs the shortest wins; equal durations keep the earlier one.
    """
    times = np.asarray(times, dtype=np.float64)
    units = np.asarray(units, dtype=np.float64)
    n = times.shape[0]
    cls = np.full(n, -1, dtype=np.int64)
    reg = np.zeros((n, 2))
    if len(gt_s) == 0:
        return cls, reg
    gt_s = np.asarray(gt_s, dtype=np.float64)
    gt_e = np.asarray(gt_e, dtype=np.float64)
    gt_cls = np.asarray(gt_cls, dtype=np.int64)
    dur = gt_e - gt_s
    cover = (gt_s[None, :] <= times[:, None]) & (times[:, None] <= gt_e[None, :])
    cost = np.where(cover, dur[None, :], np.inf)
    best = np.argmin(cost, axis=1)  # first minimum on ties
    pos = cover.any(axis=1)
    idx = best[pos]
    cls[pos] = gt_cls[idx]
    reg[pos, 0] = (times[pos] - gt_s[idx]) / units[pos]
    reg[pos, 1] = (gt_e[idx] - times[pos]) / units[pos]
    return cls, reg


def score_order(starts, scores):
    """Indices by descending score, ties by earlier start, then index."""
    starts = np.asarray(starts, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.shape[0]), starts, -scores))


def nms(starts, ends, scores, labels, threshold, max_keep):
    """Per-label hard NMS; returns kept indices in score order."""
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = score_order(starts, scores)
    kept = []
    for i in order:
        if len(kept) >= max_keep:
            break
        ok = True
        for j in kept:
            if labels[j] == labels[i] and tiou(starts[i], ends[i], starts[j], ends[j]) >= threshold:
                ok = False
                break
        if ok:
            kept.append(int(i))
    return np.asarray(kept, dtype=np.int64)


def match_detections(pred_vid, pred_s, pred_e, gt_vid, gt_s, gt_e, threshold):
    """Greedy matching of score-ordered predictions; returns a 0/1 TP array.

    Each prediction takes the unmatched same-video GT with the largest tIoU
    (ties: earlier GT start, then lower index) if that tIoU reaches the
    threshold.
    """
    n_pred = len(pred_s)
    n_gt = len(gt_s)
    tp = np.zeros(n_pred)
    used = np.zeros(n_gt, dtype=bool)
    for i in range(n_pred):
        best = -1.0
        best_j = -1
        for j in range(n_gt):
            if used[j] or gt_vid[j] != pred_vid[i]:
                continue
            v = tiou(pred_s[i], pred_e[i], gt_s[j], gt_e[j])
            if v > best or (v == best and gt_s[j] < gt_s[best_j]):
                best = v
                best_j = j
        if best_j >= 0 and best >= threshold:
            used[best_j] = True
            tp[i] = 1.0
    return tp
