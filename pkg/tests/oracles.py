"""Independent slow reference implementations used as test oracles.

Written from the definitions with plain Python loops; they share no code
with the package beyond the data containers.
"""

import math


def tiou_ref(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0:
        return 1.0 if a == b else 0.0
    return inter / union


def aps_targets_ref(times, proposals, gts):
    """Per position: containment indicator and best covering-GT tIoU."""
    p_loc, p_hat = [], []
    for t, prop in zip(times, proposals):
        best = None
        for g in gts:
            if g[0] <= t <= g[1]:
                v = tiou_ref(prop, g)
                best = v if best is None else max(best, v)
        p_loc.append(0.0 if best is None else 1.0)
        p_hat.append(0.0 if best is None else best)
    return p_loc, p_hat


def triage_ref(p_aps, p_base, lam_retain, lam_base):
    """Returns (base list of (index, class), novel index list, discarded count)."""
    base, novel, dropped = [], [], 0
    for i in range(len(p_aps)):
        row = list(p_base[i])
        m = max(row) if row else -math.inf
        if p_aps[i] >= lam_retain and m >= lam_base:
            base.append((i, row.index(m)))
        elif p_aps[i] >= lam_retain:
            novel.append(i)
        else:
            dropped += 1
    return base, novel, dropped


def ap_ref(preds, gts, thr):
    """All-point interpolated AP. preds: (video, s, e, score); gts: (video, s, e)."""
    if not gts:
        return None
    order = sorted(range(len(preds)), key=lambda i: (-preds[i][3], preds[i][1], i))
    used = [False] * len(gts)
    tp = []
    for i in order:
        v, s, e, _ = preds[i]
        best, best_j = -1.0, -1
        for j, (gv, gs, ge) in enumerate(gts):
            if used[j] or gv != v:
                continue
            x = tiou_ref((s, e), (gs, ge))
            if x > best or (x == best and gs < gts[best_j][1]):
                best, best_j = x, j
        hit = best_j >= 0 and best >= thr
        if hit:
            used[best_j] = True
        tp.append(1 if hit else 0)
    prec, rec, c = [], [], 0
    for k, t in enumerate(tp, 1):
        c += t
        prec.append(c / k)
        rec.append(c / len(gts))
    ap, prev_r = 0.0, 0.0
    for k in range(len(tp)):
        env = max(prec[k:])
        ap += (rec[k] - prev_r) * env
        prev_r = rec[k]
    return ap


def topk_mean_exhaustive(column, k):
    """Max over every size-k subset of the subset mean (brute force)."""
    from itertools import combinations

    return max(math.fsum(c) / k for c in combinations(column, k))
