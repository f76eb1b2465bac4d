# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interval kernels. Same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef inline double _tiou(double s1, double e1, double s2, double e2) noexcept nogil:
    cdef double inter = (e1 if e1 < e2 else e2) - (s1 if s1 > s2 else s2)
    if inter < 0.0:
        inter = 0.0
    cdef double union = (e1 - s1) + (e2 - s2) - inter
    if union <= 0.0:
        return 1.0 if (s1 == s2 and e1 == e2) else 0.0
    return inter / union


def tiou(double s1, double e1, double s2, double e2):
    return _tiou(s1, e1, s2, e2)


def tiou_matrix(s1, e1, s2, e2):
    cdef double[::1] a_s = np.ascontiguousarray(s1, dtype=np.float64)
    cdef double[::1] a_e = np.ascontiguousarray(e1, dtype=np.float64)
    cdef double[::1] b_s = np.ascontiguousarray(s2, dtype=np.float64)
    cdef double[::1] b_e = np.ascontiguousarray(e2, dtype=np.float64)
    cdef Py_ssize_t n = a_s.shape[0], m = b_s.shape[0], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = _tiou(a_s[i], a_e[i], b_s[j], b_e[j])
    return out


def aps_targets(times, prop_s, prop_e, gt_s, gt_e):
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[::1] ps = np.ascontiguousarray(prop_s, dtype=np.float64)
    cdef double[::1] pe = np.ascontiguousarray(prop_e, dtype=np.float64)
    cdef double[::1] gs = np.ascontiguousarray(gt_s, dtype=np.float64)
    cdef double[::1] ge = np.ascontiguousarray(gt_e, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], m = gs.shape[0], i, j
    p_loc_arr = np.zeros(n, dtype=np.float64)
    p_hat_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] p_loc = p_loc_arr
    cdef double[::1] p_hat = p_hat_arr
    cdef double best, v
    cdef bint covered
    with nogil:
        for i in range(n):
            best = -1.0
            covered = False
            for j in range(m):
                if gs[j] <= t[i] and t[i] <= ge[j]:
                    covered = True
                    v = _tiou(ps[i], pe[i], gs[j], ge[j])
                    if v > best:
                        best = v
            if covered:
                p_loc[i] = 1.0
                p_hat[i] = best
    return p_loc_arr, p_hat_arr


def assign_targets(times, units, gt_s, gt_e, gt_cls):
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(units, dtype=np.float64)
    cdef double[::1] gs = np.ascontiguousarray(gt_s, dtype=np.float64)
    cdef double[::1] ge = np.ascontiguousarray(gt_e, dtype=np.float64)
    cdef cnp.int64_t[::1] gc = np.ascontiguousarray(gt_cls, dtype=np.int64)
    cdef Py_ssize_t n = t.shape[0], m = gs.shape[0], i, j, best_j
    cls_arr = np.full(n, -1, dtype=np.int64)
    reg_arr = np.zeros((n, 2), dtype=np.float64)
    cdef cnp.int64_t[::1] cls = cls_arr
    cdef double[:, ::1] reg = reg_arr
    cdef double best, dur
    with nogil:
        for i in range(n):
            best_j = -1
            best = 0.0
            for j in range(m):
                if gs[j] <= t[i] and t[i] <= ge[j]:
                    dur = ge[j] - gs[j]
                    if best_j < 0 or dur < best:
                        best = dur
                        best_j = j
            if best_j >= 0:
                cls[i] = gc[best_j]
                reg[i, 0] = (t[i] - gs[best_j]) / u[i]
                reg[i, 1] = (ge[best_j] - t[i]) / u[i]
    return cls_arr, reg_arr


def score_order(starts, scores):
    starts = np.asarray(starts, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.shape[0]), starts, -scores))


def nms(starts, ends, scores, labels, double threshold, Py_ssize_t max_keep):
    cdef double[::1] s = np.ascontiguousarray(starts, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(ends, dtype=np.float64)
    cdef cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef cnp.int64_t[::1] order = np.ascontiguousarray(score_order(starts, scores), dtype=np.int64)
    cdef Py_ssize_t n = order.shape[0], a, b, i, j, n_kept = 0
    kept_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] kept = kept_arr
    cdef bint ok
    with nogil:
        for a in range(n):
            if n_kept >= max_keep:
                break
            i = order[a]
            ok = True
            for b in range(n_kept):
                j = kept[b]
                if lab[j] == lab[i] and _tiou(s[i], e[i], s[j], e[j]) >= threshold:
                    ok = False
                    break
            if ok:
                kept[n_kept] = i
                n_kept += 1
    return kept_arr[:n_kept].copy()


def match_detections(pred_vid, pred_s, pred_e, gt_vid, gt_s, gt_e, double threshold):
    cdef cnp.int64_t[::1] pv = np.ascontiguousarray(pred_vid, dtype=np.int64)
    cdef double[::1] ps = np.ascontiguousarray(pred_s, dtype=np.float64)
    cdef double[::1] pe = np.ascontiguousarray(pred_e, dtype=np.float64)
    cdef cnp.int64_t[::1] gv = np.ascontiguousarray(gt_vid, dtype=np.int64)
    cdef double[::1] gs = np.ascontiguousarray(gt_s, dtype=np.float64)
    cdef double[::1] ge = np.ascontiguousarray(gt_e, dtype=np.float64)
    cdef Py_ssize_t n_pred = ps.shape[0], n_gt = gs.shape[0], i, j, best_j
    tp_arr = np.zeros(n_pred, dtype=np.float64)
    used_arr = np.zeros(n_gt, dtype=np.uint8)
    cdef double[::1] tp = tp_arr
    cdef unsigned char[::1] used = used_arr
    cdef double best, v
    with nogil:
        for i in range(n_pred):
            best = -1.0
            best_j = -1
            for j in range(n_gt):
                if used[j] or gv[j] != pv[i]:
                    continue
                v = _tiou(ps[i], pe[i], gs[j], ge[j])
                if v > best or (v == best and gs[j] < gs[best_j]):
                    best = v
                    best_j = j
            if best_j >= 0 and best >= threshold:
                used[best_j] = 1
                tp[i] = 1.0
    return tp_arr
