"""Training objectives.

Each loss is a pure numpy function returning ``(value, grad)`` with the
gradient taken w.r.t. its prediction input. :func:`attach` wraps such a
function as a scalar node on a :class:`~mgca.numerics.Graph` so backward
flows into the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .errors import ContractError, DimensionError, DivergenceError
from .geometry import diou_loss_batch
from .model import ModelParams, proj_forward
from .numerics import Graph, Var
from .supervision import ApsTargets, ClsRegTargets

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0 or self.gamma < 0.0:
            raise ContractError(f"invalid focal parameters alpha={self.alpha} gamma={self.gamma}")


@dataclass(frozen=True)
class LossBreakdown:
    l_loc: float
    l_cc: float
    l_app: float
    l_contrast: float
    total: float
    n_pos: int = 0

    def as_dict(self) -> dict:
        return {
            "l_loc": self.l_loc,
            "l_cc": self.l_cc,
            "l_app": self.l_app,
            "l_contrast": self.l_contrast,
            "total": self.total,
            "n_pos": self.n_pos,
        }


def focal_loss(p_base: np.ndarray, class_id: np.ndarray, fp: FocalParams = FocalParams()):
    """Binary focal loss over every (position, class) pair, divided by max(1, #positives).

    ``class_id`` holds the target base class per position, -1 for background.
    """
    p_base = np.asarray(p_base, dtype=np.float64)
    class_id = np.asarray(class_id)
    if p_base.ndim != 2 or class_id.shape != (p_base.shape[0],):
        raise DimensionError(f"focal loss shapes {p_base.shape} vs {class_id.shape}")
    a, gam = fp.alpha, fp.gamma
    p = np.clip(p_base, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.zeros_like(p)
    pos = class_id >= 0
    y[np.nonzero(pos)[0], class_id[pos]] = 1.0
    n_pos = max(1, int(pos.sum()))

    log_p = np.log(p)
    log_q = np.log1p(-p)
    q = 1.0 - p
    pos_term = -a * q**gam * log_p
    neg_term = -(1.0 - a) * p**gam * log_q
    value = float(np.sum(np.where(y > 0, pos_term, neg_term))) / n_pos

    # q**(gam-1) blows up at gam < 1 and q -> 0; clamped p keeps it finite
    d_pos = -a * (-gam * q ** (gam - 1.0) * log_p + q**gam / p) if gam > 0 else -a / p
    d_neg = -(1.0 - a) * (gam * p ** (gam - 1.0) * log_q - p**gam / q) if gam > 0 else (1.0 - a) / q
    grad = np.where(y > 0, d_pos, d_neg) / n_pos
    grad = np.where((p_base > PROB_CLAMP) & (p_base < 1.0 - PROB_CLAMP), grad, 0.0)
    return value, grad


def loc_loss(onset_offset: np.ndarray, targets: ClsRegTargets):
    """Mean DIoU over positive positions, in cell-normalized coordinates.

    The prediction at a position spans [-d_on, d_off] around the position;
    the target spans [-d_on*, d_off*].
    """
    oo = np.asarray(onset_offset, dtype=np.float64)
    grad = np.zeros_like(oo)
    pos = targets.positive
    n = int(pos.sum())
    if n == 0:
        return 0.0, grad
    pred = oo[pos]
    tgt = targets.reg_target[pos]
    loss, g = diou_loss_batch(-pred[:, 0], pred[:, 1], -tgt[:, 0], tgt[:, 1])
    grad[pos, 0] = -g[:, 0] / n
    grad[pos, 1] = g[:, 1] / n
    return float(loss.sum()) / n, grad


def app_loss(p_aps: np.ndarray, targets: ApsTargets):
    """Masked L1 between predicted and target presence scores."""
    p = np.asarray(p_aps, dtype=np.float64).reshape(-1)
    if p.shape != targets.p_loc.shape:
        raise DimensionError(f"presence score length {p.shape} vs targets {targets.p_loc.shape}")
    n = float(targets.p_loc.sum())
    if n == 0:
        return 0.0, np.zeros_like(p)
    diff = p - targets.p_aps_hat
    value = float(np.sum(targets.p_loc * np.abs(diff))) / n
    return value, targets.p_loc * np.sign(diff) / n


def contrastive_from_logits(logits: np.ndarray):
    """Cross-entropy with target column 0, averaged over rows; grad w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[0] == 0:
        return 0.0, np.zeros_like(z)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    log_softmax = z - zmax - np.log(denom)
    value = float(-log_softmax[:, 0].mean())
    grad = ez / denom
    grad[:, 0] -= 1.0
    return value, grad / z.shape[0]


def contrastive_loss(features: np.ndarray, contrast: np.ndarray, tau: float = 0.07):
    """Contrastive loss for projected anchors.

    ``features`` is N x D (projected, unit rows); ``contrast`` is N x K x D with
    the positive text row first. Returns value and gradient w.r.t. ``features``.
    """
    f = np.asarray(features, dtype=np.float64)
    c = np.asarray(contrast, dtype=np.float64)
    if c.ndim != 3 or c.shape[0] != f.shape[0] or c.shape[2] != f.shape[1]:
        raise DimensionError(f"contrastive shapes {f.shape} vs {c.shape}")
    logits = np.einsum("nd,nkd->nk", f, c) / tau
    value, d_logits = contrastive_from_logits(logits)
    return value, np.einsum("nk,nkd->nd", d_logits, c) / tau


@dataclass
class ContrastiveBatch:
    """Anchors with their positive text row first, then sampled negatives."""

    features: np.ndarray     # N x D pooled image features (before projection)
    contrast: np.ndarray     # N x (N_neg + 1) x D
    positive_ids: np.ndarray  # N category indices
    negative_ids: np.ndarray  # N x N_neg category indices


def sample_contrastive_batch(
    features: np.ndarray,
    positive_ids,
    text: np.ndarray,
    n_neg: int,
    rng: np.random.Generator,
) -> ContrastiveBatch:
    """Pair each anchor with its category's text row and ``n_neg`` other categories.

    Negatives are drawn uniformly without replacement from all other rows of
    ``text``.
    """
    n_cat = text.shape[0]
    if n_cat - 1 < n_neg or n_cat < 2:
        raise ContractError(f"need at least {n_neg + 1} categories for {n_neg} negatives, have {n_cat}")
    positive_ids = np.asarray(positive_ids, dtype=np.int64)
    negs = np.empty((positive_ids.shape[0], n_neg), dtype=np.int64)
    for i, c in enumerate(positive_ids):
        others = np.delete(np.arange(n_cat), c)
        negs[i] = rng.choice(others, size=n_neg, replace=False)
    ids = np.concatenate([positive_ids[:, None], negs], axis=1)
    return ContrastiveBatch(np.asarray(features, dtype=np.float64), text[ids], positive_ids, negs)


def attach(g: Graph, x: Var, fn, *args, **kwargs) -> Var:
    """Add ``fn(x.value, *args, **kwargs) -> (value, grad)`` as a scalar node."""
    return g.custom(x, partial(_call, fn, args, kwargs))


def _call(fn, args, kwargs, value):
    return fn(value, *args, **kwargs)


def contrastive_objective(g: Graph, batch: ContrastiveBatch, params: ModelParams, tau: float = 0.07) -> Var:
    """Project the anchors and attach the contrastive loss."""
    projected = proj_forward(g, batch.features, params)
    return attach(g, projected, contrastive_loss, batch.contrast, tau)


def _p_aps_column(p_aps, targets: ApsTargets):
    value, grad = app_loss(p_aps[:, 0], targets)
    return value, grad[:, None]


def app_objective(g: Graph, p_aps_var: Var, targets: ApsTargets) -> Var:
    return g.custom(p_aps_var, partial(_p_aps_column, targets=targets))


def total_loss(l_loc: float, l_cc: float, l_app: float, l_contrast: float, n_pos: int = 0) -> LossBreakdown:
    """Unweighted sum of the four losses, added in a fixed order."""
    parts = (l_loc, l_cc, l_app, l_contrast)
    if not all(math.isfinite(v) for v in parts):
        raise DivergenceError(f"non-finite loss component {parts}")
    total = ((l_loc + l_cc) + l_app) + l_contrast
    return LossBreakdown(l_loc, l_cc, l_app, l_contrast, total, n_pos)
