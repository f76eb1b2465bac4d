"""Temporal interval arithmetic, DIoU regression loss and proposal decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError


@dataclass(frozen=True)
class Interval:
    t_s: float
    t_e: float

    def __post_init__(self):
        if not (math.isfinite(self.t_s) and math.isfinite(self.t_e)):
            raise ContractError(f"non-finite interval ({self.t_s}, {self.t_e})")
        if self.t_s < 0 or self.t_e < self.t_s:
            raise ContractError(f"invalid interval [{self.t_s}, {self.t_e}]")

    @property
    def length(self) -> float:
        return self.t_e - self.t_s

    @property
    def center(self) -> float:
        return 0.5 * (self.t_s + self.t_e)


def tiou(a: Interval, b: Interval) -> float:
    """Temporal IoU. Two equal zero-length intervals give 1.0."""
    if not (isinstance(a, Interval) and isinstance(b, Interval)):
        raise ContractError("tiou expects Interval arguments")
    return float(kernels.tiou(a.t_s, a.t_e, b.t_s, b.t_e))


def diou_loss_batch(ps, pe, gs, ge):
    """Vectorized 1-D DIoU loss.

    Returns ``(loss, grad)`` where ``grad[:, 0]`` and ``grad[:, 1]`` are the
    derivatives with respect to the predicted start and end. At kinks
    (coincident endpoints) a fixed one-sided derivative is used.
    """
    ps = np.asarray(ps, dtype=np.float64)
    pe = np.asarray(pe, dtype=np.float64)
    gs = np.asarray(gs, dtype=np.float64)
    ge = np.asarray(ge, dtype=np.float64)

    lo = np.maximum(ps, gs)
    hi = np.minimum(pe, ge)
    raw = hi - lo
    active = raw >= 0.0
    inter = np.where(active, raw, 0.0)
    union = (pe - ps) + (ge - gs) - inter
    safe_union = np.where(union > 0.0, union, 1.0)
    iou = np.where(union > 0.0, inter / safe_union, 1.0)

    enc_lo = np.minimum(ps, gs)
    enc_hi = np.maximum(pe, ge)
    c = enc_hi - enc_lo
    rho = 0.5 * ((ps + pe) - (gs + ge))
    safe_c = np.where(c > 0.0, c, 1.0)
    penalty = np.where(c > 0.0, rho * rho / (safe_c * safe_c), 0.0)
    loss = 1.0 - iou + penalty

    d_inter_ds = np.where(active & (ps > gs), -1.0, 0.0)
    d_inter_de = np.where(active & (pe < ge), 1.0, 0.0)
    d_union_ds = -1.0 - d_inter_ds
    d_union_de = 1.0 - d_inter_de
    u2 = safe_union * safe_union
    d_iou_ds = (d_inter_ds * union - inter * d_union_ds) / u2
    d_iou_de = (d_inter_de * union - inter * d_union_de) / u2

    d_c_ds = np.where(ps < gs, -1.0, 0.0)
    d_c_de = np.where(pe > ge, 1.0, 0.0)
    c3 = safe_c * safe_c * safe_c
    d_pen_ds = rho / (safe_c * safe_c) - 2.0 * rho * rho * d_c_ds / c3
    d_pen_de = rho / (safe_c * safe_c) - 2.0 * rho * rho * d_c_de / c3

    valid = (union > 0.0) & (c > 0.0)
    grad = np.stack(
        [np.where(valid, -d_iou_ds + d_pen_ds, 0.0), np.where(valid, -d_iou_de + d_pen_de, 0.0)],
        axis=-1,
    )
    return loss, grad


def diou_loss(pred: Interval, gt: Interval) -> tuple[float, np.ndarray]:
    """DIoU loss ``1 - tIoU + rho^2 / c^2`` and its gradient w.r.t. pred (t_s, t_e)."""
    if gt.length <= 0:
        raise ContractError("ground-truth interval must have positive length")
    loss, grad = diou_loss_batch([pred.t_s], [pred.t_e], [gt.t_s], [gt.t_e])
    return float(loss[0]), grad[0]


@dataclass(frozen=True)
class FpnLayout:
    """Positions of a multi-level temporal pyramid.

    Level ``l`` has ``lengths[l]`` cells of ``strides[l] * delta`` seconds;
    cell ``j`` is centred at ``(j + 0.5) * strides[l] * delta``.
    """

    lengths: tuple[int, ...]
    strides: tuple[int, ...]
    delta: float

    def __post_init__(self):
        if len(self.lengths) != len(self.strides) or not self.lengths:
            raise DimensionError("lengths and strides must be non-empty and aligned")
        if self.delta <= 0 or any(s <= 0 for s in self.strides):
            raise ContractError("strides and snippet duration must be positive")

    @property
    def total(self) -> int:
        return int(sum(self.lengths))

    @cached_property
    def levels(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.lengths)), self.lengths)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.concatenate([np.arange(n) for n in self.lengths])

    @cached_property
    def units(self) -> np.ndarray:
        return np.repeat(np.asarray(self.strides, dtype=np.float64) * self.delta, self.lengths)

    @cached_property
    def times(self) -> np.ndarray:
        return (self.positions + 0.5) * self.units


@dataclass
class ProposalSet:
    """Decoded proposals, ordered by (level, position)."""

    starts: np.ndarray
    ends: np.ndarray
    layout: FpnLayout

    def __len__(self) -> int:
        return int(self.starts.shape[0])

    @property
    def levels(self) -> np.ndarray:
        return self.layout.levels

    @property
    def positions(self) -> np.ndarray:
        return self.layout.positions

    @property
    def times(self) -> np.ndarray:
        return self.layout.times

    def interval(self, i: int) -> Interval:
        return Interval(float(self.starts[i]), float(self.ends[i]))


def decode_proposals(onset_offset, layout: FpnLayout, duration: float) -> ProposalSet:
    """Map per-position (d_on, d_off), in cell units, to clamped intervals."""
    oo = np.asarray(onset_offset, dtype=np.float64)
    if oo.shape != (layout.total, 2):
        raise DimensionError(f"onset/offset shape {oo.shape} != ({layout.total}, 2)")
    if duration < 0 or not math.isfinite(duration):
        raise ContractError(f"invalid video duration {duration}")
    if np.any(oo < 0):
        raise ContractError("onset/offset must be rectified (non-negative)")
    t = layout.times
    u = layout.units
    starts = np.clip(t - oo[:, 0] * u, 0.0, duration)
    ends = np.clip(t + oo[:, 1] * u, 0.0, duration)
    return ProposalSet(starts, ends, layout)


def intervals_array(intervals: Sequence[Interval]) -> np.ndarray:
    if not intervals:
        return np.zeros((0, 2))
    return np.array([[iv.t_s, iv.t_e] for iv in intervals], dtype=np.float64)
