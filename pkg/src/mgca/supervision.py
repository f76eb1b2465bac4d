"""Training targets for the presence predictor, classifier and localizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import AnnotationSet
from .errors import DimensionError
from .geometry import FpnLayout, ProposalSet


@dataclass
class ApsTargets:
    p_loc: np.ndarray      # 1.0 where the position lies inside an annotation
    p_aps_hat: np.ndarray  # tIoU target, 0 outside annotations

    @property
    def n_pos(self) -> int:
        return int(self.p_loc.sum())


@dataclass
class ClsRegTargets:
    class_id: np.ndarray    # int, -1 for background
    reg_target: np.ndarray  # (T_fpn, 2) normalized (d_on, d_off); zeros on background

    @property
    def positive(self) -> np.ndarray:
        return self.class_id >= 0

    @property
    def n_pos(self) -> int:
        return int(self.positive.sum())


def build_aps_targets(annotations: AnnotationSet, proposals: ProposalSet) -> ApsTargets:
    """Presence-score targets.

    A position is positive when its time lies in some annotated interval
    (inclusive). Its target is the largest tIoU between the proposal decoded
    at that position and any annotation covering the position.
    """
    starts, ends, _ = annotations.arrays()
    p_loc, p_hat = kernels.aps_targets(proposals.times, proposals.starts, proposals.ends, starts, ends)
    return ApsTargets(p_loc, p_hat)


def assign_cls_reg_targets(
    annotations: AnnotationSet, layout: FpnLayout, vocab: list[str]
) -> ClsRegTargets:
    """Per-position class and regression targets.

    Positive positions use the same containment rule as
    :func:`build_aps_targets`; overlapping annotations resolve to the
    shortest one. Regression targets are distances to the annotation bounds
    in units of the position's cell size.
    """
    starts, ends, cls = annotations.arrays(vocab)
    class_id, reg = kernels.assign_targets(layout.times, layout.units, starts, ends, cls)
    if class_id.shape[0] != layout.total:
        raise DimensionError("target length does not match layout")
    return ClsRegTargets(class_id, reg)
