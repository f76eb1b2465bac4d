"""Split decoded proposals into base instances, novel proposals and discards."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .geometry import Interval, ProposalSet


@dataclass(frozen=True)
class TriageConfig:
    lambda_retain: float = 0.5
    lambda_base: float = 0.5

    def __post_init__(self):
        for v in (self.lambda_retain, self.lambda_base):
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"triage thresholds must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class BaseInstance:
    interval: Interval
    category: str
    score: float
    index: int  # proposal index in the input set


@dataclass(frozen=True)
class NovelProposal:
    interval: Interval
    aps: float
    index: int


@dataclass
class TriageResult:
    base_instances: list[BaseInstance] = field(default_factory=list)
    novel_proposals: list[NovelProposal] = field(default_factory=list)
    discarded: int = 0

    @property
    def base_indices(self) -> set[int]:
        return {b.index for b in self.base_instances}

    @property
    def novel_indices(self) -> set[int]:
        return {n.index for n in self.novel_proposals}


def triage_proposals(
    proposals: ProposalSet,
    p_aps,
    p_base,
    cfg: TriageConfig,
    base_vocab: list[str],
) -> TriageResult:
    """Route each proposal by its presence score and best base-class probability.

    Both thresholds must be met for a base instance (labelled with the argmax
    class, lowest index on ties, scored ``aps * max_prob``); presence alone
    makes a novel proposal; everything else is discarded.
    """
    p_aps = np.asarray(p_aps, dtype=np.float64).reshape(-1)
    p_base = np.asarray(p_base, dtype=np.float64)
    n = len(proposals)
    if p_aps.shape[0] != n or p_base.shape[0] != n:
        raise DimensionError(f"triage inputs have lengths {p_aps.shape[0]}, {p_base.shape[0]}, expected {n}")
    if p_base.ndim != 2 or p_base.shape[1] != len(base_vocab):
        raise DimensionError(f"p_base has {p_base.shape[-1]} columns, vocabulary has {len(base_vocab)}")

    best = p_base.argmax(axis=1) if p_base.shape[1] else np.zeros(n, dtype=np.int64)
    best_p = p_base.max(axis=1) if p_base.shape[1] else np.full(n, -np.inf)
    retained = p_aps >= cfg.lambda_retain
    is_base = retained & (best_p >= cfg.lambda_base)
    is_novel = retained & ~is_base

    out = TriageResult(discarded=int(n - retained.sum()))
    for i in np.nonzero(is_base)[0]:
        out.base_instances.append(
            BaseInstance(
                proposals.interval(i),
                base_vocab[best[i]],
                float(p_aps[i] * best_p[i]),
                int(i),
            )
        )
    for i in np.nonzero(is_novel)[0]:
        out.novel_proposals.append(NovelProposal(proposals.interval(i), float(p_aps[i]), int(i)))
    return out
