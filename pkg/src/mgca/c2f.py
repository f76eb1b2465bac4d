"""Coarse-to-fine open-vocabulary classification of novel proposals.

The coarse stage ranks categories for the whole video from frame/text
similarities with a top-k mean and involves no trainable parameters. The
fine stage labels each novel proposal with the most similar coarse
category after projecting its pooled frame features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import FeatureMatrix
from .errors import ConfigError, ContractError, DimensionError
from .geometry import Interval
from .model import ModelParams, project
from .triage import NovelProposal


def normalize_rows(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / (np.linalg.norm(x, axis=-1, keepdims=True) + eps)


@dataclass
class TextBank:
    categories: list[str]
    templates: np.ndarray  # C x M x D
    fused: np.ndarray      # C x D, unit rows

    def __len__(self) -> int:
        return len(self.categories)

    def subset(self, names) -> "TextBank":
        index = {c: i for i, c in enumerate(self.categories)}
        ids = [index[n] for n in names]
        return TextBank([self.categories[i] for i in ids], self.templates[ids], self.fused[ids])

    def single_template(self, m: int = 0) -> "TextBank":
        """Bank that uses only template ``m`` (no fusion)."""
        t = self.templates[:, m : m + 1]
        return TextBank(list(self.categories), t, normalize_rows(t[:, 0]))


def fuse_templates(categories: list[str], embeddings) -> TextBank:
    """Average template embeddings per category, then unit-normalize."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 3 or emb.shape[0] != len(categories):
        raise DimensionError(f"template embeddings must be C x M x D, got {emb.shape}")
    if emb.shape[1] == 0:
        raise ConfigError("each category needs at least one template")
    if not np.all(np.isfinite(emb)):
        raise ContractError("non-finite template embedding")
    return TextBank(list(categories), emb, normalize_rows(emb.mean(axis=1)))


def image_text_similarity(f_img, text) -> np.ndarray:
    """Frame-by-category similarity matrix (frames and text rows unit-norm)."""
    fused = text.fused if isinstance(text, TextBank) else np.asarray(text, dtype=np.float64)
    f = f_img.data if isinstance(f_img, FeatureMatrix) else np.asarray(f_img, dtype=np.float64)
    if f.shape[1] != fused.shape[1]:
        raise DimensionError(f"image dim {f.shape[1]} != text dim {fused.shape[1]}")
    return f @ fused.T


@dataclass
class CoarseResult:
    s_mil: np.ndarray
    coarse_ids: np.ndarray
    f_coarse: np.ndarray | None = None


def topk_size(t_img: int) -> int:
    return max(1, t_img // 8)


def mil_scores(s_img: np.ndarray) -> np.ndarray:
    """Per-category mean of the largest ``max(1, T_img // 8)`` similarities."""
    s_img = np.asarray(s_img, dtype=np.float64)
    if s_img.ndim != 2 or s_img.shape[0] < 1:
        raise DimensionError(f"similarity matrix must be T x C with T >= 1, got {s_img.shape}")
    k = topk_size(s_img.shape[0])
    top = -np.sort(-s_img, axis=0)[:k]
    # fsum makes the result independent of summation order
    return np.array([math.fsum(top[:, c]) / k for c in range(s_img.shape[1])])


def mil_coarse_categories(s_img, n_coarse: int, text: TextBank | None = None) -> CoarseResult:
    """Top ``n_coarse`` categories by MIL score (ties: lower index)."""
    s_mil = mil_scores(s_img)
    n = min(n_coarse, s_mil.shape[0])
    order = np.lexsort((np.arange(s_mil.shape[0]), -s_mil))
    ids = order[:n].astype(np.int64)
    f_coarse = text.fused[ids] if text is not None else None
    return CoarseResult(s_mil, ids, f_coarse)


def pool_proposal_features(f_img: FeatureMatrix, intervals) -> np.ndarray:
    """Mean frame feature over rows [floor(t_s*r), ceil(t_e*r)) for each interval."""
    t, d = f_img.data.shape
    out = np.zeros((len(intervals), d))
    r = f_img.rate
    for i, iv in enumerate(intervals):
        lo = min(max(int(math.floor(iv.t_s * r)), 0), t)
        hi = min(max(int(math.ceil(iv.t_e * r)), 0), t)
        if hi <= lo:
            lo = min(max(int(math.floor(iv.t_s * r)), 0), t - 1)
            hi = lo + 1
        out[i] = f_img.data[lo:hi].mean(axis=0)
    return out


@dataclass(frozen=True)
class NovelInstance:
    interval: Interval
    category: str
    score: float


def assign_fine_categories(
    proposals: list[NovelProposal],
    f_np: np.ndarray,
    coarse: CoarseResult,
    categories: list[str],
    params: ModelParams,
    tau: float = 0.07,
) -> list[NovelInstance]:
    """Label each novel proposal with its most similar coarse category.

    Score is the proposal's presence score times the softmax weight (at
    temperature ``tau``) of the chosen category among the coarse ones.
    """
    if len(proposals) == 0:
        return []
    if coarse.f_coarse is None or len(coarse.coarse_ids) == 0:
        raise ContractError("novel proposals present but no coarse categories")
    if f_np.shape[0] != len(proposals):
        raise DimensionError("one pooled feature row per proposal required")
    s_np = project(f_np, params) @ coarse.f_coarse.T
    best = s_np.argmax(axis=1)  # first maximum on ties
    z = s_np / tau
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    out = []
    for i, prop in enumerate(proposals):
        j = best[i]
        out.append(NovelInstance(prop.interval, categories[coarse.coarse_ids[j]], prop.aps * float(w[i, j])))
    return out
