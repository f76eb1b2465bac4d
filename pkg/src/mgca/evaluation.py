"""Detection mAP over tIoU thresholds, split into base / novel / all classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import AnnotationSet
from .errors import ConfigError, VocabularyError

THUMOS_GRID = (0.3, 0.4, 0.5, 0.6, 0.7)
ANET_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalConfig:
    tiou_grid: tuple[float, ...] = THUMOS_GRID
    style: str = "thumos"

    def __post_init__(self):
        g = self.tiou_grid
        if not g or any(not 0.0 < t <= 1.0 for t in g) or any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError(f"tIoU grid must be strictly increasing within (0, 1]: {g}")

    @classmethod
    def from_style(cls, style: str) -> "EvalConfig":
        if style == "thumos":
            return cls(THUMOS_GRID, "thumos")
        if style == "anet":
            return cls(ANET_GRID, "anet")
        raise ConfigError(f"unknown evaluation style {style!r}")


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    base_fraction: float
    base: tuple[str, ...]
    novel: tuple[str, ...]

    def __post_init__(self):
        if set(self.base) & set(self.novel):
            raise ConfigError("base and novel categories overlap")

    @property
    def all(self) -> tuple[str, ...]:
        return self.base + self.novel

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "base_fraction": self.base_fraction,
            "base": list(self.base),
            "novel": list(self.novel),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(int(d["seed"]), float(d["base_fraction"]), tuple(d["base"]), tuple(d["novel"]))


def make_splits(categories: Sequence[str], base_fraction: float, n_seeds: int = 10, seed: int = 0) -> list[SplitSpec]:
    """Seeded random base/novel partitions; split ``i`` uses seed ``seed + i``."""
    cats = list(categories)
    n_base = int(math.floor(base_fraction * len(cats) + 0.5))
    if len(cats) < 2 or not 1 <= n_base <= len(cats) - 1:
        raise ConfigError(f"fraction {base_fraction} of {len(cats)} categories leaves a side empty")
    if n_seeds < 1:
        raise ConfigError("need at least one split")
    out = []
    for i in range(n_seeds):
        perm = np.random.default_rng(seed + i).permutation(len(cats))
        base_idx = set(perm[:n_base].tolist())
        base = tuple(c for j, c in enumerate(cats) if j in base_idx)
        novel = tuple(c for j, c in enumerate(cats) if j not in base_idx)
        out.append(SplitSpec(seed + i, base_fraction, base, novel))
    return out


@dataclass(frozen=True)
class Prediction:
    t_s: float
    t_e: float
    label: str
    score: float

    def to_dict(self) -> dict:
        return {"t_s": self.t_s, "t_e": self.t_e, "label": self.label, "score": self.score}


def _split_records(records, n_fields):
    """Turn (video, *fields) or (*fields) tuples into a video column plus fields."""
    vids, cols = [], [[] for _ in range(n_fields)]
    for r in records:
        r = tuple(r)
        if len(r) == n_fields:
            r = (0,) + r
        vids.append(r[0])
        for k in range(n_fields):
            cols[k].append(float(r[k + 1]))
    return vids, [np.asarray(c, dtype=np.float64) for c in cols]


def average_precision(predictions, gts, threshold: float) -> float | None:
    """All-point interpolated AP for one class at one tIoU threshold.

    ``predictions``: iterable of ``(video, t_s, t_e, score)`` (video optional).
    ``gts``: iterable of ``(video, t_s, t_e)`` (video optional).
    Returns None when there are no ground truths (class not evaluated).
    """
    g_vid, (g_s, g_e) = _split_records(gts, 2)
    if len(g_vid) == 0:
        return None
    p_vid, (p_s, p_e, score) = _split_records(predictions, 3)
    if len(p_vid) == 0:
        return 0.0
    ids = {v: i for i, v in enumerate(dict.fromkeys(g_vid + p_vid))}
    pv = np.array([ids[v] for v in p_vid], dtype=np.int64)
    gv = np.array([ids[v] for v in g_vid], dtype=np.int64)
    order = kernels.score_order(p_s, score)
    tp = kernels.match_detections(pv[order], p_s[order], p_e[order], gv, g_s, g_e, threshold)
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, tp.shape[0] + 1)
    recall = ctp / len(g_vid)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    d_recall = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(d_recall * envelope))


@dataclass
class EvalReport:
    ap: dict[str, dict[float, float]]
    map_base: float
    map_novel: float
    map_all: float
    tiou_grid: tuple[float, ...] = ()
    by_threshold: dict[str, dict[float, float]] = field(default_factory=dict)
    n_classes: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        def thr_key(t):
            return f"{t:.2f}"

        return {
            "ap": {c: {thr_key(t): v for t, v in per.items()} for c, per in self.ap.items()},
            "map_base": self.map_base,
            "map_novel": self.map_novel,
            "map_all": self.map_all,
            "map_by_threshold": {
                k: {thr_key(t): v for t, v in per.items()} for k, per in self.by_threshold.items()
            },
            "n_classes": dict(self.n_classes),
        }


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else 0.0


def evaluate(
    predictions: Mapping[str, Sequence[Prediction]],
    annotations: Mapping[str, AnnotationSet],
    split: SplitSpec,
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Per-class AP on the grid, averaged over classes that have ground truth."""
    vocab = set(split.all)
    pred_by_class: dict[str, list] = {c: [] for c in split.all}
    for vid, preds in predictions.items():
        for p in preds:
            if p.label not in vocab:
                raise VocabularyError(f"predicted label {p.label!r} not in split vocabulary")
            pred_by_class[p.label].append((vid, p.t_s, p.t_e, p.score))
    gt_by_class: dict[str, list] = {c: [] for c in split.all}
    for vid, ann in annotations.items():
        for a in ann.instances:
            if a.label not in vocab:
                raise VocabularyError(f"annotation label {a.label!r} not in split vocabulary")
            gt_by_class[a.label].append((vid, a.t_s, a.t_e))

    ap: dict[str, dict[float, float]] = {}
    for c in split.all:
        if not gt_by_class[c]:
            continue
        ap[c] = {t: average_precision(pred_by_class[c], gt_by_class[c], t) for t in cfg.tiou_grid}

    groups = {"base": split.base, "novel": split.novel, "all": split.all}
    by_thr = {
        name: {t: _mean(ap[c][t] for c in classes if c in ap) for t in cfg.tiou_grid}
        for name, classes in groups.items()
    }
    maps = {
        name: _mean(ap[c][t] for c in classes if c in ap for t in cfg.tiou_grid)
        for name, classes in groups.items()
    }
    return EvalReport(
        ap,
        maps["base"],
        maps["novel"],
        maps["all"],
        tuple(cfg.tiou_grid),
        by_thr,
        {name: sum(c in ap for c in classes) for name, classes in groups.items()},
    )
