"""Seeded synthetic corpus with planted, category-identifiable action instances.

Frame ("image") features inside an instance of category c are noisy copies
of a unit embedding e_c; background frames are isotropic noise. Text
templates are noisy copies of e_c as well, and snippet ("video") features
are a fixed random linear map of the frame features plus noise. One frame
per second; snippets share the frame grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .c2f import fuse_templates, image_text_similarity, normalize_rows
from .data import ActionInstance, AnnotationSet, FeatureMatrix
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 200          # training subset
    n_test_videos: int = 50
    t_vid_min: int = 88
    t_vid_max: int = 104
    d_vid: int = 32
    d_img: int = 16
    n_categories: int = 12
    n_templates: int = 4
    instances_min: int = 1
    instances_max: int = 3
    min_duration: int = 4
    max_duration: int = 20
    min_gap: int = 2
    noise: float = 0.1
    seed: int = 7

    def __post_init__(self):
        if self.n_videos < 0 or self.n_test_videos < 0 or self.n_videos + self.n_test_videos < 1:
            raise ConfigError("need at least one video")
        if not 1 <= self.t_vid_min <= self.t_vid_max:
            raise ConfigError("invalid video length range")
        if not 1 <= self.instances_min <= self.instances_max:
            raise ConfigError("invalid instances-per-video range")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ConfigError("invalid instance duration range")
        if self.min_gap < 0 or self.noise < 0:
            raise ConfigError("min_gap and noise must be non-negative")
        if min(self.d_vid, self.d_img, self.n_categories, self.n_templates) < 1:
            raise ConfigError("dimensions and counts must be >= 1")
        worst = self.instances_max * self.max_duration + (self.instances_max - 1) * self.min_gap
        if worst > self.t_vid_min:
            raise ConfigError(
                f"infeasible packing: {self.instances_max} instances of up to {self.max_duration}s "
                f"with gaps {self.min_gap}s need {worst}s > t_vid_min={self.t_vid_min}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthVideo:
    video_id: str
    subset: str  # "train" or "test"
    f_vid: FeatureMatrix
    f_img: FeatureMatrix
    annotations: AnnotationSet


@dataclass
class SynthCorpus:
    config: SynthConfig
    categories: list[str]
    embeddings: np.ndarray  # C x D unit rows
    templates: np.ndarray   # C x M x D
    videos: list[SynthVideo] = field(default_factory=list)

    def subset(self, name: str) -> list[SynthVideo]:
        return [v for v in self.videos if v.subset == name]


def category_names(n: int) -> list[str]:
    return [f"action_{i:02d}" for i in range(n)]


def _layout(rng: np.random.Generator, cfg: SynthConfig):
    t = int(rng.integers(cfg.t_vid_min, cfg.t_vid_max + 1))
    n = int(rng.integers(cfg.instances_min, cfg.instances_max + 1))
    durs = rng.integers(cfg.min_duration, cfg.max_duration + 1, size=n)
    slack = t - int(durs.sum()) - (n - 1) * cfg.min_gap
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    parts = np.diff(np.concatenate([[0], cuts, [slack]]))
    spans = []
    cursor = int(parts[0])
    for i in range(n):
        spans.append((cursor, cursor + int(durs[i])))
        cursor += int(durs[i]) + cfg.min_gap + int(parts[i + 1])
    return t, spans


def generate_dataset(cfg: SynthConfig) -> SynthCorpus:
    """Build the corpus; identical output for identical ``cfg``."""
    root = np.random.default_rng(cfg.seed)
    c, d, m = cfg.n_categories, cfg.d_img, cfg.n_templates
    emb = normalize_rows(root.standard_normal((c, d)))
    templates = normalize_rows(emb[:, None, :] + cfg.noise * root.standard_normal((c, m, d)))
    proj = root.standard_normal((d, cfg.d_vid)) / np.sqrt(d)

    n_total = cfg.n_videos + cfg.n_test_videos
    video_rngs = [np.random.default_rng([cfg.seed, i]) for i in range(n_total)]
    layouts = [_layout(r, cfg) for r in video_rngs]

    # cycle through shuffled vocabularies so every category occurs
    n_inst = sum(len(spans) for _, spans in layouts)
    labels = np.concatenate([root.permutation(c) for _ in range(n_inst // c + 1)])[:n_inst]

    names = category_names(c)
    corpus = SynthCorpus(cfg, names, emb, templates)
    k = 0
    for i, (rng, (t, spans)) in enumerate(zip(video_rngs, layouts)):
        f_img = normalize_rows(rng.standard_normal((t, d)))
        instances = []
        for s, e in spans:
            cat = int(labels[k])
            k += 1
            f_img[s:e] = normalize_rows(emb[cat] + cfg.noise * rng.standard_normal((e - s, d)))
            instances.append(ActionInstance(float(s), float(e), names[cat]))
        f_vid = f_img @ proj + cfg.noise * rng.standard_normal((t, cfg.d_vid))
        subset = "train" if i < cfg.n_videos else "test"
        corpus.videos.append(
            SynthVideo(
                f"video_{i:04d}",
                subset,
                FeatureMatrix(f_vid, 1.0),
                FeatureMatrix(f_img, 1.0),
                AnnotationSet(float(t), instances),
            )
        )
    return corpus


def frame_nn_accuracy(corpus: SynthCorpus) -> float:
    """Share of in-instance frames whose most similar fused text row is their category."""
    bank = fuse_templates(corpus.categories, corpus.templates)
    index = {n: i for i, n in enumerate(corpus.categories)}
    hits = total = 0
    for v in corpus.videos:
        pred = image_text_similarity(v.f_img, bank).argmax(axis=1)
        for a in v.annotations.instances:
            rows = pred[int(a.t_s) : int(a.t_e)]
            hits += int((rows == index[a.label]).sum())
            total += rows.shape[0]
    return hits / total if total else 1.0
