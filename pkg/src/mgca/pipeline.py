"""Joint training and full-video inference."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .c2f import (
    TextBank,
    assign_fine_categories,
    image_text_similarity,
    mil_coarse_categories,
    pool_proposal_features,
)
from .data import AnnotationSet, FeatureMatrix
from .errors import ConfigError, ContractError, DivergenceError, VocabularyError
from .evaluation import Prediction
from .geometry import decode_proposals
from .losses import (
    FocalParams,
    LossBreakdown,
    app_objective,
    attach,
    contrastive_objective,
    focal_loss,
    loc_loss,
    sample_contrastive_batch,
    total_loss,
)
from .model import ModelParams, backbone_forward, fpn_layout, frozen, heads_forward
from .numerics import Graph, backward
from .supervision import assign_cls_reg_targets, build_aps_targets
from .triage import NovelProposal, TriageConfig, triage_proposals

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    warmup_epochs: int = 5
    base_lr: float = 1e-3
    weight_decay: float = 0.05
    seed: int = 0
    n_neg: int = 3
    tau: float = 0.07
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.epochs < 1 or not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError("need epochs >= 1 and 0 <= warmup_epochs < epochs")
        if not self.base_lr > 0 or self.weight_decay < 0:
            raise ConfigError("learning rate must be positive and weight decay non-negative")
        if self.n_neg < 1 or not self.tau > 0:
            raise ConfigError("n_neg must be >= 1 and tau > 0")


@dataclass(frozen=True)
class NmsConfig:
    tiou_threshold: float = 0.5
    max_instances: int = 200

    def __post_init__(self):
        if not 0.0 < self.tiou_threshold <= 1.0 or self.max_instances < 1:
            raise ConfigError("NMS threshold must lie in (0, 1] and max_instances >= 1")


@dataclass(frozen=True)
class InferConfig:
    triage: TriageConfig = field(default_factory=TriageConfig)
    nms: NmsConfig = field(default_factory=NmsConfig)
    n_coarse: int = 2
    tau: float = 0.07
    # ablation switches
    use_conventional_classifier: bool = True
    presence_source: str = "aps"  # or "base": max base probability replaces the presence score

    def __post_init__(self):
        if self.n_coarse < 1:
            raise ConfigError("n_coarse must be >= 1")
        if self.presence_source not in ("aps", "base"):
            raise ConfigError(f"unknown presence source {self.presence_source!r}")


# ---------------------------------------------------------------------------
# optimizer


def lr_at(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup to ``base_lr`` then cosine annealing to zero."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def no_decay(name: str) -> bool:
    return name.endswith(".b")


def optimizer_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One AdamW update in place. Biases are exempt from weight decay."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in params:
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay and not no_decay(name):
            t.data *= 1.0 - lr * weight_decay
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainVideo:
    video_id: str
    f_vid: FeatureMatrix
    f_img: FeatureMatrix
    annotations: AnnotationSet


def training_subset(videos: Sequence[TrainVideo], base_vocab: Sequence[str]) -> list[TrainVideo]:
    """Videos whose annotations all belong to the base vocabulary."""
    base = set(base_vocab)
    return [v for v in videos if v.annotations.labels() <= base]


def train_step(
    video: TrainVideo,
    params: ModelParams,
    base_bank: TextBank,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Forward, targets, the four losses and backward for one video."""
    vocab = base_bank.categories
    g = Graph()
    levels = backbone_forward(g, video.f_vid.data, params)
    heads = heads_forward(g, levels, params)
    layout = fpn_layout(video.f_vid.rows, params.config, 1.0 / video.f_vid.rate)
    proposals = decode_proposals(heads.onset_offset, layout, video.f_vid.duration)
    aps_t = build_aps_targets(video.annotations, proposals)
    cr_t = assign_cls_reg_targets(video.annotations, layout, vocab)

    fp = FocalParams(cfg.focal_alpha, cfg.focal_gamma)
    l_loc = attach(g, heads.onset_offset_var, loc_loss, cr_t)
    l_cc = attach(g, heads.p_base_var, focal_loss, cr_t.class_id, fp)
    l_app = app_objective(g, heads.p_aps_var, aps_t)
    total = g.add(g.add(l_loc, l_cc), l_app)

    l_con_value = 0.0
    if len(video.annotations):
        _, _, cls = video.annotations.arrays(vocab)
        feats = pool_proposal_features(video.f_img, [a.interval for a in video.annotations.instances])
        batch = sample_contrastive_batch(feats, cls, base_bank.fused, cfg.n_neg, rng)
        l_con = contrastive_objective(g, batch, params, cfg.tau)
        l_con_value = l_con.item()
        total = g.add(total, l_con)

    parts = total_loss(l_loc.item(), l_cc.item(), l_app.item(), l_con_value, cr_t.n_pos)
    grads = backward(g, total)
    return parts, grads


@dataclass
class Trainer:
    """Owns the optimizer state and sampler for one training run."""

    params: ModelParams
    base_bank: TextBank
    cfg: TrainConfig
    steps_per_epoch: int
    state: AdamState = field(default_factory=AdamState)
    epoch: int = 0

    def __post_init__(self):
        self.rng = np.random.default_rng(self.cfg.seed)
        self.total_steps = self.cfg.epochs * self.steps_per_epoch
        self.warmup_steps = self.cfg.warmup_epochs * self.steps_per_epoch

    def train_epoch(self, dataset: Sequence[TrainVideo]) -> LossBreakdown:
        if not dataset:
            raise ContractError("empty training set")
        order = self.rng.permutation(len(dataset))
        sums = np.zeros(5)
        n_pos = 0
        for i in order:
            video = dataset[i]
            lr = lr_at(self.state.step, self.total_steps, self.warmup_steps, self.cfg.base_lr)
            try:
                parts, grads = train_step(video, self.params, self.base_bank, self.cfg, self.rng)
                optimizer_step(self.params, grads, self.state, lr, self.cfg.weight_decay)
            except DivergenceError as exc:
                raise DivergenceError(f"video {video.video_id}: {exc}") from exc
            sums += (parts.l_loc, parts.l_cc, parts.l_app, parts.l_contrast, parts.total)
            n_pos += parts.n_pos
        self.epoch += 1
        m = sums / len(dataset)
        return LossBreakdown(*m.tolist(), n_pos=n_pos)


def train_epoch(dataset: Sequence[TrainVideo], trainer: Trainer) -> LossBreakdown:
    return trainer.train_epoch(dataset)


def train(
    dataset: Sequence[TrainVideo],
    params: ModelParams,
    base_bank: TextBank,
    cfg: TrainConfig,
    callback=None,
) -> list[LossBreakdown]:
    """Run ``cfg.epochs`` epochs in place on ``params``; returns per-epoch means."""
    if not dataset:
        raise ContractError("empty training set")
    for v in dataset:
        if not v.annotations.labels() <= set(base_bank.categories):
            raise VocabularyError(f"video {v.video_id} has labels outside the base vocabulary")
    trainer = Trainer(params, base_bank, cfg, len(dataset))
    history = []
    for epoch in range(cfg.epochs):
        parts = trainer.train_epoch(dataset)
        history.append(parts)
        log.info("epoch %d total %.4f (loc %.4f cc %.4f app %.4f con %.4f)", epoch + 1,
                 parts.total, parts.l_loc, parts.l_cc, parts.l_app, parts.l_contrast)
        if callback is not None:
            callback(epoch, parts)
    return history


# ---------------------------------------------------------------------------
# inference


def nms(predictions: Sequence[Prediction], cfg: NmsConfig) -> list[Prediction]:
    """Per-label hard NMS; survivors sorted by descending score."""
    if not predictions:
        return []
    labels = {}
    lab = np.array([labels.setdefault(p.label, len(labels)) for p in predictions], dtype=np.int64)
    keep = kernels.nms(
        np.array([p.t_s for p in predictions]),
        np.array([p.t_e for p in predictions]),
        np.array([p.score for p in predictions]),
        lab,
        cfg.tiou_threshold,
        cfg.max_instances,
    )
    return [predictions[i] for i in keep]


@dataclass
class VideoInference:
    predictions: list[Prediction]
    n_base: int
    n_novel: int
    n_discarded: int


def infer_video(
    f_vid: FeatureMatrix,
    f_img: FeatureMatrix,
    params: ModelParams,
    base_vocab: Sequence[str],
    novel_bank: TextBank,
    cfg: InferConfig = InferConfig(),
    all_bank: TextBank | None = None,
) -> VideoInference:
    """Localize, triage and classify one video; returns NMS'ed, score-sorted instances.

    ``novel_bank`` holds the text rows the coarse-to-fine classifier chooses
    from. With ``use_conventional_classifier`` off, every retained proposal
    goes through the coarse-to-fine classifier over ``all_bank``.
    """
    base_vocab = list(base_vocab)
    g = Graph()
    fp = frozen(params)
    heads = heads_forward(g, backbone_forward(g, f_vid.data, fp), fp)
    layout = fpn_layout(f_vid.rows, params.config, 1.0 / f_vid.rate)
    proposals = decode_proposals(heads.onset_offset, layout, f_vid.duration)
    p_base = heads.p_base
    p_aps = heads.p_aps
    if cfg.presence_source == "base":
        p_aps = p_base.max(axis=1)
    bank = novel_bank
    if not cfg.use_conventional_classifier:
        p_base = np.zeros_like(p_base)
        bank = all_bank if all_bank is not None else novel_bank

    tri = triage_proposals(proposals, p_aps, p_base, cfg.triage, base_vocab)
    preds = [Prediction(b.interval.t_s, b.interval.t_e, b.category, b.score) for b in tri.base_instances]
    novel: list[NovelProposal] = tri.novel_proposals
    if novel and len(bank):
        s_img = image_text_similarity(f_img, bank)
        coarse = mil_coarse_categories(s_img, cfg.n_coarse, bank)
        f_np = pool_proposal_features(f_img, [p.interval for p in novel])
        for inst in assign_fine_categories(novel, f_np, coarse, bank.categories, params, cfg.tau):
            preds.append(Prediction(inst.interval.t_s, inst.interval.t_e, inst.category, inst.score))
    kept = nms(preds, cfg.nms)
    return VideoInference(kept, len(tri.base_instances), len(novel), tri.discarded)


def config_dict(cfg) -> dict:
    return asdict(cfg)
