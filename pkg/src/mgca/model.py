"""Temporal conv pyramid, prediction heads and the feature projection layer."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .geometry import FpnLayout
from .numerics import Graph, Tensor, Var

PRIOR_BIAS = -2.19  # sigmoid(-2.19) ~ 0.1
CHECKPOINT_MAGIC = b"MGCK"
CHECKPOINT_VERSION = 1

HEADS = ("loc", "cls", "aps")


@dataclass(frozen=True)
class ModelConfig:
    d_vid: int
    d_img: int
    n_base: int
    d_fpn: int = 32
    n_levels: int = 4
    stem_convs: int = 2
    head_width: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("d_vid", "d_img", "n_base", "d_fpn", "n_levels", "stem_convs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.head_width is not None and self.head_width < 1:
            raise ConfigError("head_width must be >= 1")

    @property
    def d_text(self) -> int:
        return self.d_img

    @property
    def width(self) -> int:
        return self.head_width if self.head_width is not None else self.d_fpn

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple(2**i for i in range(self.n_levels))

    def head_outputs(self, head: str) -> int:
        return {"loc": 2, "cls": self.n_base, "aps": 1}[head]

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form number of scalar parameters for ``cfg``."""
    f, w = cfg.d_fpn, cfg.width
    stem = 3 * cfg.d_vid * f + f + (cfg.stem_convs - 1) * (3 * f * f + f)
    down = (cfg.n_levels - 1) * (3 * f * f + f)
    heads = sum(3 * f * w + w + 3 * w * w + w + w * n + n for n in (2, cfg.n_base, 1))
    proj = 2 * (cfg.d_img * cfg.d_img + cfg.d_img)
    return stem + down + heads + proj


def _shapes(cfg: ModelConfig) -> list[tuple[str, int, int, int]]:
    """(name, kernel, d_in, d_out) for every weight/bias pair."""
    f, w = cfg.d_fpn, cfg.width
    out = []
    for i in range(cfg.stem_convs):
        out.append((f"stem.{i}", 3, cfg.d_vid if i == 0 else f, f))
    for lvl in range(1, cfg.n_levels):
        out.append((f"down.{lvl}", 3, f, f))
    for head in HEADS:
        out.append((f"{head}.conv0", 3, f, w))
        out.append((f"{head}.conv1", 3, w, w))
        out.append((f"{head}.out", 1, w, cfg.head_outputs(head)))
    out.append(("proj.fc0", 1, cfg.d_img, cfg.d_img))
    out.append(("proj.fc1", 1, cfg.d_img, cfg.d_img))
    return out


class ModelParams:
    """Named trainable tensors for one model."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            {n: Tensor(t.data, requires_grad=t.requires_grad, name=n) for n, t in self.tensors.items()},
        )

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def size(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}


def init_params(cfg: ModelConfig) -> ModelParams:
    """Uniform(+-sqrt(1/(k*Din))) weights, zero biases, prior bias on sigmoid outputs."""
    rng = np.random.default_rng(cfg.seed)
    tensors: dict[str, Tensor] = {}
    for name, k, din, dout in _shapes(cfg):
        bound = math.sqrt(1.0 / (k * din))
        w = rng.uniform(-bound, bound, size=(k * din, dout))
        b = np.zeros((1, dout))
        if name in ("cls.out", "aps.out"):
            b[:] = PRIOR_BIAS
        tensors[f"{name}.w"] = Tensor(w, requires_grad=True, name=f"{name}.w")
        tensors[f"{name}.b"] = Tensor(b, requires_grad=True, name=f"{name}.b")
    return ModelParams(cfg, tensors)


def level_lengths(t_vid: int, n_levels: int) -> tuple[int, ...]:
    lengths = [t_vid]
    for _ in range(1, n_levels):
        lengths.append((lengths[-1] + 1) // 2)  # k=3, s=2, p=1
    return tuple(lengths)


def fpn_layout(t_vid: int, cfg: ModelConfig, delta: float) -> FpnLayout:
    return FpnLayout(level_lengths(t_vid, cfg.n_levels), cfg.strides, delta)


def _conv(g: Graph, x, params: ModelParams, name: str, k: int, s: int = 1) -> Var:
    return g.conv1d(x, params[f"{name}.w"], params[f"{name}.b"], k=k, s=s, p=(k - 1) // 2)


def backbone_forward(g: Graph, f_vid, params: ModelParams) -> list[Var]:
    """Conv pyramid: stem convs at full rate, then stride-2 conv per level."""
    cfg = params.config
    x = g.as_var(f_vid)
    t_vid, d = x.shape
    if d != cfg.d_vid:
        raise DimensionError(f"video features have {d} columns, model expects {cfg.d_vid}")
    if t_vid < 2 ** (cfg.n_levels - 1):
        raise ConfigError(f"T_vid={t_vid} too short for {cfg.n_levels} levels")
    for i in range(cfg.stem_convs):
        x = g.relu(_conv(g, x, params, f"stem.{i}", 3))
    levels = [x]
    for lvl in range(1, cfg.n_levels):
        levels.append(g.relu(_conv(g, levels[-1], params, f"down.{lvl}", 3, s=2)))
    return levels


@dataclass
class HeadsOutput:
    onset_offset_var: Var
    p_base_var: Var
    p_aps_var: Var

    @property
    def onset_offset(self) -> np.ndarray:
        return self.onset_offset_var.value

    @property
    def p_base(self) -> np.ndarray:
        return self.p_base_var.value

    @property
    def p_aps(self) -> np.ndarray:
        return self.p_aps_var.value[:, 0]


def _head(g: Graph, levels: list[Var], params: ModelParams, head: str) -> Var:
    outs = []
    for x in levels:
        h = g.relu(_conv(g, x, params, f"{head}.conv0", 3))
        h = g.relu(_conv(g, h, params, f"{head}.conv1", 3))
        outs.append(_conv(g, h, params, f"{head}.out", 1))
    return outs[0] if len(outs) == 1 else g.concat_rows(outs)


def heads_forward(g: Graph, levels: list[Var], params: ModelParams) -> HeadsOutput:
    """Localizer (rectified), base classifier and presence predictor (sigmoid)."""
    d = params.config.d_fpn
    for x in levels:
        if x.shape[1] != d:
            raise DimensionError(f"pyramid level has {x.shape[1]} columns, expected {d}")
    oo = g.relu(_head(g, levels, params, "loc"))
    p_base = g.sigmoid(_head(g, levels, params, "cls"))
    p_aps = g.sigmoid(_head(g, levels, params, "aps"))
    return HeadsOutput(oo, p_base, p_aps)


def proj_forward(g: Graph, f_np, params: ModelParams) -> Var:
    """Two affine layers with a rectifier between, then unit-normalized rows."""
    x = g.as_var(f_np)
    if x.shape[1] != params.config.d_img:
        raise DimensionError(f"proposal features have {x.shape[1]} columns, expected {params.config.d_img}")
    if not np.all(np.isfinite(x.value)):
        raise ContractError("non-finite proposal features")
    h = g.relu(g.affine(x, params["proj.fc0.w"], params["proj.fc0.b"]))
    y = g.affine(h, params["proj.fc1.w"], params["proj.fc1.b"])
    return g.l2_normalize_rows(y, eps=1e-12)


def project(f_np: np.ndarray, params: ModelParams) -> np.ndarray:
    """Inference-only projection, recording nothing that needs gradients."""
    return proj_forward(Graph(), f_np, frozen(params)).value


def frozen(params: ModelParams) -> ModelParams:
    """View of ``params`` with gradient tracking off (shares data)."""
    return ModelParams(params.config, {n: Tensor.wrap(t.data, name=n) for n, t in params})


# ---------------------------------------------------------------------------
# checkpoint file


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """Write params as little-endian float64 blobs behind a versioned header."""
    meta = dict(meta or {})
    meta["model_config"] = params.config.to_dict()
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(meta_blob)),
        meta_blob,
        bytes.fromhex(params.config.digest()),
        struct.pack("<I", len(params.tensors)),
    ]
    for name, t in params:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<II", *t.data.shape))
        parts.append(t.data.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    meta = json.loads(buf[off : off + meta_len])
    off += meta_len
    digest = buf[off : off + 32].hex()
    off += 32
    cfg = ModelConfig(**meta["model_config"])
    if cfg.digest() != digest:
        raise ContractError(f"{path}: config digest mismatch")
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    tensors = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + ln].decode()
        off += ln
        rows, cols = struct.unpack_from("<II", buf, off)
        off += 8
        data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
        off += rows * cols * 8
        tensors[name] = Tensor(data.astype(np.float64), requires_grad=True, name=name)
    return ModelParams(cfg, tensors), meta
