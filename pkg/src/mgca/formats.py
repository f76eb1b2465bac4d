"""On-disk formats: feature files, annotation/prediction/split JSON, corpus directories.

Corpus directory layout::

    corpus.json                 version, categories, templates per category, generator config
    annotations.json            AnnotationFile (plus a per-video "subset" field)
    text.mgca                   template embeddings, (C*M) x D, category-major
    features/<id>.vid.mgca      snippet features
    features/<id>.img.mgca      frame features
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .c2f import TextBank, fuse_templates
from .data import ActionInstance, AnnotationSet, FeatureMatrix
from .errors import ContractError, VocabularyError
from .evaluation import Prediction, SplitSpec

FEATURE_MAGIC = b"MGCA"
FEATURE_VERSION = 1
ANNOTATION_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# feature files


def encode_features(fm: FeatureMatrix) -> bytes:
    rows, cols = fm.data.shape
    return _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, rows, cols, float(fm.rate)) + fm.data.astype("<f8").tobytes()


def decode_features(buf: bytes, where: str = "<bytes>") -> FeatureMatrix:
    if len(buf) < _HEADER.size:
        raise ContractError(f"{where}: truncated feature header")
    magic, version, rows, cols, rate = _HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise ContractError(f"{where}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise ContractError(f"{where}: unsupported feature file version {version}")
    if len(buf) - _HEADER.size != rows * cols * 8:
        raise ContractError(f"{where}: payload is {len(buf) - _HEADER.size} bytes, expected {rows * cols * 8}")
    data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=_HEADER.size).reshape(rows, cols)
    return FeatureMatrix(data.astype(np.float64), rate)


def write_features(path, fm: FeatureMatrix) -> None:
    Path(path).write_bytes(encode_features(fm))


def read_features(path) -> FeatureMatrix:
    return decode_features(Path(path).read_bytes(), str(path))


# ---------------------------------------------------------------------------
# annotations


@dataclass
class AnnotationFile:
    categories: list[str]
    videos: dict[str, AnnotationSet]
    subsets: dict[str, str]

    def ids(self, subset: str | None = None) -> list[str]:
        return [v for v in self.videos if subset is None or self.subsets.get(v) == subset]

    def to_json(self) -> dict:
        videos = {}
        for vid, ann in self.videos.items():
            entry = {
                "duration_sec": ann.duration,
                "annotations": [{"t_s": a.t_s, "t_e": a.t_e, "label": a.label} for a in ann.instances],
            }
            if vid in self.subsets:
                entry["subset"] = self.subsets[vid]
            videos[vid] = entry
        return {"version": ANNOTATION_VERSION, "categories": list(self.categories), "videos": videos}

    @classmethod
    def from_json(cls, d: dict) -> "AnnotationFile":
        try:
            cats = [str(c) for c in d["categories"]]
            known = set(cats)
            videos, subsets = {}, {}
            for vid, entry in d["videos"].items():
                inst = []
                for a in entry["annotations"]:
                    if a["label"] not in known:
                        raise VocabularyError(f"video {vid}: label {a['label']!r} not in categories")
                    inst.append(ActionInstance(float(a["t_s"]), float(a["t_e"]), a["label"]))
                videos[vid] = AnnotationSet(float(entry["duration_sec"]), inst)
                if "subset" in entry:
                    subsets[vid] = entry["subset"]
        except VocabularyError:
            raise
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed annotation file: missing or bad field {exc}") from None
        return cls(cats, videos, subsets)


def read_annotations(path) -> AnnotationFile:
    return AnnotationFile.from_json(read_json(path))


def write_annotations(path, af: AnnotationFile) -> None:
    write_json(path, af.to_json())


# ---------------------------------------------------------------------------
# splits, predictions, reports


def write_splits(path, splits: list[SplitSpec]) -> None:
    write_json(path, {"splits": [s.to_dict() for s in splits]})


def read_splits(path) -> list[SplitSpec]:
    d = read_json(path)
    try:
        return [SplitSpec.from_dict(s) for s in d["splits"]]
    except (KeyError, TypeError) as exc:
        raise ContractError(f"{path}: malformed splits file ({exc})") from None


def predictions_to_json(preds: dict[str, list[Prediction]], split_seed: int | None = None) -> dict:
    out = {"videos": {vid: [p.to_dict() for p in ps] for vid, ps in preds.items()}}
    if split_seed is not None:
        out["split_seed"] = split_seed
    return out


def predictions_from_json(d: dict) -> tuple[dict[str, list[Prediction]], int | None]:
    try:
        preds = {
            vid: [Prediction(float(p["t_s"]), float(p["t_e"]), p["label"], float(p["score"])) for p in ps]
            for vid, ps in d["videos"].items()
        }
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed predictions file ({exc})") from None
    return preds, d.get("split_seed")


def write_results_csv(path, rows) -> None:
    """rows: iterable of (split_seed, map_base, map_novel, map_all)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split_seed", "map_base", "map_novel", "map_all"])
        for r in rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])


# ---------------------------------------------------------------------------
# corpus directories


@dataclass
class Corpus:
    categories: list[str]
    text: TextBank
    annotations: AnnotationFile
    root: Path
    meta: dict

    def features(self, vid: str) -> tuple[FeatureMatrix, FeatureMatrix]:
        base = self.root / "features"
        return read_features(base / f"{vid}.vid.mgca"), read_features(base / f"{vid}.img.mgca")


def write_corpus(out, categories, templates, videos, meta: dict | None = None) -> None:
    """videos: iterable of (id, subset, f_vid, f_img, AnnotationSet)."""
    out = Path(out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    templates = np.asarray(templates, dtype=np.float64)
    c, m, d = templates.shape
    write_features(out / "text.mgca", FeatureMatrix(templates.reshape(c * m, d), 1.0))
    anns, subsets = {}, {}
    for vid, subset, f_vid, f_img, ann in videos:
        write_features(out / "features" / f"{vid}.vid.mgca", f_vid)
        write_features(out / "features" / f"{vid}.img.mgca", f_img)
        anns[vid] = ann
        subsets[vid] = subset
    write_annotations(out / "annotations.json", AnnotationFile(list(categories), anns, subsets))
    info = {"version": 1, "categories": list(categories), "templates_per_category": m}
    info.update(meta or {})
    write_json(out / "corpus.json", info)


def read_corpus(root) -> Corpus:
    root = Path(root)
    if not (root / "corpus.json").is_file():
        raise ContractError(f"{root}: not a corpus directory (corpus.json missing)")
    meta = read_json(root / "corpus.json")
    cats = list(meta["categories"])
    m = int(meta["templates_per_category"])
    flat = read_features(root / "text.mgca").data
    if flat.shape[0] != len(cats) * m:
        raise ContractError(f"{root}: text.mgca has {flat.shape[0]} rows, expected {len(cats) * m}")
    bank = fuse_templates(cats, flat.reshape(len(cats), m, flat.shape[1]))
    return Corpus(cats, bank, read_annotations(root / "annotations.json"), root, meta)
