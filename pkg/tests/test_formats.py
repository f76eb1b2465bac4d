import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgca import formats
from mgca.data import ActionInstance, AnnotationSet, FeatureMatrix
from mgca.errors import ContractError, VocabularyError
from mgca.evaluation import Prediction, make_splits


@given(st.integers(1, 20), st.integers(1, 6), st.floats(0.1, 30), st.integers(0, 2**32 - 1))
def test_feature_round_trip(rows, cols, rate, seed):
    fm = FeatureMatrix(np.random.default_rng(seed).normal(size=(rows, cols)), rate)
    back = formats.decode_features(formats.encode_features(fm))
    assert back.data.tobytes() == fm.data.tobytes() and back.rate == rate


def test_feature_header_layout():
    buf = formats.encode_features(FeatureMatrix(np.array([[1.0, 2.0]]), 2.5))
    assert buf[:4] == b"MGCA"
    assert struct.unpack_from("<IIId", buf, 4) == (1, 1, 2, 2.5)
    assert struct.unpack_from("<2d", buf, 24) == (1.0, 2.0)
    assert len(buf) == 24 + 16


def test_feature_decode_errors():
    good = formats.encode_features(FeatureMatrix(np.ones((2, 2)), 1.0))
    for bad in (b"", b"XXXX" + good[4:], good[:-8], good[:4] + struct.pack("<I", 9) + good[8:]):
        with pytest.raises(ContractError):
            formats.decode_features(bad)


def test_annotation_round_trip_and_validation():
    af = formats.AnnotationFile(
        ["a", "b"],
        {"v1": AnnotationSet(30.0, [ActionInstance(1.0, 4.0, "a"), ActionInstance(10.0, 12.5, "b")])},
        {"v1": "test"},
    )
    j = af.to_json()
    assert j["videos"]["v1"]["annotations"][1] == {"t_s": 10.0, "t_e": 12.5, "label": "b"}
    back = formats.AnnotationFile.from_json(j)
    assert back.to_json() == j and back.ids("test") == ["v1"] and back.ids("train") == []
    j["videos"]["v1"]["annotations"][0]["label"] = "zzz"
    with pytest.raises(VocabularyError):
        formats.AnnotationFile.from_json(j)
    with pytest.raises(ContractError):
        formats.AnnotationFile.from_json({"categories": []})


def test_predictions_and_splits_round_trip(tmp_path):
    preds = {"v": [Prediction(1.0, 2.0, "a", 0.5)]}
    back, seed = formats.predictions_from_json(formats.predictions_to_json(preds, 3))
    assert back == preds and seed == 3
    splits = make_splits(list("abcdefgh"), 0.75, 4)
    formats.write_splits(tmp_path / "s.json", splits)
    assert formats.read_splits(tmp_path / "s.json") == splits
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ContractError):
        formats.read_json(tmp_path / "bad.json")


def test_results_csv(tmp_path):
    formats.write_results_csv(tmp_path / "r.csv", [(0, 0.5, 0.25, 0.4)])
    assert (tmp_path / "r.csv").read_text().splitlines() == ["split_seed,map_base,map_novel,map_all", "0,0.5,0.25,0.4"]
