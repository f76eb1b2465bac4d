import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgca import c2f
from mgca.c2f import (
    TextBank,
    assign_fine_categories,
    fuse_templates,
    image_text_similarity,
    mil_coarse_categories,
    mil_scores,
    pool_proposal_features,
    topk_size,
)
from mgca.data import FeatureMatrix
from mgca.errors import ConfigError, ContractError, DimensionError
from mgca.geometry import Interval
from mgca.model import ModelConfig, init_params
from mgca.triage import NovelProposal

from oracles import topk_mean_exhaustive


def test_fusion_examples():
    v = np.array([0.6, 0.8])
    bank = fuse_templates(["a"], np.tile(v, (1, 3, 1)))
    np.testing.assert_allclose(bank.fused[0], v, atol=1e-15)
    bank = fuse_templates(["a"], np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    np.testing.assert_allclose(bank.fused[0], [1 / math.sqrt(2)] * 2, atol=1e-15)
    bank = fuse_templates(["a"], np.array([[[3.0, 4.0]]]))
    np.testing.assert_allclose(bank.fused[0], [0.6, 0.8], atol=1e-15)


def test_fusion_errors():
    with pytest.raises(ConfigError):
        fuse_templates(["a"], np.zeros((1, 0, 2)))
    with pytest.raises(DimensionError):
        fuse_templates(["a", "b"], np.ones((1, 2, 2)))
    with pytest.raises(ContractError):
        fuse_templates(["a"], np.full((1, 1, 2), np.nan))


@given(st.integers(0, 2**32 - 1))
def test_fused_rows_unit(seed):
    r = np.random.default_rng(seed)
    bank = fuse_templates(list("abcd"), r.normal(size=(4, 3, 5)))
    np.testing.assert_allclose(np.linalg.norm(bank.fused, axis=1), 1.0, atol=1e-6)


def test_similarity_examples():
    bank = TextBank(["a", "b"], np.eye(2)[:, None, :], np.eye(2))
    s = image_text_similarity(np.array([[1.0, 0.0]]), bank)
    assert s.tolist() == [[1.0, 0.0]]
    bank3 = TextBank(["a", "b"], None, np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    assert image_text_similarity(np.array([[0, 0, 1.0]]), bank3).tolist() == [[0.0, 0.0]]
    with pytest.raises(DimensionError):
        image_text_similarity(np.ones((2, 3)), bank)


def test_similarity_matches_double_loop():
    r = np.random.default_rng(0)
    f, t = r.normal(size=(3, 4)), r.normal(size=(2, 4))
    ref = [[sum(f[i, d] * t[j, d] for d in range(4)) for j in range(2)] for i in range(3)]
    np.testing.assert_allclose(image_text_similarity(f, t), ref, rtol=0, atol=1e-12)


def test_mil_examples():
    col = np.array([0.9, 0.1, 0.5, 0.3, 0.2, 0.4, 0.8, 0.6] + [0.0] * 8)[:, None]
    assert mil_scores(col)[0] == pytest.approx(0.85, abs=1e-15)
    assert topk_mean_exhaustive(col[:, 0].tolist(), 2) == pytest.approx(0.85, abs=1e-15)
    col4 = np.array([[0.1], [0.7], [0.3], [0.2]])
    assert topk_size(4) == 1 and mil_scores(col4)[0] == 0.7
    res = mil_coarse_categories(np.array([[0.2, 0.8, 0.5]]), 2)
    assert set(res.coarse_ids.tolist()) == {1, 2}


def test_mil_ties_prefer_lower_index():
    res = mil_coarse_categories(np.array([[0.5, 0.5, 0.5, 0.9]]), 2)
    assert res.coarse_ids.tolist() == [3, 0]


def test_coarse_gathers_text_rows():
    r = np.random.default_rng(1)
    bank = fuse_templates(list("abcde"), r.normal(size=(5, 2, 3)))
    s = r.normal(size=(16, 5))
    res = mil_coarse_categories(s, 2, bank)
    np.testing.assert_array_equal(res.f_coarse, bank.fused[res.coarse_ids])
    assert len(mil_coarse_categories(s[:, :1], 2, bank.subset(["a"])).coarse_ids) == 1


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_mil_equals_exhaustive_subset_max(t, seed):
    col = np.random.default_rng(seed).uniform(-1, 1, size=t)
    k = topk_size(t)
    assert mil_scores(col[:, None])[0] == topk_mean_exhaustive(col.tolist(), k)


@given(st.integers(1, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_mil_row_permutation_invariant(t, c, seed):
    r = np.random.default_rng(seed)
    s = r.uniform(-1, 1, size=(t, c))
    perm = r.permutation(t)
    assert mil_scores(s).tolist() == mil_scores(s[perm]).tolist()
    a = mil_coarse_categories(s, 2)
    b = mil_coarse_categories(s[perm], 2)
    assert a.coarse_ids.tolist() == b.coarse_ids.tolist()


@given(st.integers(1, 40), st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(0, 2))
def test_mil_monotone_in_entries(t, c, seed, bump):
    r = np.random.default_rng(seed)
    s = r.uniform(-1, 1, size=(t, c))
    up = s.copy()
    up[r.integers(t), r.integers(c)] += bump
    assert np.all(mil_scores(up) >= mil_scores(s))


def test_coarse_stage_reads_no_parameters():
    import inspect

    for fn in (mil_scores, mil_coarse_categories, image_text_similarity):
        assert "params" not in inspect.signature(fn).parameters


def test_pooling_examples():
    data = np.arange(10.0).reshape(5, 2)
    f = FeatureMatrix(data, 1.0)
    np.testing.assert_array_equal(pool_proposal_features(f, [Interval(2.0, 3.0)])[0], data[2])
    f2 = FeatureMatrix(np.array([[0.0, 0], [2.0, 0], [4.0, 0], [9.0, 0]]), 1.0)
    assert pool_proposal_features(f2, [Interval(1.0, 3.0)])[0, 0] == 3.0
    assert pool_proposal_features(f, []).shape == (0, 2)


def test_pooling_rate_rounding_and_degenerate():
    f = FeatureMatrix(np.arange(8.0)[:, None], 2.0)  # 2 rows per second
    # [0.3, 1.2] -> rows [floor(0.6), ceil(2.4)) = [0, 3)
    assert pool_proposal_features(f, [Interval(0.3, 1.2)])[0, 0] == 1.0
    # zero-length span -> nearest row
    assert pool_proposal_features(f, [Interval(1.0, 1.0)])[0, 0] == 2.0
    # at the very end -> last row
    assert pool_proposal_features(f, [Interval(4.0, 4.0)])[0, 0] == 7.0


def identity_params(d):
    p = init_params(ModelConfig(d_vid=1, d_img=d, n_base=1))
    p["proj.fc0.w"].data[:] = np.eye(d)
    p["proj.fc0.b"].data[:] = 0
    p["proj.fc1.w"].data[:] = np.eye(d)
    p["proj.fc1.b"].data[:] = 0
    return p


def test_fine_assignment_example():
    tau = 0.07
    coarse = c2f.CoarseResult(np.zeros(3), np.array([2, 0]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    props = [NovelProposal(Interval(1, 2), 0.8, 0)]
    out = assign_fine_categories(props, np.array([[1.0, 0.0]]), coarse, ["x", "y", "z"], identity_params(2), tau)
    w = math.exp(1 / tau) / (math.exp(1 / tau) + 1)
    assert out[0].category == "z"
    assert out[0].score == pytest.approx(0.8 * w, rel=1e-12)
    assert out[0].interval == Interval(1, 2)


def test_fine_assignment_empty_and_errors():
    coarse = c2f.CoarseResult(np.zeros(1), np.array([0]), np.eye(2)[:1])
    assert assign_fine_categories([], np.zeros((0, 2)), coarse, ["a"], identity_params(2)) == []
    props = [NovelProposal(Interval(1, 2), 0.8, 0)]
    with pytest.raises(ContractError):
        empty = c2f.CoarseResult(np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, 2)))
        assign_fine_categories(props, np.ones((1, 2)), empty, ["a"], identity_params(2))


def test_fine_category_always_in_coarse_set():
    r = np.random.default_rng(0)
    cats = [f"c{i}" for i in range(6)]
    for case in range(1000):
        d = 4
        bank = fuse_templates(cats, r.normal(size=(6, 2, d)))
        s_img = r.uniform(-1, 1, size=(int(r.integers(1, 20)), 6))
        coarse = mil_coarse_categories(s_img, int(r.integers(1, 4)), bank)
        n = int(r.integers(1, 5))
        props = [NovelProposal(Interval(0, 1), float(r.random()), i) for i in range(n)]
        p = init_params(ModelConfig(d_vid=1, d_img=d, n_base=1, seed=case))
        out = assign_fine_categories(props, r.normal(size=(n, d)), coarse, cats, p)
        allowed = {cats[i] for i in coarse.coarse_ids}
        assert all(o.category in allowed for o in out)
        assert [o.interval for o in out] == [q.interval for q in props]
