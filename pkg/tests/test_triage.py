import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgca.errors import ContractError, DimensionError
from mgca.geometry import FpnLayout, ProposalSet
from mgca.triage import TriageConfig, triage_proposals

from oracles import triage_ref


def proposals(n):
    layout = FpnLayout((n,), (1,), 1.0)
    return ProposalSet(layout.times - 0.5, layout.times + 0.5, layout)


VOCAB = ["a", "b", "c"]


def test_base_branch_example():
    r = triage_proposals(proposals(1), [0.7], [[0.1, 0.2, 0.6]], TriageConfig(), VOCAB)
    assert len(r.base_instances) == 1 and r.base_instances[0].category == "c"
    assert r.base_instances[0].score == pytest.approx(0.7 * 0.6)
    assert not r.novel_proposals and r.discarded == 0


def test_novel_branch_example():
    r = triage_proposals(proposals(1), [0.7], [[0.3, 0.1, 0.2]], TriageConfig(), VOCAB)
    assert not r.base_instances and r.novel_proposals[0].aps == 0.7


def test_discard_example():
    r = triage_proposals(proposals(1), [0.3], [[0.9, 0.9, 0.9]], TriageConfig(), VOCAB)
    assert r.discarded == 1 and not r.base_instances and not r.novel_proposals


def test_thresholds_are_inclusive_and_ties_pick_lowest_index():
    r = triage_proposals(proposals(1), [0.5], [[0.5, 0.5, 0.1]], TriageConfig(), VOCAB)
    assert r.base_instances[0].category == "a"


def test_errors():
    with pytest.raises(DimensionError):
        triage_proposals(proposals(2), [0.5], [[0.5] * 3] * 2, TriageConfig(), VOCAB)
    with pytest.raises(DimensionError):
        triage_proposals(proposals(1), [0.5], [[0.5, 0.5]], TriageConfig(), VOCAB)
    with pytest.raises(ContractError):
        TriageConfig(1.5, 0.5)


def random_inputs(r, n=None):
    n = int(r.integers(1, 60)) if n is None else n
    # coarse grid so threshold ties actually occur
    p_aps = np.round(r.random(n), 1)
    p_base = np.round(r.random((n, 3)), 1)
    return p_aps, p_base


def check_against_reference(p_aps, p_base, cfg):
    n = len(p_aps)
    got = triage_proposals(proposals(n), p_aps, p_base, cfg, VOCAB)
    base, novel, dropped = triage_ref(p_aps.tolist(), p_base.tolist(), cfg.lambda_retain, cfg.lambda_base)
    assert [(b.index, VOCAB.index(b.category)) for b in got.base_instances] == base
    assert [p.index for p in got.novel_proposals] == novel
    assert got.discarded == dropped
    assert len(got.base_instances) + len(got.novel_proposals) + got.discarded == n
    return got


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_matches_reference(seed, lr, lb):
    p_aps, p_base = random_inputs(np.random.default_rng(seed))
    check_against_reference(p_aps, p_base, TriageConfig(lr, lb))


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_lambda_base(seed, lr, lb1, lb2):
    lo, hi = sorted((lb1, lb2))
    p_aps, p_base = random_inputs(np.random.default_rng(seed))
    a = triage_proposals(proposals(len(p_aps)), p_aps, p_base, TriageConfig(lr, lo), VOCAB)
    b = triage_proposals(proposals(len(p_aps)), p_aps, p_base, TriageConfig(lr, hi), VOCAB)
    assert b.base_indices <= a.base_indices
    assert a.novel_indices <= b.novel_indices


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_lambda_retain(seed, lb, lr1, lr2):
    lo, hi = sorted((lr1, lr2))
    p_aps, p_base = random_inputs(np.random.default_rng(seed))
    n = len(p_aps)
    a = triage_proposals(proposals(n), p_aps, p_base, TriageConfig(lo, lb), VOCAB)
    b = triage_proposals(proposals(n), p_aps, p_base, TriageConfig(hi, lb), VOCAB)
    kept_a = a.base_indices | a.novel_indices
    kept_b = b.base_indices | b.novel_indices
    assert set(range(n)) - kept_a <= set(range(n)) - kept_b
