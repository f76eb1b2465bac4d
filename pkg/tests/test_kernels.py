"""Compiled and fallback kernels must agree bit-for-bit."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgca import kernels
from mgca.kernels import available_backends

BACKENDS = available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def intervals(r, n, span=50.0):
    s = np.round(r.uniform(0, span, n), 1)
    return s, s + np.round(r.uniform(0, 15, n), 1)


def test_fallback_is_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


def test_env_var_forces_fallback():
    code = "from mgca import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, MGCA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@given(st.integers(0, 2**32 - 1))
def test_interval_kernels_agree(seed):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    r = np.random.default_rng(seed)
    n, m = int(r.integers(0, 30)), int(r.integers(0, 6))
    ps, pe = intervals(r, n)
    gs, ge = intervals(r, m)
    times = np.round(r.uniform(0, 60, n), 1)
    units = r.choice([1.0, 2.0, 4.0], n)
    cls = r.integers(0, 3, m)
    for a, b in zip(py.aps_targets(times, ps, pe, gs, ge), cy.aps_targets(times, ps, pe, gs, ge)):
        assert np.array_equal(a, b)
    for a, b in zip(py.assign_targets(times, units, gs, ge, cls), cy.assign_targets(times, units, gs, ge, cls)):
        assert np.array_equal(a, b)
    assert np.array_equal(py.tiou_matrix(ps, pe, gs, ge), cy.tiou_matrix(ps, pe, gs, ge))
    if n and m:
        assert py.tiou(ps[0], pe[0], gs[0], ge[0]) == cy.tiou(ps[0], pe[0], gs[0], ge[0])


@needs_cython
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_ranking_kernels_agree(seed, thr):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    r = np.random.default_rng(seed)
    n, m = int(r.integers(0, 40)), int(r.integers(0, 10))
    ps, pe = intervals(r, n)
    sc = np.round(r.random(n), 1)
    lab = r.integers(0, 3, n)
    assert np.array_equal(py.score_order(ps, sc), cy.score_order(ps, sc))
    keep = int(r.integers(1, 50))
    assert np.array_equal(py.nms(ps, pe, sc, lab, thr, keep), cy.nms(ps, pe, sc, lab, thr, keep))
    gs, ge = intervals(r, m)
    pv, gv = r.integers(0, 2, n), r.integers(0, 2, m)
    assert np.array_equal(
        py.match_detections(pv, ps, pe, gv, gs, ge, thr), cy.match_detections(pv, ps, pe, gv, gs, ge, thr)
    )


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_nms_output_properties(name):
    k = BACKENDS[name]
    r = np.random.default_rng(11)
    for _ in range(50):
        n = int(r.integers(1, 40))
        s, e = intervals(r, n)
        sc, lab = r.random(n), r.integers(0, 3, n)
        kept = k.nms(s, e, sc, lab, 0.5, 200)
        assert len(set(kept.tolist())) == len(kept)
        for a in range(len(kept)):
            for b in range(a + 1, len(kept)):
                i, j = kept[a], kept[b]
                if lab[i] == lab[j]:
                    assert k.tiou(s[i], e[i], s[j], e[j]) < 0.5
