import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from poissonrep import _kernels_py as py
from poissonrep import kernels

ck = pytest.importorskip("poissonrep._ckernels")


@given(st.integers(0, 2 ** 63), st.integers(0, 15),
       st.lists(st.integers(0, 2 ** 40), min_size=1, max_size=5),
       st.lists(st.integers(0, 2 ** 64 - 1), min_size=1, max_size=8))
def test_hash_uniforms_agree(seed, stream, reps, keys):
    a = py.hash_uniforms(seed, stream, np.array(reps, dtype=np.int64), np.array(keys, dtype=np.uint64))
    b = ck.hash_uniforms(seed, stream, np.array(reps, dtype=np.int64), np.array(keys, dtype=np.uint64))
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a < 1))


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.integers(0, (1 << n) - 1), max_size=6),
    st.lists(st.floats(0, 1), min_size=6, max_size=6))))
def test_or_convolve_agree(args):
    n, masks, probs = args
    probs = probs[:len(masks)]
    a = py.or_convolve(np.array(masks, dtype=np.int64), np.array(probs), n)
    b = ck.or_convolve(np.array(masks, dtype=np.int64), np.array(probs), n)
    assert np.allclose(a, b, atol=1e-15)
    assert a.sum() == pytest.approx(1.0)


def _grid(seed, h, w):
    rs = np.random.default_rng(seed)
    return rs.permutation(h * w).astype(np.float64).reshape(h, w)


@given(st.integers(0, 10 ** 6), st.integers(2, 14), st.integers(2, 14), st.integers(1, 3))
def test_greedy_net_agree(seed, h, w, r):
    pri = _grid(seed, h, w)
    edge = np.zeros((h, w), dtype=bool)
    edge[:r, :] = edge[-r:, :] = True
    edge[:, :r] = edge[:, -r:] = True
    c1, s1 = py.greedy_net(pri, r, edge)
    c2, s2 = ck.greedy_net(pri, r, edge)
    assert np.array_equal(np.asarray(c1), np.asarray(c2))
    assert np.array_equal(np.asarray(s1), np.asarray(s2))
    # known centres are r-separated
    ci, cj = np.nonzero(np.asarray(c1))
    if len(ci) > 1:
        dd = np.maximum(abs(ci[:, None] - ci[None]), abs(cj[:, None] - cj[None]))
        np.fill_diagonal(dd, r + 1)
        assert dd.min() > r


def test_greedy_net_without_edges_is_maximal():
    pri = _grid(1, 12, 12)
    cen, settled = py.greedy_net(pri, 2, np.zeros((12, 12), dtype=bool))
    assert settled.all()
    ci, cj = np.nonzero(cen)
    ii, jj = np.mgrid[:12, :12]
    d = np.min(np.maximum(abs(ii[..., None] - ci), abs(jj[..., None] - cj)), axis=-1)
    assert d.max() <= 2


@given(st.integers(0, 10 ** 6), st.integers(1, 12), st.integers(1, 12),
       st.integers(1, 6), st.integers(-1, 4))
def test_voronoi_agree(seed, h, w, k, rmax):
    rs = np.random.default_rng(seed)
    ci = rs.integers(0, h, k)
    cj = rs.integers(0, w, k)
    u = rs.random(k)
    a = py.voronoi_assign(ci, cj, u, h, w, rmax)
    b = ck.voronoi_assign(ci, cj, u, h, w, rmax)
    assert np.array_equal(np.asarray(a[0]), np.asarray(b[0]))
    if rmax < 0:
        assert np.all(np.asarray(a[0]) >= 0)
    else:
        full = py.voronoi_assign(ci, cj, u, h, w, -1)
        reach = np.asarray(full[1]) <= rmax
        assert np.array_equal(np.asarray(a[0])[reach], np.asarray(full[0])[reach])


@given(arrays(np.int64, st.integers(0, 40), elements=st.integers(-1, 6)), st.integers(-1, 6))
def test_w_chain_agree(m, w0):
    a = py.w_chain(m, w0)
    assert np.array_equal(a, np.asarray(ck.w_chain(m, w0)))
    prev = w0
    for x, y in zip(m, a):
        assert y == max(prev - 1, x)
        prev = y


@given(arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 30)), elements=st.integers(-1, 4)),
       st.integers(-1, 4))
def test_first_hits_agree(m, w0):
    a = py.first_hits(m, w0, 0)
    assert np.array_equal(a, np.asarray(ck.first_hits(m, w0, 0)))
    for row, t in zip(m, a):
        w = py.w_chain(row, w0)
        hits = np.nonzero(w == 0)[0]
        assert t == (hits[0] + 1 if len(hits) else 0)


def test_pure_fallback_selected_by_environment():
    env = dict(os.environ, POISSONREP_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import poissonrep.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("cython", "python")
