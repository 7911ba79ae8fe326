import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poissonrep import coding_censored as cc
from poissonrep.exact_oracle import dominance_tri, exact_law, law_from_samples, tv_distance
from poissonrep.intensity import SpecError, make_spec
from poissonrep.sampler import Window

from conftest import geometric, single, zscore

MIXED = make_spec(1, [([(0,)], 0.3), ([(0,), (2,)], 0.08), ([(0,), (1,), (3,)], 0.05)])


def test_censor_prob_four_ninths(spec49):
    assert cc.censor_prob(spec49, (0,), [(0,), (1,)]) == pytest.approx(4 / 9, rel=1e-14)
    assert cc.censor_prob(spec49, (0,), [(0,)]) == pytest.approx(8 / 9, rel=1e-14)


def test_censor_chain_decreases_to_zero(spec49):
    ch = cc.censor_chain(spec49, 0, 6)
    assert ch[:3] == pytest.approx([8 / 9, 4 / 9, 0.0])
    assert all(a >= b for a, b in zip(ch, ch[1:]))
    assert ch[-1] == 0.0


def test_censor_prob_trivial_cases():
    s = single(0.4)
    assert cc.censor_prob(s, (3,), [(3,)]) == 0.0
    assert cc.censor_prob(MIXED, (0,), [(x,) for x in range(-5, 6)]) == 0.0


def test_censor_prob_geometric_tail_never_vanishes():
    s = make_spec(1, [([(0,)], 0.5)], pair_tail=geometric(0.4, 0.5).pair_tail)
    e = [cc.censor_prob(s, (0,), [(x,) for x in range(-m, m + 1)]) for m in (1, 3, 6)]
    assert e[0] > e[1] > e[2] > 0


def test_censor_needs_singletons(pair01):
    with pytest.raises(SpecError, match="singleton"):
        cc.censor_prob(pair01, (0,), [(0,)])


def test_v_must_lie_in_L(spec49):
    with pytest.raises(SpecError):
        cc.censor_prob(spec49, (5,), [(0,)])


def test_star_rate_matches(spec49):
    n = 100000
    z = cc.sample_ZL(spec49, [(0,), (1,)], seed=3, replicas=np.arange(n))
    rate = z.star_rate()
    for r in rate:
        assert zscore(r, 4 / 9, n) < 3.5
    assert len(z.as_strings()) == n


def test_sample_matches_exact_law(spec49):
    n = 50000
    L = [(0,), (1,), (2,)]
    z = cc.sample_ZL(spec49, L, seed=8, replicas=np.arange(n))
    law = cc.exact_ZL_law(spec49, L)
    assert sum(law.values()) == pytest.approx(1.0)
    emp = {}
    for row in map(tuple, z.values.tolist()):
        emp[row] = emp.get(row, 0) + 1 / n
    keys = set(law) | set(emp)
    assert 0.5 * sum(abs(law.get(k, 0) - emp.get(k, 0)) for k in keys) < 0.015


def test_disjoint_domains_are_independent(spec49):
    n = 60000
    a = cc.sample_ZL(spec49, [(0,), (1,)], 5, np.arange(n)).values[:, 1] == cc.STAR
    b = cc.sample_ZL(spec49, [(2,), (3,)], 5, np.arange(n)).values[:, 0] == cc.STAR
    pa, pb = a.mean(), b.mean()
    assert zscore((a & b).mean(), pa * pb, n) < 4


def test_embed_reads_star_outside():
    f = cc.TriStateField([(0,), (1,)], np.array([[0, 1]]))
    assert f.embed([(1,), (7,)]).tolist() == [[1, cc.STAR]]


def test_tri_leq():
    assert cc.tri_leq([0, 1, 2, 0], [0, 2, 2, 2]).all()
    assert not cc.tri_leq([0], [1]).any()
    assert not cc.tri_leq([2], [0]).any()


@pytest.mark.parametrize("spec_name", ["spec49", "mixed"])
def test_larger_domain_is_dominated(spec_name, spec49):
    spec = spec49 if spec_name == "spec49" else MIXED
    L = [(0,), (1,)]
    for M in ([(0,), (1,), (2,)], [(-1,), (0,), (1,), (2,)], [(x,) for x in range(-2, 4)]):
        small = cc.exact_ZL_law(spec, M, S=L)
        res = dominance_tri(small, cc.exact_ZL_law(spec, L), 2)
        assert res.dominated, res


@given(st.integers(0, 12), st.integers(-300, 300))
def test_exhaustion_classes_nest(n, x):
    lo, hi = cc.dyadic_class(n, x)
    assert hi - lo + 1 == 2 ** n and lo <= x <= hi
    plo, phi = cc.dyadic_class(n + 1, x)
    assert plo <= lo and hi <= phi


@given(st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_every_pair_eventually_merges(x, y):
    assert any(cc.dyadic_class(n, x) == cc.dyadic_class(n, y) for n in range(30))


def test_singleton_only_resolves_at_level_zero():
    s = single(0.35)
    n = 20000
    final, res = cc.refine_batch(s, Window.interval(0, 2), seed=1, replicas=np.arange(n))
    assert np.all(res == 0)
    assert zscore((final == 1).mean(axis=0)[1], 0.35, n) < 4


@pytest.mark.parametrize("n,lo", [(1, 0), (1, -2), (2, -2)])
def test_merge_law_is_exact(spec49, n, lo):
    got = cc.merge_law(spec49, n, lo)
    want = cc.exact_ZL_law(spec49, [(x,) for x in range(lo, lo + 2 ** n)])
    keys = set(got) | set(want)
    assert max(abs(got.get(k, 0) - want.get(k, 0)) for k in keys) < 1e-12


def test_merge_law_mixed_family():
    got = cc.merge_law(MIXED, 2, -2)
    want = cc.exact_ZL_law(MIXED, [(x,) for x in range(-2, 2)])
    keys = set(got) | set(want)
    assert max(abs(got.get(k, 0) - want.get(k, 0)) for k in keys) < 1e-12


@given(st.integers(0, 10 ** 6))
def test_refinement_is_monotone_and_resolves(seed):
    tr = cc.refine(MIXED, Window.interval(-3, 4), seed)
    for a, b in zip(tr.fields[1:], tr.fields):
        assert cc.tri_leq(a, b).all()
    assert np.all(tr.final != cc.STAR)
    assert np.all(tr.resolution >= 0)


def test_refinement_final_law(spec49):
    n = 30000
    w = Window.interval(0, 2)
    final, _ = cc.refine_batch(spec49, w, seed=6, replicas=np.arange(n))
    assert np.all(final != cc.STAR)
    law = exact_law(spec49, w.sites())
    assert tv_distance(law, law_from_samples(law.sites, final == 1)) < 0.015


def test_refinement_rejects_infinite_family():
    s = make_spec(1, [([(0,)], 0.5)], pair_tail=geometric(0.4, 0.5).pair_tail)
    with pytest.raises(SpecError):
        cc.refine(s, Window.interval(0, 2), 1)
