import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import geometric, pair, single
from poissonrep import exact_oracle as eo
from poissonrep.intensity import SpecError, make_spec

EMPTY = make_spec(1)


def test_prob_all_zero_examples():
    assert eo.prob_all_zero(pair(0.1), [(0,)]).mid == pytest.approx(0.81)
    assert eo.prob_all_zero(pair(0.1), []).mid == 1.0
    assert eo.prob_all_zero(pair(0.1), [(0,), (1,)]).mid == pytest.approx(0.729)


def test_prob_all_one_examples():
    assert eo.prob_all_one(pair(0.5), [(0,), (1,)]).mid == pytest.approx(0.625)
    assert eo.prob_all_one(pair(0.5), []).mid == 1.0
    assert eo.prob_all_one(single(0.5), [(i,) for i in range(4)]).mid == pytest.approx(0.0625)


def test_prob_all_one_cap():
    with pytest.raises(SpecError):
        eo.prob_all_one(single(0.5), [(i,) for i in range(21)])


def test_interval_for_truncated_tail():
    iv = eo.prob_all_zero(geometric(1.0, 0.5), [(0,)], budget=1e-6)
    assert iv.hi - iv.lo <= 1e-6 and iv.lo <= iv.hi


def test_exact_law_examples():
    law = eo.exact_law(pair(0.5), [(0,), (1,)])
    w = dict(zip(["00", "10", "01", "11"], law.weights))
    assert w["11"] == pytest.approx(0.625)
    assert w["00"] == pytest.approx(0.125)
    assert w["10"] == pytest.approx(0.125) and w["01"] == pytest.approx(0.125)
    assert eo.exact_law(EMPTY, [(0,), (3,)]).weights[0] == 1.0
    assert eo.exact_law(single(0.3), [(0,)]).weights.tolist() == pytest.approx([0.7, 0.3])


def test_encode_little_endian():
    assert eo.encode((1, 0, 1)) == 5
    assert eo.decode(5, 3) == (1, 0, 1)


SPECS = [pair(0.1), pair(0.5), single(0.3), geometric(0.5, 0.5),
         make_spec(1, [([(0,)], 0.3), ([(0,), (2,)], 0.1), ([(0,), (1,), (3,)], 0.05)])]
WINDOWS = [S for n in (1, 2, 3) for S in itertools.combinations([(0,), (1,), (2,), (4,)], n)]


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("S", WINDOWS)
def test_inclusion_exclusion_identities(spec, S):
    law = eo.exact_law(spec, S)
    assert law.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert law.weights[-1] == pytest.approx(eo.prob_all_one(spec, S).mid, abs=1e-9)
    assert law.weights[0] == pytest.approx(eo.prob_all_zero(spec, S).mid, abs=1e-9)


@pytest.mark.parametrize("spec", SPECS)
def test_monotone_under_inclusion(spec):
    S = [(0,), (1,), (2,), (4,)]
    for k in range(1, 4):
        a, b = S[:k], S[:k + 1]
        assert eo.prob_all_one(spec, b).mid <= eo.prob_all_one(spec, a).mid + 1e-12
        assert eo.prob_all_zero(spec, b).mid <= eo.prob_all_zero(spec, a).mid + 1e-12


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("S", WINDOWS)
def test_positive_association(spec, S):
    lhs = eo.prob_all_one(spec, S).mid
    rhs = math.prod(eo.prob_all_one(spec, [v]).mid for v in S)
    assert lhs >= rhs - 1e-12


def test_check_dominance_examples():
    b3 = eo.ExactLaw.product([(0,)], [0.3])
    b5 = eo.ExactLaw.product([(0,)], [0.5])
    assert eo.check_dominance(b3, b3).dominated
    assert eo.check_dominance(b3, b5).dominated
    res = eo.check_dominance(b5, b3)
    assert not res.dominated
    assert res.witness == (1,)  # the up-set {1}, as configuration codes
    assert res.gap == pytest.approx(0.2)
    law = eo.exact_law(pair(0.5), [(0,), (1,)])
    prod = eo.ExactLaw.product(law.sites, [0.75, 0.75])
    assert eo.check_dominance(law, prod).dominated == eo.dominance_by_flow(law, prod)


def test_mismatched_sites():
    with pytest.raises(SpecError):
        eo.check_dominance(eo.ExactLaw.product([(0,)], [0.5]), eo.ExactLaw.product([(1,)], [0.5]))


@st.composite
def law_pair(draw):
    n = draw(st.integers(1, 3))
    a = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=2 ** n, max_size=2 ** n))) + 1e-3
    b = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=2 ** n, max_size=2 ** n))) + 1e-3
    sites = [(i,) for i in range(n)]
    return eo.ExactLaw(sites, a / a.sum()), eo.ExactLaw(sites, b / b.sum())


@given(law_pair())
def test_upsets_agree_with_flow(pair_):
    mu, nu = pair_
    assert eo.check_dominance(mu, nu, tol=1e-9).dominated == eo.dominance_by_flow(mu, nu, tol=1e-9)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2), st.lists(st.floats(0.0, 0.5), min_size=2, max_size=2))
def test_products_ordered_coordinatewise(p, dp):
    q = [min(1.0, a + b) for a, b in zip(p, dp)]
    sites = [(0,), (1,)]
    assert eo.check_dominance(eo.ExactLaw.product(sites, p), eo.ExactLaw.product(sites, q), tol=1e-12).dominated


def test_up_sets_count():
    assert len(eo.up_sets(2)) == 6
    assert len(eo.up_sets(3)) == 20


def test_streak_density_examples():
    r = eo.streak_density(single(0.5), [[(1,)], [(1,), (2,)], [(1,), (2,), (3,), (4,)]])
    assert r.delta_hat == pytest.approx(0.5)
    assert eo.streak_density(EMPTY, [[(0,)]]).delta_hat == 0.0
    r = eo.streak_density(pair(0.5), [[(0,)], [(0,), (1,)]])
    assert r.delta_hat == pytest.approx(math.sqrt(0.625))
    assert r.best_set == ((0,), (1,)) or list(r.best_set) == [(0,), (1,)]
    with pytest.raises(SpecError):
        eo.streak_density(single(0.5), [])
