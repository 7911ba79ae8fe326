import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import geometric, zscore
from poissonrep import coding_pairs as cp
from poissonrep import exact_oracle as eo
from poissonrep.intensity import PairTail, make_spec, tail_threshold

SPEC = make_spec(1, [([(0,)], 0.3)], PairTail("geometric", c=0.4, r=0.5))
EMPTY_TAIL = make_spec(1, pair_tail=PairTail("list", values=(0.0, 0.0)))


def test_build_levels_geometric():
    plan = cp.build_levels(geometric(1.0, 0.5), 4)
    assert plan.levels[1].N_k == 5


def test_build_levels_empty():
    plan = cp.build_levels(EMPTY_TAIL, 4)
    assert all(lv.empty for lv in plan.levels)


@given(st.floats(0.05, 0.95), st.floats(0.01, 1.0), st.integers(2, 10))
def test_thresholds_nondecreasing(r, c, k_max):
    th = cp.build_levels(geometric(c, r), k_max).thresholds
    assert all(a <= b for a, b in zip(th, th[1:]))
    for k, N in enumerate(th, start=1):
        assert N == tail_threshold(geometric(c, r), k)


def _product(ws, qs):
    return math.prod(q if w else 1 - q for w, q in zip(ws, qs))


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_phi_matches_bruteforce_bayes(k):
    lv = cp.make_level(SPEC, k)
    assert 1 <= len(lv.I) <= 3
    joint = cp.coupling_joint_bruteforce(lv)
    qs = [lv.q0] + list(lv.q)
    marginal = {}
    for ws in itertools.product((0, 1), repeat=len(lv.I) + 1):
        pw = _product(ws, qs)
        law = cp.phi_law(lv, ws)
        assert sum(law.values()) == pytest.approx(1.0)
        for xs in itertools.product((0, 1), repeat=len(lv.I)):
            assert law.get(xs, 0.0) == pytest.approx(joint.get((ws, xs), 0.0) / pw, abs=1e-12)
            if law.get(xs, 0.0) > 0:
                # a pair is only ever emitted through an open gate
                assert all(w for x, w in zip(xs, ws[1:]) if x) and (not any(xs) or ws[0])
            marginal[xs] = marginal.get(xs, 0.0) + pw * law.get(xs, 0.0)
    for xs, m in marginal.items():
        assert m == pytest.approx(_product(xs, lv.p), abs=1e-12)


def test_empty_level():
    res = cp.code_level(EMPTY_TAIL, 2, [0, 1, 2], 1, np.arange(10))
    assert not res.bits.any() and not res.flags.any() and not res.radius.any()


@pytest.mark.parametrize("k", [2, 3])
def test_level_marginal(k):
    lv = cp.make_level(SPEC, k)
    res = cp.code_level(SPEC, k, [0], 7, np.arange(100_000))
    p = 1 - float(np.prod((1 - lv.p) ** 2))
    assert zscore(res.bits.mean(), p, 100_000) < 4
    assert not np.any(res.raw & ~res.flags)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_gate_rate_budget(k):
    res = cp.code_level(SPEC, k, [0], 9, np.arange(100_000))
    lv = cp.make_level(SPEC, k)
    rate = res.flags.mean()
    bound = 2 * k ** -2 + k ** 2 * lv.p.sum()
    assert bound <= 3 * k ** -2 + 1e-15
    assert rate <= bound + 3 * math.sqrt(bound * (1 - bound) / 100_000)


def test_code_pairs_law_and_radius():
    sites = [0, 1]
    bits, rep = cp.code_pairs(SPEC, sites, 11, 6, np.arange(100_000))
    law = eo.exact_law(SPEC, [(0,), (1,)])
    assert eo.tv_distance(law, eo.law_from_samples(law.sites, bits)) < 0.01
    surv = [p for _, p in rep.radius_survival()]
    assert all(a >= b for a, b in zip(surv, surv[1:]))
    assert rep.borel_cantelli == pytest.approx(sum(3 / k ** 2 for k in range(1, 7)))


def test_code_pairs_empty_spec():
    bits, rep = cp.code_pairs(EMPTY_TAIL, [0, 1, 2], 1, 4, np.arange(50))
    assert not bits.any() and not rep.radius.any()


def test_code_pairs_deterministic():
    a, _ = cp.code_pairs(SPEC, [0, 1, 2], 5, 4, np.arange(200))
    b, _ = cp.code_pairs(SPEC, [0, 1, 2], 5, 4, np.arange(200))
    assert np.array_equal(a, b)
