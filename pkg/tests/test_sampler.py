import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import geometric, pair, single, zscore
from poissonrep import exact_oracle as eo
from poissonrep import sampler as sm
from poissonrep.intensity import SpecError, make_spec

EMPTY = make_spec(1)
MIXED = make_spec(1, [([(0,)], 0.2), ([(0,), (2,)], 0.1), ([(0,), (1,), (3,)], 0.05)])


def _check_invariants(fs):
    sites = [tuple(s) for s in fs.window.sites().tolist()]
    inc = {tuple(c) for A in fs.included for c in A}
    for j, v in enumerate(sites):
        assert bool(fs.barX[j]) == (v in inc)
        assert bool(fs.hatX.get(v)) == bool(fs.barX[j])
    assert np.array_equal(fs.barX0 | fs.barX1, fs.barX)
    assert np.all(fs.barX1 <= fs.tildeX) and np.all(fs.tildeX <= fs.Y)
    if fs.N == 0:
        assert np.all(fs.barX <= fs.tildeX)


def test_window_validation():
    with pytest.raises(SpecError):
        sm.Window(((3, 1),))
    assert sm.Window(((0, 2), (0, 1))).shape == (3, 2)


def test_empty_spec():
    fs = sm.sample_field(EMPTY, sm.Window.interval(0, 9), 1)
    assert not fs.barX.any() and not any(fs.hatX.values())


@given(st.integers(0, 2 ** 32), st.sampled_from([pair(0.3), MIXED, single(0.4)]))
def test_field_invariants(seed, spec):
    for N in (0, 1, 2):
        _check_invariants(sm.sample_field(spec, sm.Window.interval(-3, 12), seed, N=N, eps=0.1))


def test_geometric_tail_invariants():
    fs = sm.sample_field(geometric(0.5, 0.5), sm.Window.interval(0, 20), 4, budget=1e-9)
    _check_invariants(fs)
    assert fs.neglected <= 1e-9
    with pytest.raises(SpecError):
        sm.sample_field(geometric(0.5, 0.5), sm.Window.interval(0, 5), 4, budget=0.0)


def test_determinism():
    a = sm.sample_field(MIXED, sm.Window.interval(0, 30), 99)
    b = sm.sample_field(MIXED, sm.Window.interval(0, 30), 99)
    assert np.array_equal(a.barX, b.barX) and a.included == b.included


def test_singleton_density():
    fs = sm.sample_field(single(0.5), sm.Window.interval(1, 10_000), 5)
    assert zscore(fs.barX.mean(), 0.5, 10_000) < 3


def test_pair_all_one_frequency():
    bits, _ = sm.sample_bits(pair(0.5), [(0,), (1,)], 6, np.arange(100_000))
    assert zscore(bits.all(axis=1).mean(), 0.625, 100_000) < 3


@pytest.mark.parametrize("spec", [pair(0.1), MIXED, geometric(0.5, 0.5)])
def test_site_density(spec):
    bits, _ = sm.sample_bits(spec, [(0,)], 8, np.arange(100_000))
    p = 1 - eo.prob_all_zero(spec, [(0,)]).mid
    assert zscore(bits.mean(), p, 100_000) < 4


def test_tilde_paints_intervals():
    spec = make_spec(1, [([(0,), (5,)], 0.2)])
    fs = sm.sample_tilde(spec, sm.Window.interval(-10, 40), 2, 0.0, 3)
    sites = fs.window.sites()[:, 0]
    painted = np.zeros(len(sites), bool)
    for A in fs.included:
        lo, hi = A[0][0], A[-1][0]
        painted |= (sites >= lo) & (sites <= hi)
    assert np.array_equal(painted, fs.tildeX)
    assert np.array_equal(fs.Y, fs.tildeX)


def test_eps_one_fills():
    fs = sm.sample_tilde(pair(0.1), sm.Window.interval(0, 9), 1, 1.0, 3)
    assert fs.Y.all()


def test_decoupling_exact():
    rep = sm.decoupling_test(pair(0.3), [(0,)], mode="exact")
    assert rep.independent and rep.tv < 1e-12
    assert rep.outside and rep.inside == [(0,)]
    rep = sm.decoupling_test(EMPTY, [(0,)], mode="exact")
    assert rep.independent


def test_decoupling_mc():
    rep = sm.decoupling_test(pair(0.3), [(0,)], mode="mc", n_samples=20_000, seed=1)
    assert rep.independent


def test_decoupling_needs_hits():
    with pytest.raises(SpecError, match="insufficient conditional sample"):
        sm.decoupling_test(pair(0.3), [(0,)], mode="mc", n_samples=10, seed=1)


def test_union_property():
    a = make_spec(1, [([(0,), (1,)], 0.2)])
    b = make_spec(1, [([(0,)], 0.3), ([(0,), (2,)], 0.1)])
    u = a.union(b)
    sites = [(0,), (1,)]
    la, lb = eo.exact_law(a, sites), eo.exact_law(b, sites)
    expected = np.zeros(4)
    for x in range(4):
        for y in range(4):
            expected[x | y] += la.weights[x] * lb.weights[y]
    assert np.allclose(eo.exact_law(u, sites).weights, expected)
    emp = sm.empirical_law(u, sites, 2, 50_000)
    assert eo.tv_distance(emp, eo.ExactLaw(sites, expected)) < 0.015
