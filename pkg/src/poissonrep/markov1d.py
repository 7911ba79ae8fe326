"""The crossing-set chain on Z.

At time ``i`` the state is the collection of included sets ``A + i`` with
``min A <= 0 <= max A``, stored as ``(shape, offset)`` pairs.  One step
shifts everything left by one, drops sets whose maximum falls below zero,
and adds the fresh sets with minimum zero.  Only the largest maximum ``W``
matters for returns to the empty state, and ``W`` follows the scalar
recursion ``W_n = max(W_{n-1} - 1, M_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .intensity import IntensitySpec, SpecError, _tail_cutoff

DEFAULT_BUDGET = 1e-12
_TAG_FRESH = 0xF5E5
_TAG_STAT = 0x57A7


@dataclass(frozen=True)
class CrossState:
    """Sorted ``(shape, offset)`` pairs; ``shape`` is a tuple of ints with min 0."""

    sets: tuple = ()

    def __post_init__(self):
        norm = tuple(sorted((tuple(int(x) for x in s), int(o)) for s, o in self.sets))
        for s, o in norm:
            if s[0] != 0 or list(s) != sorted(s):
                raise SpecError(f"shape {s} is not canonical")
            if not (o <= 0 <= o + s[-1]):
                raise SpecError(f"set {s} at offset {o} does not cross the origin")
        object.__setattr__(self, "sets", norm)

    @property
    def empty(self) -> bool:
        return not self.sets

    @property
    def w(self) -> int:
        """Largest maximum over the state, ``-1`` when empty."""
        return max((o + s[-1] for s, o in self.sets), default=-1)

    def concrete(self) -> list:
        return [tuple(o + x for x in s) for s, o in self.sets]

    def covers_origin(self) -> bool:
        return any(o + x == 0 for s, o in self.sets for x in s)

    def __len__(self):
        return len(self.sets)


@dataclass
class FreshFamily:
    """Shapes with minimum zero, truncated so the dropped mass is ``<= neglected``."""

    shapes: list
    probs: np.ndarray
    diams: np.ndarray
    neglected: float

    @property
    def mean_crossing(self) -> float:
        """``sum p_A (1 + diam A)``: expected size of a stationary state."""
        return float((self.probs * (1 + self.diams)).sum())


def fresh_family(spec: IntensitySpec, budget: float = DEFAULT_BUDGET) -> FreshFamily:
    if spec.dimension != 1:
        raise SpecError("the crossing chain lives in d = 1")
    shapes, probs = [], []
    for o in spec.orbits:
        if o.probability > 0:
            shapes.append(tuple(c[0] for c in o.cells))
            probs.append(o.probability)
    neglected = 0.0
    tail = spec.pair_tail
    if tail is not None:
        if tail.kind == "geometric" and tail.c > 0 and not tail.r < 1:
            raise SpecError("state space not countable-friendly")
        hi = _tail_cutoff(tail, 2 * budget)
        for n in tail.support(1, hi):
            if tail.p(n) > 0:
                shapes.append((0, n))
                probs.append(tail.p(n))
        if tail.n_max == math.inf:
            neglected = tail.weighted_tail(hi + 1)
    probs = np.array(probs, dtype=float)
    diams = np.array([s[-1] for s in shapes], dtype=np.int64)
    if not math.isfinite(float((probs * diams).sum())):
        raise SpecError("state space not countable-friendly")
    return FreshFamily(shapes, probs, diams, neglected)


def _fresh_keys(fam: FreshFamily, times) -> np.ndarray:
    """Keys of fresh-set draws, shape ``(len(times), n_shapes)``."""
    times = np.asarray(times, dtype=np.int64)
    cols = [rng.offset_keys(rng.mix64(_TAG_FRESH ^ rng.shape_hash([(x,) for x in s])), times)
            for s in fam.shapes]
    if not cols:
        return np.zeros((len(times), 0), dtype=np.uint64)
    return np.stack(cols, axis=1)


def _fresh_draws(fam: FreshFamily, seed: int, replica: int, times) -> np.ndarray:
    keys = _fresh_keys(fam, times)
    if keys.shape[1] == 0:
        return np.zeros(keys.shape, dtype=bool)
    u = rng.uniforms(seed, rng.STREAM_CHAIN, [replica], keys.ravel()).reshape(keys.shape)
    return u < fam.probs[None, :]


def _advance(state: CrossState, fam: FreshFamily, included) -> CrossState:
    keep = [(s, o - 1) for s, o in state.sets if o + s[-1] >= 1]
    fresh = [(fam.shapes[j], 0) for j in np.flatnonzero(included)]
    return CrossState(tuple(keep + fresh))


def step(spec: IntensitySpec, state: CrossState, seed: int, t: int = 0, replica: int = 0,
         family: FreshFamily | None = None) -> CrossState:
    """One transition; the fresh sets of time ``t`` are read from the seed."""
    fam = family or fresh_family(spec)
    return _advance(state, fam, _fresh_draws(fam, seed, replica, [t])[0])


def stationary_state(spec: IntensitySpec, seed: int, replica: int = 0,
                     family: FreshFamily | None = None) -> CrossState:
    """Each set crossing the origin included independently with its probability."""
    fam = family or fresh_family(spec)
    members = []
    for s, p in zip(fam.shapes, fam.probs):
        offs = np.arange(-s[-1], 1, dtype=np.int64)
        keys = rng.offset_keys(rng.mix64(_TAG_STAT ^ rng.shape_hash([(x,) for x in s])), offs)
        hit = rng.uniforms(seed, rng.STREAM_CHAIN, [replica], keys)[0] < p
        members.extend((s, int(o)) for o in offs[hit])
    return CrossState(tuple(members))


def stationary_summary(spec: IntensitySpec, seed: int, replicas) -> tuple:
    """Per replica: number of crossing sets and whether some set contains 0."""
    fam = fresh_family(spec)
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    count = np.zeros(len(reps), dtype=np.int64)
    origin = np.zeros(len(reps), dtype=bool)
    for s, p in zip(fam.shapes, fam.probs):
        offs = np.arange(-s[-1], 1, dtype=np.int64)
        keys = rng.offset_keys(rng.mix64(_TAG_STAT ^ rng.shape_hash([(x,) for x in s])), offs)
        hit = rng.uniforms(seed, rng.STREAM_CHAIN, reps, keys) < p
        count += hit.sum(axis=1)
        through0 = np.isin(-offs, np.array(s))
        origin |= hit[:, through0].any(axis=1)
    return count, origin


# ---------------------------------------------------------------------------
# return times


def m_law(fam: FreshFamily) -> tuple:
    """Support ``-1..D`` and CDF of ``M = max(-1, largest fresh maximum)``."""
    D = int(fam.diams.max(initial=-1))
    grid = np.arange(-1, D + 1)
    log_keep = np.log1p(-fam.probs)
    cdf = np.array([math.exp(log_keep[fam.diams > m].sum()) for m in grid])
    return grid, cdf


def sample_m(fam: FreshFamily, seed: int, replicas, n_steps: int, stream_tag: int = 0) -> np.ndarray:
    """Rows of IID copies of ``M`` drawn by inverting its CDF."""
    grid, cdf = m_law(fam)
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    keys = rng.offset_keys(rng.mix64(0x3A11 ^ stream_tag), np.arange(n_steps))
    u = rng.uniforms(seed, rng.STREAM_CHAIN, reps, keys)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(grid) - 1)
    return grid[idx]


@dataclass
class ReturnTimeStats:
    samples: np.ndarray  # T per run; t_cap + 1 marks a censored run
    censored: np.ndarray
    t: np.ndarray
    survival: np.ndarray  # empirical P(T > t)
    slope: float
    intercept: float
    r2: float
    fit_range: tuple
    tv_bound: float

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    def rows(self) -> list:
        return [(int(a), float(b)) for a, b in zip(self.t, self.survival)]


MIN_TAIL_COUNT = 100


def _fit(t, surv, counts):
    ok = (counts >= MIN_TAIL_COUNT) & (surv > 0)
    tt, ss = t[ok], np.log(surv[ok])
    if len(tt) < 2:
        return math.nan, math.nan, math.nan, (0, 0)
    slope, icpt = np.polyfit(tt, ss, 1)
    resid = ss - (slope * tt + icpt)
    tot = ((ss - ss.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / tot if tot > 0 else 1.0
    return float(slope), float(icpt), float(r2), (int(tt[0]), int(tt[-1]))


def return_time_stats(spec: IntensitySpec, n_runs: int, t_cap: int, seed: int,
                      start: CrossState | None = None, budget: float = DEFAULT_BUDGET) -> ReturnTimeStats:
    """Return times to the empty state for ``n_runs`` independent chains.

    Runs use the scalar ``W`` recursion (checked pathwise by
    :func:`w_chain_check`) with ``M`` drawn from its exact law.  The fit is a
    least-squares line through ``log P(T > t)`` over the ``t`` with at least
    ``MIN_TAIL_COUNT`` runs still alive.
    """
    fam = fresh_family(spec, budget)
    w0 = -1 if start is None else start.w
    m = sample_m(fam, seed, np.arange(n_runs), t_cap, stream_tag=w0 + 1)
    hits = kernels.first_hits(m, w0, -1)
    censored = hits == 0
    if censored.all():
        raise SpecError("cap too small")
    T = np.where(censored, t_cap + 1, hits)
    t = np.arange(0, t_cap + 1)
    counts = (T[None, :] > t[:, None]).sum(axis=1)
    surv = counts / n_runs
    slope, icpt, r2, rng_ = _fit(t[1:], surv[1:], counts[1:])
    tv = min(1.0, n_runs * t_cap * fam.neglected)
    return ReturnTimeStats(T, censored, t, surv, slope, icpt, r2, rng_, tv)


# ---------------------------------------------------------------------------
# pathwise check


@dataclass
class WChainReport:
    n_steps: int
    w_full: np.ndarray
    w_reduced: np.ndarray
    mismatches: int
    first_return: int  # 0 when the chain never returned
    returns: list = field(default_factory=list)  # all times the state was empty
    mean_size: float = 0.0


def run_chain(spec: IntensitySpec, n_steps: int, seed: int, replica: int = 0,
              start: CrossState | None = None, family: FreshFamily | None = None):
    """States ``X_1..X_n`` and the fresh-set indicators used at each step."""
    fam = family or fresh_family(spec)
    draws = _fresh_draws(fam, seed, replica, np.arange(1, n_steps + 1))
    state = start or CrossState()
    states = []
    for n in range(n_steps):
        state = _advance(state, fam, draws[n])
        states.append(state)
    return states, draws


def w_chain_check(spec: IntensitySpec, n_steps: int, seed: int, replica: int = 0,
                  start: CrossState | None = None) -> WChainReport:
    """Run the full chain and the ``W`` recursion on the same draws and compare."""
    fam = fresh_family(spec)
    start = start or CrossState()
    states, draws = run_chain(spec, n_steps, seed, replica, start, fam)
    w_full = np.array([s.w for s in states], dtype=np.int64)
    if fam.shapes:
        m = np.where(draws.any(axis=1), np.where(draws, fam.diams[None, :], -1).max(axis=1), -1)
    else:
        m = np.full(n_steps, -1, dtype=np.int64)
    w_red = kernels.w_chain(m, start.w)
    bad = int((w_full != w_red).sum())
    if bad:
        n0 = int(np.flatnonzero(w_full != w_red)[0])
        raise AssertionError(f"W recursion disagrees with the chain at step {n0 + 1}")
    returns = [n + 1 for n, s in enumerate(states) if s.empty]
    first = returns[0] if returns else 0
    hit = int(kernels.first_hits(m[None, :], start.w, -1)[0])
    if hit != first:
        raise AssertionError(f"first return {first} but W first hits -1 at {hit}")
    mean = float(np.mean([len(s) for s in states])) if states else 0.0
    return WChainReport(n_steps, w_full, w_red, bad, first, returns, mean)


def make_state(pairs) -> CrossState:
    """State from concrete sets given as iterables of integers."""
    out = []
    for cells in pairs:
        xs = sorted(int(x) for x in cells)
        out.append((tuple(x - xs[0] for x in xs), xs[0]))
    return CrossState(tuple(out))


__all__ = [
    "CrossState", "FreshFamily", "ReturnTimeStats", "WChainReport", "fresh_family", "step",
    "stationary_state", "stationary_summary", "m_law", "sample_m", "return_time_stats",
    "run_chain", "w_chain_check", "make_state",
]
