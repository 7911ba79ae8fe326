"""Censored tri-state fields and their multiscale refinement (d = 1).

``Z^L_v`` is ``*`` with probability ``eps_{v,L}`` (independent uniform) and
otherwise the union over sets contained in ``L``.  Values are encoded as
0, 1 and ``STAR = 2``; the order has ``0 < *`` and ``1 < *`` with 0 and 1
incomparable.

The refinement starts from independent singleton fields and merges
neighbouring classes of a nested interval exhaustion.  A merge draws the
parent field from a monotone coupling with the concatenated children: 0/1
values are kept, ``*`` values are resolved by an exact conditional law.  The
coupling exposes the parent's sites in order, conditioning on the
multi-site sets the children already contain; the only unknowns are the
sets crossing the children's common boundary, handled by an exact posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels, rng
from ._posterior import CoverPosterior, HashChooser
from .intensity import IntensitySpec, SpecError, _as_site, canonicalize_shape
from .sampler import Window, as_sites

STAR = 2
SYMBOLS = "01*"


def _p0(spec: IntensitySpec) -> float:
    p0 = spec.singleton_prob
    if p0 <= 0.0:
        raise SpecError("censoring needs a positive singleton probability")
    return p0


def _tail_excess(tail, m: int, p0: float) -> float:
    """``sum_{n > m} p_n / (1 - p_n) * p0^-2`` for one orientation."""
    lo = max(m + 1, tail.n0)
    if tail.kind == "list":
        return sum(tail.p(n) / (1 - tail.p(n)) for n in range(lo, int(tail.n_max) + 1)) / p0 ** 2
    if tail.c == 0.0:
        return 0.0
    tot, j = 0.0, 1
    while True:
        rj = tail.r ** j
        term = tail.c ** j * rj ** lo / (1.0 - rj)
        tot += term
        if term < 1e-18 * max(tot, 1e-300) or j > 10_000:
            break
        j += 1
    return tot / p0 ** 2


def censor_prob(spec: IntensitySpec, v, L) -> float:
    """``eps_{v,L}``: sum of ``p_A / (1 - p_A) * p0^{-|A|}`` over ``A`` through ``v`` not inside ``L``."""
    p0 = _p0(spec)
    d = spec.dimension
    v = _as_site(v, d)
    Ls = {_as_site(x, d) for x in L}
    if v not in Ls:
        raise SpecError("v must lie in L")
    tot = 0.0
    for o in spec.orbits:
        if o.size < 2 or o.probability == 0.0:
            continue
        w = o.probability / (1.0 - o.probability) * p0 ** (-o.size)
        for c in o.cells:
            shift = tuple(vi - ci for vi, ci in zip(v, c))
            if any(tuple(a + s for a, s in zip(cell, shift)) not in Ls for cell in o.cells):
                tot += w
    tail = spec.pair_tail
    if tail is not None:
        xs = [x[0] for x in Ls]
        span = max(xs) - min(xs)
        for n in tail.support(1, span):
            pn = tail.p(n)
            if pn == 0.0:
                continue
            w = pn / (1.0 - pn) / p0 ** 2
            tot += w * (((v[0] + n,) not in Ls) + ((v[0] - n,) not in Ls))
        tot += 2.0 * _tail_excess(tail, span, p0)
    return tot


def exhaustion_offset(n: int) -> int:
    """Left end of the level-``n`` interval grid: ``-sum_{i < n, i odd} 2^i``.

    Consecutive grids are nested, and the boundaries avoid any fixed site
    forever, so every pair of sites is eventually in one class.
    """
    return -sum(1 << i for i in range(1, n, 2))


def dyadic_class(n: int, x: int) -> tuple:
    """Inclusive interval of the level-``n`` class containing ``x``."""
    o = exhaustion_offset(n)
    size = 1 << n
    lo = o + ((x - o) // size) * size
    return lo, lo + size - 1


def censor_chain(spec: IntensitySpec, v: int, levels: int) -> list:
    """``eps_{v, L_n}`` along the exhaustion for ``n = 0..levels``."""
    out = []
    for n in range(levels + 1):
        lo, hi = dyadic_class(n, v)
        out.append(censor_prob(spec, (v,), [(x,) for x in range(lo, hi + 1)]))
    return out


# ---------------------------------------------------------------------------
# tri-state fields


@dataclass
class TriStateField:
    domain: list
    values: np.ndarray  # (..., |domain|) with entries in {0, 1, STAR}

    def __post_init__(self):
        self.domain = [tuple(s) for s in self.domain]
        self.values = np.asarray(self.values, dtype=np.int8)

    def star_rate(self) -> np.ndarray:
        return (self.values == STAR).reshape(-1, len(self.domain)).mean(axis=0)

    def as_strings(self) -> list:
        rows = self.values.reshape(-1, len(self.domain))
        return ["".join(SYMBOLS[x] for x in row) for row in rows]

    def embed(self, sites) -> np.ndarray:
        """Values on ``sites``; every site outside the domain reads ``*``."""
        idx = {s: i for i, s in enumerate(self.domain)}
        rows = self.values.reshape(-1, len(self.domain))
        out = np.full((rows.shape[0], len(sites)), STAR, dtype=np.int8)
        for j, s in enumerate(sites):
            i = idx.get(tuple(s))
            if i is not None:
                out[:, j] = rows[:, i]
        return out


def tri_leq(a, b) -> np.ndarray:
    """Elementwise ``a <= b`` in the order with ``0 < *`` and ``1 < *``."""
    a, b = np.asarray(a), np.asarray(b)
    return (a == b) | (b == STAR)


def _sets_inside(spec: IntensitySpec, Ls: set):
    """Concrete sets contained in ``L`` (shape, offset) with probabilities."""
    out = []
    d = spec.dimension
    for o in spec.orbits:
        if o.probability == 0.0:
            continue
        for u in Ls:
            cells = tuple(tuple(a + b for a, b in zip(c, u)) for c in o.cells)
            if all(c in Ls for c in cells):
                out.append((o.cells, u, cells, o.probability))
    if spec.pair_tail is not None:
        xs = sorted(x[0] for x in Ls)
        for n in spec.pair_tail.support(1, xs[-1] - xs[0]):
            pn = spec.pair_tail.p(n)
            if pn == 0.0:
                continue
            shape = ((0,), (n,))
            for x in xs:
                if (x + n,) in Ls:
                    out.append((shape, (x,), ((x,), (x + n,)), pn))
    del d
    return out


def sample_ZL(spec: IntensitySpec, L, seed: int, replicas=(0,)) -> TriStateField:
    """Direct samples of ``Z^L``: rows are replicas, columns the sorted sites of ``L``.

    Inclusion variables use the same keys as the direct sampler, and the
    censoring uniforms are keyed by site, so ``Z^L`` only reads randomness
    attached to sets inside ``L`` and sites of ``L``.
    """
    d = spec.dimension
    sites = sorted({_as_site(x, d) for x in L})
    if not sites:
        raise SpecError("L must be non-empty")
    Ls = set(sites)
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    eps = np.array([min(1.0, censor_prob(spec, v, Ls)) for v in sites])
    inside = _sets_inside(spec, Ls)
    col = {v: i for i, v in enumerate(sites)}
    bar = np.zeros((len(reps), len(sites)), dtype=bool)
    if inside:
        keys = np.array([int(rng.offset_keys(rng.shape_hash(s), [u])[0]) for s, u, _, _ in inside],
                        dtype=np.uint64)
        probs = np.array([p for _, _, _, p in inside])
        x = rng.uniforms(seed, rng.STREAM_SETS, reps, keys) < probs[None, :]
        for j, (_, _, cells, _) in enumerate(inside):
            for c in cells:
                bar[:, col[c]] |= x[:, j]
    u = rng.uniforms(seed, rng.STREAM_CENSOR, reps, rng.site_keys(np.array(sites)))
    vals = np.where(u < eps[None, :], STAR, bar.astype(np.int8)).astype(np.int8)
    return TriStateField(sites, vals)


def exact_ZL_law(spec: IntensitySpec, L, S=None) -> dict:
    """Exact law of ``Z^L`` restricted to ``S`` (default all of ``L``) as a dict."""
    d = spec.dimension
    Ls = {_as_site(x, d) for x in L}
    S = sorted(Ls) if S is None else [_as_site(x, d) for x in S]
    if not set(S) <= Ls:
        raise SpecError("S must be inside L")
    if len(S) > 8:
        raise SpecError("exact tri-state law is capped at 8 sites")
    idx = {v: i for i, v in enumerate(S)}
    masks, probs = [], []
    for _, _, cells, p in _sets_inside(spec, Ls):
        m = sum(1 << idx[c] for c in cells if c in idx)
        if m:
            masks.append(m)
            probs.append(p)
    bar = kernels.or_convolve(np.array(masks, dtype=np.int64), np.array(probs), len(S))
    eps = [min(1.0, censor_prob(spec, v, Ls)) for v in S]
    law: dict = {}
    n = len(S)
    for x in range(1 << n):
        if bar[x] == 0.0:
            continue
        for cens in range(1 << n):
            pc = 1.0
            for i in range(n):
                pc *= eps[i] if cens >> i & 1 else 1.0 - eps[i]
            if pc == 0.0:
                continue
            key = tuple(STAR if cens >> i & 1 else (x >> i) & 1 for i in range(n))
            law[key] = law.get(key, 0.0) + bar[x] * pc
    return law


# ---------------------------------------------------------------------------
# refinement


def _multi_shapes(spec: IntensitySpec):
    if spec.dimension != 1:
        raise SpecError("refinement is implemented in d = 1")
    if spec.has_infinite_tail:
        raise SpecError("refinement needs a finite family of shapes")
    out = [(tuple(c[0] for c in o.cells), o.probability) for o in spec.orbits
           if o.size >= 2 and o.probability > 0]
    if spec.pair_tail is not None:
        for n in spec.pair_tail.support(1, spec.max_finite_diam()):
            if spec.pair_tail.p(n) > 0:
                out.append(((0, n), spec.pair_tail.p(n)))
    return out


class _Refiner:
    """Lazy per-replica refinement with memoised classes."""

    def __init__(self, spec: IntensitySpec, seed: int, replica: int):
        self.spec = spec
        self.p0 = _p0(spec)
        self.shapes = _multi_shapes(spec)
        self.seed, self.replica = seed, replica
        self.memo: dict = {}
        self.eps = lru_cache(maxsize=None)(self._eps)

    def _eps(self, off: int, length: int) -> float:
        return min(1.0, censor_prob(self.spec, (off,), [(x,) for x in range(length)]))

    def node(self, n: int, lo: int):
        key = (n, lo)
        got = self.memo.get(key)
        if got is None:
            got = self._base(lo) if n == 0 else self._merge(n, lo)
            self.memo[key] = got
        return got

    def _base(self, v):
        e = self.eps(0, 1)
        u = rng.uniform_scalar(self.seed, rng.STREAM_CENSOR, self.replica, rng.key_of(0xBA5E, v))
        if u < e:
            val = STAR
        else:
            val = 1 if u < e + (1.0 - e) * self.p0 else 0
        return [val], []

    def _merge(self, n, lo):
        half = 1 << (n - 1)
        hi, mid = lo + 2 * half - 1, lo + half
        lv, lf = self.node(n - 1, lo)
        rv, rf = self.node(n - 1, mid)
        z = lv + rv
        F = lf + rf
        covered = [0] * (2 * half)
        for cells in F:
            for c in cells:
                covered[c - lo] += 1
        cross, probs = [], []
        for shape, p in self.shapes:
            D = shape[-1]
            if D > hi - lo:
                continue
            for u in range(max(lo, mid - D), mid):
                if u + D <= hi:
                    cross.append(tuple(u + s for s in shape))
                    probs.append(p)
        cover: dict = {}
        for a, cells in enumerate(cross):
            for c in cells:
                cover.setdefault(c, set()).add(a)
        post = CoverPosterior(probs, cross, self.p0)
        ch = HashChooser(self.seed, rng.STREAM_CENSOR, self.replica, rng.key_of(0xCE, n, lo))
        alive = set(range(len(cross)))
        ones: set = set()
        p0 = self.p0
        out = []
        for v in range(lo, hi + 1):
            zc = z[v - lo]
            eP = self.eps(v - lo, 2 * half)
            eC = self.eps(v - lo, half) if v < mid else self.eps(v - mid, half)
            if covered[v - lo]:
                if zc == 0:
                    raise AssertionError("child 0 at a site covered by its own sets")
                o = zc if zc == 1 else (STAR if ch.bit((0, v - lo), eP / eC) else 1)
                out.append(o)
                continue
            S = cover.get(v, set()) & alive
            pi0 = post.prob_none(S, alive, ones) if S else 1.0
            a0 = (1.0 - p0) * (1.0 - eP) * pi0
            a1 = 1.0 - eP - a0
            c0 = (1.0 - p0) * (1.0 - eC)
            c1 = p0 * (1.0 - eC)
            if a0 < c0 - 1e-12 or a1 < c1 - 1e-12:
                raise AssertionError(f"merge coupling infeasible at {v}: {a0} < {c0} or {a1} < {c1}")
            if zc == STAR:
                o = (0, 1, STAR)[ch.cat((1, v - lo), [max(0.0, a0 - c0), max(0.0, a1 - c1), eP])]
            else:
                o = zc
            if S:
                if o == 0:
                    alive -= S
                elif o == 1:
                    ones.add(v)
            out.append(o)
        chosen = post.sample(alive, ones, ch, lambda a: (cross[a][0] - lo, len(cross[a]), cross[a][-1] - lo))
        Fn = F + [cross[a] for a in sorted(chosen)]
        for cells in Fn:
            for c in cells:
                if out[c - lo] == 0:
                    raise AssertionError("parent 0 at a site covered by an included set")
        return out, Fn


@dataclass
class RefinementTrace:
    sites: np.ndarray
    fields: list  # per level, values on the window
    final: np.ndarray
    resolution: np.ndarray  # first level with a 0/1 value (-1: unresolved)
    classes: list = field(default_factory=list)  # per level, class intervals met


def _window_points(window) -> list:
    if isinstance(window, Window):
        if window.dim != 1:
            raise SpecError("refinement is implemented in d = 1")
        return [int(x) for x in window.sites()[:, 0]]
    return sorted(int(_as_site(x, 1)[0]) for x in window)


def refine(spec: IntensitySpec, window, seed: int, levels: int = 16, replica: int = 0,
           stop_when_resolved: bool = True) -> RefinementTrace:
    """Run the refinement until the window has no ``*`` (or ``levels`` is reached)."""
    pts = _window_points(window)
    ref = _Refiner(spec, seed, replica)
    fields, classes = [], []
    resolution = np.full(len(pts), -1, dtype=np.int64)
    prev = None
    for n in range(levels + 1):
        vals = np.empty(len(pts), dtype=np.int8)
        met = set()
        for i, x in enumerate(pts):
            lo, _ = dyadic_class(n, x)
            met.add((lo, lo + (1 << n) - 1))
            vals[i] = ref.node(n, lo)[0][x - lo]
        if prev is not None and not np.all(tri_leq(vals, prev)):
            raise AssertionError("refinement is not monotone")
        fields.append(vals)
        classes.append(sorted(met))
        resolution[(resolution < 0) & (vals != STAR)] = n
        prev = vals
        if stop_when_resolved and np.all(vals != STAR):
            break
    return RefinementTrace(np.array(pts), fields, fields[-1].copy(), resolution, classes)


def refine_batch(spec: IntensitySpec, window, seed: int, replicas, levels: int = 16):
    """Final fields and resolution levels for many replicas (rows)."""
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    pts = _window_points(window)
    final = np.empty((len(reps), len(pts)), dtype=np.int8)
    res = np.empty((len(reps), len(pts)), dtype=np.int64)
    for r, rep in enumerate(reps.tolist()):
        tr = refine(spec, pts, seed, levels, rep)
        final[r] = tr.final
        res[r] = tr.resolution
    return final, res


def merge_law(spec: IntensitySpec, n: int, lo: int) -> dict:
    """Exact law of the level-``n`` class ``[lo, lo + 2^n)`` built by the refinement.

    Enumerates every random choice; only for tiny classes.
    """
    from ._posterior import enumerate_outcomes

    def run(ch):
        ref = _Refiner(spec, 0, 0)

        def base(v):
            e = ref.eps(0, 1)
            j = ch.cat((0xBA5E, v), [(1 - e) * (1 - ref.p0), (1 - e) * ref.p0, e])
            return [(0, 1, STAR)[j]], []

        ref._base = base
        orig = HashChooser
        import poissonrep.coding_censored as me
        me.HashChooser = lambda *a, **k: ch
        try:
            return tuple(ref.node(n, lo)[0])
        finally:
            me.HashChooser = orig

    return enumerate_outcomes(run)
