"""Finitary coding of a general Poisson representable process on Z or Z^2.

Sets are split by diameter into levels ``A_k = {A : N_k <= diam A < N_{k+1}}``
with ``N_k`` the general threshold.  Level 0 is a block factor and is sampled
directly.  Each level ``k >= 1`` is coded as follows.

* A random partition of the lattice into finite classes is built from an
  ``(r, r)``-net (greedy by IID priorities, ``r = N_{k+1}``) and Voronoi cells
  with IID tie-breaking.  Every r-ball meets at most ``5^d`` classes.
* A set belongs to the class of its lexicographic minimum.  Class ``L`` with
  minimum ``u`` sees the gates ``W^u_v = W_{v,j}`` on ``L* = B(L, r)``, where
  ``j`` is the rank of ``u`` among the minima of the classes whose starred
  region contains ``v``.
* Given the gates, the class configuration is drawn from the exact
  conditional law of a sequential monotone coupling.  The coupled field is
  ``Y'_v = Y_v or xi_v`` with ``xi ~ Bernoulli(eps)`` IID, exposed site by site
  in lexicographic order; ``P(Y'_v = 1 | past) <= q_k`` so ``Y' <= W``.

Every random choice is a hash of (seed, stream, replica, key) where keys are
built from positions relative to the class minimum, which keeps the
construction translation equivariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels, rng
from .intensity import IntensitySpec, SpecError, tail_threshold
from ._posterior import CoverPosterior, HashChooser, PosteriorTooLarge, enumerate_outcomes
from .sampler import Window, as_sites, enumerate_family, incidence

MARGIN_FACTOR = 8  # documented default margin for sample_partition, in units of r
_MAX_GROW = 6

_TAG_Y = 1


# ---------------------------------------------------------------------------
# levels


@dataclass
class GeneralLevel:
    k: int
    N_k: int
    N_next: int
    r: int
    shapes: list
    probs: np.ndarray
    eps: float
    q: float
    ell: int

    @property
    def empty(self) -> bool:
        return len(self.shapes) == 0

    @property
    def gate_budget(self) -> float:
        """``P(some W_{v,l} = 1)``, the chance that a site has positive radius."""
        return -math.expm1(self.ell * math.log1p(-self.q)) if self.q < 1 else 1.0


def _level_orbits(spec: IntensitySpec, lo: int, hi: float):
    sub = spec.restrict(min_diam=lo, max_diam=hi)
    out = [(o.cells, o.probability) for o in sub.orbits if o.probability > 0]
    if sub.pair_tail is not None:
        if sub.pair_tail.n_max == math.inf:
            raise SpecError("level family is infinite")
        for n in sub.pair_tail.support(lo, int(hi)):
            if sub.pair_tail.p(n) > 0:
                out.append((((0,), (n,)), sub.pair_tail.p(n)))
    return out


def gate_parameter(k: int, orbits) -> float:
    """Bernoulli parameter dominating the class field at level ``k``.

    This is the simultaneous-exposure bound with ``eps = k^-2`` summed over
    the level's sets through a site; it is at most ``2 k^-2`` by the choice
    of the threshold.
    """
    eps = 1.0 / (k * k)
    if eps >= 1.0:
        return 1.0
    tot = sum(len(c) * p * eps ** (1 - len(c)) for c, p in orbits)
    return min(1.0, eps + (1.0 - eps) * tot)


def make_general_level(spec: IntensitySpec, k: int, ell: int | None = None) -> GeneralLevel:
    d = spec.dimension
    ell = 5 ** d if ell is None else int(ell)
    if ell < 1:
        raise SpecError("ell must be positive")
    Nk = tail_threshold(spec, k, "general")
    Nn = tail_threshold(spec, k + 1, "general")
    orbits = _level_orbits(spec, Nk, Nn - 1) if Nn > Nk else []
    shapes = [c for c, _ in orbits]
    probs = np.array([p for _, p in orbits], dtype=float)
    return GeneralLevel(k, Nk, Nn, max(1, Nn), shapes, probs, 1.0 / (k * k),
                        gate_parameter(k, orbits), ell)


# ---------------------------------------------------------------------------
# partition


def _grid_box(d, box):
    """Embed a d-dimensional box into a 2D grid box (1D uses a single row)."""
    return box if d == 2 else ((0, 0),) + tuple(box)


def _ball(d, r):
    return np.ones((2 * r + 1, 2 * r + 1) if d == 2 else (1, 2 * r + 1), dtype=bool)


class _Margin(Exception):
    """Raised when a lookup leaves the exactly labelled part of a region."""


class _Region:
    """Greedy net, settlement and Voronoi labels on a finite grid box."""

    def __init__(self, d, r, box, seed, replica, tag):
        self.d, self.r, self.box = d, r, _grid_box(d, box)
        (a0, b0), (a1, b1) = self.box
        self.h, self.w = b0 - a0 + 1, b1 - a1 + 1
        self.origin = np.array([a0, a1])
        ii, jj = np.mgrid[0:self.h, 0:self.w]
        coords = np.stack([ii.ravel() + a0, jj.ravel() + a1], axis=1)
        pts = coords if d == 2 else coords[:, 1:]
        keys = rng.site_keys(pts, tag=tag)
        self.wv = rng.uniforms(seed, rng.STREAM_NET, [replica], keys)[0].reshape(self.h, self.w)
        uu = rng.uniforms(seed, rng.STREAM_TIE, [replica], keys)[0].reshape(self.h, self.w)
        edge = np.zeros((self.h, self.w), dtype=bool)
        edge[:, :r] = True
        edge[:, self.w - r:] = True
        if d == 2:
            edge[:r, :] = True
            edge[self.h - r:, :] = True
        self.centers, self.settled = kernels.greedy_net(self.wv, r, edge)
        foot = _ball(d, r)
        # labels at x are exact once every site of B(x, r) is settled
        self.det = ndimage.minimum_filter(self.settled, footprint=foot, mode="constant", cval=0)
        cmask = self.centers & self.settled
        ci, cj = np.nonzero(cmask)
        self.ci, self.cj = ci, cj
        labels, dist = kernels.voronoi_assign(ci, cj, uu[ci, cj], self.h, self.w, r)
        if len(ci) == 0:
            labels = np.full((self.h, self.w), -1, dtype=np.int64)
        self.dist = dist
        self.labels = np.where(self.det, labels, -1)
        # a class is complete when its centre's r-ball is fully labelled
        full = ndimage.minimum_filter(self.det, footprint=foot, mode="constant", cval=0)
        self.complete = full[ci, cj] if len(ci) else np.zeros(0, dtype=bool)
        flat = self.labels.ravel()
        ok = flat >= 0
        lab, first = np.unique(flat[ok], return_index=True)
        self.min_index = np.full(len(ci), -1, dtype=np.int64)
        self.min_index[lab] = np.nonzero(ok)[0][first]

    def index(self, site):
        if self.d == 1:
            return 0, int(site[0]) - int(self.origin[1])
        return int(site[0]) - int(self.origin[0]), int(site[1]) - int(self.origin[1])

    def site(self, i, j):
        if self.d == 1:
            return (int(j + self.origin[1]),)
        return (int(i + self.origin[0]), int(j + self.origin[1]))

    def covers(self, box, radius) -> bool:
        """Are labels exact on the ``radius``-neighbourhood of ``box``?"""
        gb = _grid_box(self.d, box)
        rr = (radius, radius) if self.d == 2 else (0, radius)
        i0 = gb[0][0] - rr[0] - self.origin[0]
        i1 = gb[0][1] + rr[0] - self.origin[0]
        j0 = gb[1][0] - rr[1] - self.origin[1]
        j1 = gb[1][1] + rr[1] - self.origin[1]
        if i0 < 0 or j0 < 0 or i1 >= self.h or j1 >= self.w:
            return False
        return bool(self.det[i0:i1 + 1, j0:j1 + 1].all())

    def class_min(self, c):
        if c < 0 or not self.complete[c]:
            raise _Margin
        i, j = divmod(int(self.min_index[c]), self.w)
        return self.site(i, j)

    def class_sites(self, c):
        if not self.complete[c]:
            raise _Margin
        r = self.r
        ci, cj = int(self.ci[c]), int(self.cj[c])
        i0, j0 = max(0, ci - r), max(0, cj - r)
        sub = self.labels[i0:ci + r + 1, j0:cj + r + 1] == c
        ii, jj = np.nonzero(sub)
        return [self.site(i + i0, j + j0) for i, j in zip(ii, jj)]

    def labels_near(self, site, radius):
        i, j = self.index(site)
        ri = radius if self.d == 2 else 0
        if i - ri < 0 or j - radius < 0 or i + ri >= self.h or j + radius >= self.w:
            raise _Margin
        sub = set(self.labels[i - ri:i + ri + 1, j - radius:j + radius + 1].ravel().tolist())
        if -1 in sub:
            raise _Margin
        return np.fromiter(sub, dtype=np.int64, count=len(sub))


def _expand(box, m):
    return tuple((a - m, b + m) for a, b in box)


def _region_for(d, r, box, need, seed, replica, tag, margin=None, grow=True):
    m = need + 3 * r if margin is None else int(margin)
    for _ in range(_MAX_GROW):
        reg = _Region(d, r, _expand(box, m), seed, replica, tag)
        if reg.covers(box, need):
            return reg, m
        if not grow:
            break
        m *= 2
    raise SpecError(f"partition margin too small (margin {m}, r {r})")


@dataclass
class PartitionSample:
    window: Window
    r: int
    sites: np.ndarray
    class_id: np.ndarray
    minima: np.ndarray
    centers: np.ndarray
    margin: int
    trace: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(np.unique(self.class_id))


def _linf(a, b):
    return int(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check_partition(ps: PartitionSample) -> None:
    """Exact invariant checks on the window (raises ``AssertionError``)."""
    d, r = ps.window.dim, ps.r
    cen = ps.centers
    win = ps.window
    inner = np.array([win.contains(c) for c in cen.tolist()], dtype=bool) if len(cen) else np.zeros(0, bool)
    cw = cen[inner]
    if len(cw) > 1:
        dd = np.max(np.abs(cw[:, None, :] - cw[None, :, :]), axis=2)
        np.fill_diagonal(dd, r + 1)
        assert dd.min() > r, "net centres closer than r"
    if len(cen) == 0:
        raise AssertionError("no centres near the window")
    dmin = np.min(np.max(np.abs(ps.sites[:, None, :] - cen[None, :, :]), axis=2), axis=1)
    assert np.all(dmin <= r), "site farther than r from every centre"
    grid = dict(zip(map(tuple, ps.sites.tolist()), ps.class_id.tolist()))
    bound = 5 ** d
    lo = [a + r for a, _ in win.box]
    hi = [b - r for _, b in win.box]
    if all(x <= y for x, y in zip(lo, hi)):
        axes = [range(x, y + 1) for x, y in zip(lo, hi)]
        offs = [o for o in np.ndindex(*([2 * r + 1] * d))]
        for c in np.array(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T.tolist():
            seen = {grid[tuple(ci + oi - r for ci, oi in zip(c, o))] for o in offs}
            assert len(seen) <= bound, f"ball at {c} meets {len(seen)} > {bound} classes"


def sample_partition(d: int, r: int, window: Window, seed: int, replica: int = 0,
                     margin: int | None = None, tag: int = 0, check: bool = True) -> PartitionSample:
    """Net-and-Voronoi partition restricted to ``window``.

    The simulated region extends ``margin`` beyond the window.  Greedy
    decisions are settled exactly, so a larger region never changes a
    settled label: with the default margin (``8 r + 10``) the region is
    doubled until the window plus an r-collar is settled.  An explicit
    ``margin`` that leaves sites unsettled raises ``SpecError``.
    """
    if r < 1:
        raise SpecError("r must be at least 1")
    if window.dim != d:
        raise SpecError("window dimension mismatch")
    m = MARGIN_FACTOR * r + 10 if margin is None else int(margin)
    reg, m = _region_for(d, r, window.box, 3 * r, seed, replica, tag, margin=m, grow=margin is None)
    pts = window.sites()
    cid = np.empty(len(pts), dtype=np.int64)
    mins = np.empty_like(pts)
    for n, p in enumerate(pts.tolist()):
        i, j = reg.index(p)
        c = int(reg.labels[i, j])
        cid[n] = c
        mins[n] = reg.class_min(c)
    sel = reg.det[reg.ci, reg.cj] if len(reg.ci) else np.zeros(0, bool)
    cen = np.array([reg.site(i, j) for i, j in zip(reg.ci[sel], reg.cj[sel])], dtype=np.int64).reshape(-1, d)
    ps = PartitionSample(window, r, pts, cid, mins, cen, m,
                         {"region": reg.box, "n_centers": int(len(reg.ci)),
                          "settled_fraction": float(reg.settled.mean())})
    if check:
        check_partition(ps)
    return ps


# ---------------------------------------------------------------------------
# exact class coupling


def couple_class(sets, probs, gates, eps, q, chooser, rel=None, set_keys=None):
    """Draw the inclusion vector of one class given its gate values.

    ``sets`` are tuples of sites, ``gates`` maps every covered site to 0/1.
    Returns a tuple of 0/1 per set.  ``rel`` maps a site to the key used for
    its random choice (defaults to the site itself); ``set_keys`` gives a
    key per set (defaults to its index).
    """
    m = len(sets)
    rel = rel or (lambda v: v)
    set_keys = set_keys or [(a,) for a in range(m)]
    cover: dict = {}
    for a, cells in enumerate(sets):
        for v in cells:
            cover.setdefault(v, set()).add(a)
    post = CoverPosterior(probs, sets, eps)
    alive = set(range(m))
    ones: set = set()
    for v in sorted(cover):
        S = cover[v] & alive
        if not S:
            continue
        if not gates[v]:
            alive -= S
            continue
        if eps >= 1.0:
            continue  # an exposed one carries no information when xi == 1
        try:
            none = post.prob_none(S, alive, ones)
        except PosteriorTooLarge as exc:
            raise SpecError(f"class coupling too entangled: {exc}") from None
        c = 1.0 - (1.0 - eps) * none
        if c > q * (1 + 1e-12) + 1e-15:
            raise AssertionError(f"class coupling infeasible: {c} > {q}")
        if chooser.bit((_TAG_Y,) + tuple(rel(v)), c / q):
            ones.add(v)
        else:
            alive -= S
    chosen = post.sample(alive, ones, chooser, lambda a: set_keys[a])
    x = tuple(int(a in chosen) for a in range(m))
    for a in chosen:
        if not all(gates[v] for v in sets[a]):
            raise AssertionError("coupled set above a zero gate")
    return x


def class_sets(level: GeneralLevel, class_sites, with_ids: bool = False):
    """Sets of the level whose minimum lies in the class, with probabilities."""
    sets, probs, ids = [], [], []
    for sid, (s, p) in enumerate(zip(level.shapes, level.probs)):
        for u in sorted(class_sites):
            sets.append(tuple(tuple(ci + ui for ci, ui in zip(c, u)) for c in s))
            probs.append(float(p))
            ids.append((sid, u))
    return (sets, probs, ids) if with_ids else (sets, probs)


def class_law(level: GeneralLevel, class_sites, gates) -> dict:
    """Exact conditional law of the class configuration given ``gates``."""
    sets, probs = class_sets(level, class_sites)[:2]
    return enumerate_outcomes(lambda ch: couple_class(sets, probs, gates, level.eps, level.q, ch))


# ---------------------------------------------------------------------------
# coding a level on a window


def _gate_key(k, j, site):
    return rng.offset_key(rng.key_of(0x6A7E, k, j), site)


def _gate_keys(k, j, pts):
    return rng.offset_keys(rng.key_of(0x6A7E, k, j), pts)


@dataclass
class GeneralLevelResult:
    k: int
    sites: np.ndarray
    bits: np.ndarray
    flags: np.ndarray
    radius: np.ndarray
    margins: list


def _window_sets(level, pts):
    """(shape index, lexmin) of every level set meeting the window sites."""
    found = set()
    for s, cells in enumerate(level.shapes):
        for c in cells:
            for p in pts:
                found.add((s, tuple(pi - ci for pi, ci in zip(p, c))))
    return sorted(found)


def code_level_general(spec: IntensitySpec, k: int, window: Window, ell: int | None = None,
                       seed: int = 0, replicas=(0,), level: GeneralLevel | None = None) -> GeneralLevelResult:
    """Level-``k`` union over the window, coded with gates and class couplings."""
    lv = level if level is not None else make_general_level(spec, k, ell)
    d = spec.dimension
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    pts = [tuple(p) for p in as_sites(spec, window).tolist()]
    col = {p: i for i, p in enumerate(pts)}
    R, n = len(reps), len(pts)
    bits = np.zeros((R, n), dtype=bool)
    radius = np.zeros((R, n), dtype=np.int64)
    if lv.empty:
        return GeneralLevelResult(k, np.array(pts), bits, np.zeros((R, n), bool), radius, [])
    # gate field on the window: flag_v = some W_{v,l} equals one
    if lv.q >= 1.0:
        flags = np.ones((R, n), dtype=bool)
    else:
        flags = np.zeros((R, n), dtype=bool)
        for j in range(1, lv.ell + 1):
            flags |= rng.uniforms(seed, rng.STREAM_GATES, reps, _gate_keys(k, j, pts)) < lv.q
    r = lv.r
    wsets = _window_sets(lv, pts)
    margins = []
    tag = 1000 + k
    for row, rep in enumerate(reps.tolist()):
        if not flags[row].any():
            continue
        m = 8 * r + 10
        for _ in range(_MAX_GROW):
            reg = _Region(d, r, _expand(window.box, m), seed, rep, tag)
            try:
                line = np.zeros(n, dtype=bool)
                classes = {}
                for s, u in wsets:
                    i, j = reg.index(u)
                    c = int(reg.labels[i, j])
                    if c < 0:
                        raise _Margin
                    classes.setdefault(c, []).append((s, u))
                for c in sorted(classes):
                    _code_class(lv, reg, c, seed, rep, col, line)
                break
            except _Margin:
                m += 4 * r + 4
        else:
            raise SpecError(f"partition margin too small (margin {m}, r {r})")
        bits[row] = line
        margins.append(m)
        radius[row] = np.where(flags[row], m, 0)
    if np.any(bits & ~flags):
        raise AssertionError("gate soundness violated")
    return GeneralLevelResult(k, np.array(pts), bits, flags, radius, margins)


def _code_class(lv, reg, c, seed, rep, col, out_row):
    k, r = lv.k, lv.r
    u = reg.class_min(c)
    L = reg.class_sites(c)
    sets, probs, ids = class_sets(lv, L, with_ids=True)
    rank_cache: dict = {}

    cmin = int(reg.min_index[c])

    def gate(v):
        if v in rank_cache:
            return rank_cache[v]
        labs = reg.labels_near(v, r)
        if not reg.complete[labs].all():
            raise _Margin
        # flat region order is the lexicographic order of sites
        j = int(np.count_nonzero(reg.min_index[labs] < cmin)) + 1
        if len(labs) > lv.ell:
            raise SpecError(f"site meets {len(labs)} classes, more than ell = {lv.ell}")
        g = int(rng.uniform_scalar(seed, rng.STREAM_GATES, rep, _gate_key(k, j, v)) < lv.q)
        rank_cache[v] = g
        return g

    hits = [a for a, cells in enumerate(sets) if any(v in col for v in cells)]
    if not any(all(gate(v) for v in sets[a]) for a in hits):
        return
    gates = {v: gate(v) for cells in sets for v in cells}
    base = rng.key_of(0xC1A5, k, *u)  # the uniform attached to the class minimum
    x = couple_class(sets, probs, gates, lv.eps, lv.q, HashChooser(seed, rng.STREAM_PHI, rep, base),
                     rel=lambda v: tuple(vi - ui for vi, ui in zip(v, u)),
                     set_keys=[(sid,) + tuple(ai - ui for ai, ui in zip(a, u)) for sid, a in ids])
    for a in hits:
        if x[a]:
            for v in sets[a]:
                i = col.get(v)
                if i is not None:
                    out_row[i] = True


# ---------------------------------------------------------------------------
# full construction


@dataclass
class GeneralCodingReport:
    sites: np.ndarray
    levels: list
    level_flags: dict
    level_budget: dict
    level_q: dict
    ell: dict
    radius: np.ndarray
    correction: np.ndarray
    correction_start: int
    neglected: float
    level0_radius: int

    def gate_rates(self) -> dict:
        return {k: float(f.mean()) for k, f in self.level_flags.items()}

    def radius_survival(self, rmax=None):
        r = self.radius.reshape(-1)
        top = int(r.max()) if rmax is None else rmax
        return [(t, float((r > t).mean())) for t in range(top + 1)]


def _direct_layer(spec, pts, seed, reps, lo, hi, budget):
    sub = spec.restrict(min_diam=lo, max_diam=hi)
    fam = enumerate_family(sub, pts, budget, mode="meet")
    if len(fam) == 0:
        return np.zeros((len(reps), len(pts)), dtype=bool), fam.neglected
    x = rng.uniforms(seed, rng.STREAM_DIRECT, reps, fam.keys) < fam.probs[None, :]
    inc = incidence(fam, pts).toarray().astype(np.int32)
    return (x.astype(np.int32) @ inc) > 0, fam.neglected


def _span(cells):
    c = np.asarray(cells)
    return c.max(axis=0) - c.min(axis=0)


def code_general(spec: IntensitySpec, window: Window, seed: int, k_max: int, replicas=(0,),
                 ell: int | None = None, budget: float = 1e-9):
    """Level 0 directly, levels ``1..k_max`` coded, everything above sampled directly."""
    if k_max < 1:
        raise SpecError("k_max must be at least 1")
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    pts = as_sites(spec, window)
    N1 = tail_threshold(spec, 1, "general")
    out, _ = _direct_layer(spec, pts, seed, reps, 0, N1 - 1, 0.0) if N1 > 0 else \
        (np.zeros((len(reps), len(pts)), dtype=bool), 0.0)
    r0 = 0
    if N1 > 0:
        r0 = max((o.diam for o in spec.orbits if o.diam < N1 and o.probability > 0), default=0)
        if spec.pair_tail is not None and any(spec.pair_tail.p(m) > 0 for m in range(1, N1)):
            r0 = max(r0, N1 - 1)
    radius = np.full(out.shape, r0, dtype=np.int64)
    levels, flags, budgets, qs, ells = [], {}, {}, {}, {}
    for k in range(1, k_max + 1):
        lv = make_general_level(spec, k, ell)
        levels.append(lv)
        if lv.empty:
            continue
        if lv.q >= 1.0:
            # gates are identically one: the level is a finite block factor
            bk, _ = _direct_layer(spec, pts, rng.key_of(seed, k), reps, lv.N_k, lv.N_next - 1, 0.0)
            out |= bk
            radius = np.maximum(radius, max(len(c) and max(_span(c)) for c in lv.shapes))
            flags[k] = np.ones(out.shape, dtype=bool)
        else:
            res = code_level_general(spec, k, window, seed=seed, replicas=reps, level=lv)
            out |= res.bits
            radius = np.maximum(radius, res.radius)
            flags[k] = res.flags
        budgets[k] = lv.gate_budget
        qs[k] = lv.q
        ells[k] = lv.ell
    start = tail_threshold(spec, k_max + 1, "general")
    corr, neglected = _direct_layer(spec, pts, rng.mix64(seed) ^ 0x5EED, reps, start, math.inf, budget)
    out |= corr
    report = GeneralCodingReport(pts, levels, flags, budgets, qs, ells, radius, corr, start,
                                 neglected, r0)
    return out, report
