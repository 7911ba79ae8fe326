"""Translation-invariant intensity specifications on Z and Z^2.

A spec is a finite list of orbit generators ``(shape, p)`` together with an
optional one-dimensional pair tail ``p_n = p_{{0,n}}``.  Sites are always
represented as integer tuples of length ``d``; one-dimensional helpers accept
bare integers too.

Diameters in d = 2 use the l-infinity distance, the same metric used for the
balls of the coding partition (the class count ``(5r+1)^d / (r+1)^d`` is a
ratio of cube volumes).  Connectivity for hulls is nearest-neighbour adjacency.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

WEIGHTS = ("size", "diam", "connected_size")

Site = tuple


class SpecError(ValueError):
    """Raised for invalid specs or undefined derived quantities."""


def _as_site(x, d=None):
    if isinstance(x, (int, np.integer)):
        t = (int(x),)
    else:
        t = tuple(int(c) for c in x)
    if d is not None and len(t) != d:
        raise SpecError(f"site {x!r} does not have dimension {d}")
    return t


def canonicalize_shape(cells: Iterable, d: int | None = None) -> tuple:
    """Translate ``cells`` so that the lexicographic minimum sits at the origin."""
    pts = sorted({_as_site(c, d) for c in cells})
    if not pts:
        raise SpecError("empty shape")
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise SpecError("mixed dimensions in shape")
    m = pts[0]
    return tuple(tuple(a - b for a, b in zip(p, m)) for p in pts)


def shift(cells, v) -> tuple:
    return tuple(sorted(tuple(a + b for a, b in zip(c, v)) for c in cells))


def diameter(cells) -> int:
    """l-infinity diameter (the usual |max - min| in d = 1)."""
    arr = np.asarray(cells, dtype=np.int64)
    if arr.size == 0:
        return 0
    return int((arr.max(axis=0) - arr.min(axis=0)).max())


@dataclass(frozen=True)
class ShapeOrbit:
    cells: tuple
    probability: float

    def __post_init__(self):
        canon = canonicalize_shape(self.cells)
        if canon != tuple(self.cells):
            object.__setattr__(self, "cells", canon)
        if not (0.0 <= self.probability < 1.0):
            raise SpecError(f"orbit probability must lie in [0, 1), got {self.probability}")

    @property
    def dim(self) -> int:
        return len(self.cells[0])

    @property
    def size(self) -> int:
        return len(self.cells)

    @property
    def diam(self) -> int:
        return diameter(self.cells)


@dataclass(frozen=True)
class PairTail:
    """Pair probabilities ``p_n`` for ``n >= n0`` in d = 1.

    kind ``geometric``: ``p_n = c * r**n``.  kind ``list``: ``p_n = values[n - n0]``
    and zero beyond the list.
    """

    kind: str
    c: float = 0.0
    r: float = 0.0
    values: tuple = ()
    n0: int = 1

    def __post_init__(self):
        if self.n0 < 1:
            raise SpecError("pair tail must start at n0 >= 1")
        if self.kind == "geometric":
            if not (0.0 < self.r < 1.0) or self.c < 0:
                raise SpecError("geometric tail needs c >= 0 and 0 < r < 1")
            if self.c * self.r ** self.n0 >= 1.0:
                raise SpecError("pair probabilities must be < 1")
        elif self.kind == "list":
            object.__setattr__(self, "values", tuple(float(x) for x in self.values))
            if any(not (0.0 <= x < 1.0) for x in self.values):
                raise SpecError("pair probabilities must lie in [0, 1)")
        else:
            raise SpecError(f"unknown pair tail kind {self.kind!r}")

    @property
    def n_max(self) -> float:
        if self.kind == "geometric":
            return math.inf
        return self.n0 + len(self.values) - 1

    def p(self, n: int) -> float:
        if n < self.n0 or n > self.n_max:
            return 0.0
        if self.kind == "geometric":
            return self.c * self.r ** n
        return self.values[n - self.n0]

    def support(self, lo: int, hi: int) -> range:
        """Pair lengths n with ``lo <= n <= hi`` inside the support."""
        a = max(lo, self.n0)
        b = hi if self.n_max == math.inf else min(hi, int(self.n_max))
        return range(a, b + 1)

    def weighted_tail(self, m: int, lam: float = 0.0, weight: str = "size",
                      upto: float = math.inf) -> float:
        """``sum_{m <= n <= upto} p_n e^{lam * w(n)}`` for one orientation of the pair."""
        if weight not in WEIGHTS:
            raise SpecError(f"unknown weight {weight!r}")
        lo = max(m, self.n0)
        hi = min(upto, self.n_max)
        if hi < lo:
            return 0.0
        if self.kind == "list":
            tot = 0.0
            for n in range(lo, int(hi) + 1):
                tot += self.values[n - self.n0] * math.exp(lam * _pair_weight(n, weight))
            return tot
        if self.c == 0.0:
            return 0.0
        if weight == "size":
            q, pre = self.r, self.c * math.exp(2 * lam)
        else:
            q = self.r * math.exp(lam)
            pre = self.c * (math.exp(lam) if weight == "connected_size" else 1.0)
        if hi == math.inf:
            if q >= 1.0:
                return math.inf
            return pre * q ** lo / (1.0 - q)
        if q == 1.0:
            return pre * (hi - lo + 1)
        return pre * (q ** lo - q ** (hi + 1)) / (1.0 - q)

    def to_json(self) -> dict:
        if self.kind == "geometric":
            return {"kind": "geometric", "params": {"c": self.c, "r": self.r, "n0": self.n0}}
        return {"kind": "list", "params": {"values": list(self.values), "n0": self.n0}}

    @classmethod
    def from_json(cls, obj: dict) -> "PairTail":
        kind = obj["kind"]
        params = obj.get("params", {})
        if kind == "geometric":
            return cls("geometric", c=float(params["c"]), r=float(params["r"]), n0=int(params.get("n0", 1)))
        return cls("list", values=tuple(params["values"]), n0=int(params.get("n0", 1)))


def _pair_weight(n: int, weight: str) -> int:
    return {"size": 2, "diam": n, "connected_size": n + 1}[weight]


@dataclass(frozen=True)
class IntensitySpec:
    dimension: int
    orbits: tuple = ()
    pair_tail: PairTail | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise SpecError("dimension must be 1 or 2")
        orbits = tuple(self.orbits)
        object.__setattr__(self, "orbits", orbits)
        seen = set()
        for o in orbits:
            if o.dim != self.dimension:
                raise SpecError(f"orbit {o.cells} has wrong dimension")
            if o.cells in seen:
                raise SpecError(f"duplicate orbit {o.cells}")
            seen.add(o.cells)
        if self.pair_tail is not None:
            if self.dimension != 1:
                raise SpecError("pair tails are only supported in d = 1")
            for o in orbits:
                if o.size == 2 and self.pair_tail.p(o.diam) > 0:
                    raise SpecError(f"orbit {o.cells} overlaps the pair tail")

    # -- convenience -------------------------------------------------------
    @property
    def has_infinite_tail(self) -> bool:
        return self.pair_tail is not None and self.pair_tail.n_max == math.inf \
            and self.pair_tail.c > 0

    def orbit_prob(self, cells) -> float:
        canon = canonicalize_shape(cells, self.dimension)
        for o in self.orbits:
            if o.cells == canon:
                return o.probability
        if self.pair_tail is not None and len(canon) == 2:
            return self.pair_tail.p(canon[1][0])
        return 0.0

    def pair_prob(self, n: int) -> float:
        """``p_n = p_{{0,n}}`` counting both the tail and explicit pair orbits (d = 1)."""
        if self.dimension != 1:
            raise SpecError("pair probabilities are defined in d = 1")
        return self.orbit_prob([(0,), (n,)])

    @property
    def singleton_prob(self) -> float:
        return self.orbit_prob([(0,) * self.dimension])

    def max_finite_diam(self) -> int:
        dm = max((o.diam for o in self.orbits), default=0)
        if self.pair_tail is not None and self.pair_tail.n_max != math.inf:
            dm = max(dm, int(self.pair_tail.n_max))
        return dm

    def is_pair_spec(self) -> bool:
        return self.dimension == 1 and all(o.size <= 2 for o in self.orbits)

    def restrict(self, min_diam: int = 0, max_diam: float = math.inf,
                 sizes: Sequence[int] | None = None) -> "IntensitySpec":
        """Sub-spec with ``min_diam <= diam <= max_diam`` (and optional size filter)."""
        orbits = tuple(o for o in self.orbits
                       if min_diam <= o.diam <= max_diam and (sizes is None or o.size in sizes))
        tail = self.pair_tail
        if tail is not None and (sizes is None or 2 in sizes):
            lo = max(tail.n0, min_diam)
            hi = min(tail.n_max, max_diam)
            if hi < lo:
                tail = None
            elif tail.kind == "geometric" and hi == math.inf:
                tail = PairTail("geometric", c=tail.c, r=tail.r, n0=lo)
            else:
                tail = PairTail("list", values=tuple(tail.p(n) for n in range(lo, int(hi) + 1)), n0=lo)
        else:
            tail = None
        return IntensitySpec(self.dimension, orbits, tail)

    def union(self, other: "IntensitySpec") -> "IntensitySpec":
        if other.dimension != self.dimension:
            raise SpecError("dimension mismatch")
        if self.pair_tail is not None and other.pair_tail is not None:
            raise SpecError("cannot union two pair tails")
        return IntensitySpec(self.dimension, self.orbits + other.orbits,
                             self.pair_tail or other.pair_tail)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        out = {
            "dimension": self.dimension,
            "orbits": [{"cells": [list(c) for c in o.cells], "p": o.probability} for o in self.orbits],
        }
        if self.pair_tail is not None:
            out["pair_tail"] = self.pair_tail.to_json()
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "IntensitySpec":
        d = int(obj["dimension"])
        orbits = tuple(ShapeOrbit(canonicalize_shape(o["cells"], d), float(o["p"]))
                       for o in obj.get("orbits", []))
        tail = obj.get("pair_tail")
        return cls(d, orbits, PairTail.from_json(tail) if tail else None)

    @classmethod
    def loads(cls, text: str) -> "IntensitySpec":
        return cls.from_json(json.loads(text))


def make_spec(dimension: int, orbits=(), pair_tail: PairTail | None = None) -> IntensitySpec:
    """Build a spec from ``[(cells, p), ...]`` with cells in any translate."""
    return IntensitySpec(
        dimension,
        tuple(ShapeOrbit(canonicalize_shape(c, dimension), float(p)) for c, p in orbits),
        pair_tail,
    )


# ---------------------------------------------------------------------------
# enumeration

@dataclass
class Translates:
    sets: list = field(default_factory=list)  # list of (cells tuple, p)
    neglected: float = 0.0


def _tail_cutoff(tail: PairTail, budget: float, lo: int = 1) -> int:
    """Largest pair length to enumerate so that ``2 * sum_{n > M} p_n <= budget``."""
    if tail.n_max != math.inf:
        return int(tail.n_max)
    if budget <= 0:
        raise SpecError("infinite pair tail needs a positive error budget")
    m = max(tail.n0, lo) - 1
    # closed-form guess then fix up against the exact tail
    if tail.c > 0:
        guess = math.log(budget * (1 - tail.r) / (2 * tail.c)) / math.log(tail.r)
        m = max(m, int(math.floor(guess)) - 2)
    while 2 * tail.weighted_tail(m + 1) > budget:
        m += 1
    return m


def translates_through(spec: IntensitySpec, v, diam_cap: float = math.inf,
                       error_budget: float = 0.0) -> Translates:
    """Every concrete translate ``A`` with ``v in A`` and ``diam A <= diam_cap``."""
    v = _as_site(v, spec.dimension)
    out = Translates()
    for o in spec.orbits:
        if o.diam > diam_cap or o.probability == 0.0:
            continue
        for c in o.cells:
            off = tuple(a - b for a, b in zip(v, c))
            out.sets.append((shift(o.cells, off), o.probability))
    tail = spec.pair_tail
    if tail is not None:
        if diam_cap == math.inf:
            top = _tail_cutoff(tail, error_budget)
            out.neglected = 2 * tail.weighted_tail(top + 1)
        else:
            top = int(min(diam_cap, tail.n_max)) if tail.n_max != math.inf else int(diam_cap)
        for n in tail.support(1, top):
            p = tail.p(n)
            if p == 0.0:
                continue
            out.sets.append((((v[0],), (v[0] + n,)), p))
            out.sets.append((((v[0] - n,), (v[0],)), p))
    return out


def sets_meeting(spec: IntensitySpec, sites: Iterable, error_budget: float = 0.0,
                 diam_cap: float = math.inf):
    """Distinct concrete sets meeting ``sites``; returns ``(sets, probs, neglected)``.

    The neglected mass is the summed probability of omitted tail sets meeting
    ``sites``, which bounds the total-variation error of the truncation.
    """
    sites = [_as_site(s, spec.dimension) for s in sites]
    if not sites:
        return [], np.zeros(0), 0.0
    per = error_budget / len(sites) if error_budget > 0 else 0.0
    seen = {}
    neglected = 0.0
    for v in sites:
        t = translates_through(spec, v, diam_cap=diam_cap, error_budget=per)
        neglected += t.neglected
        for cells, p in t.sets:
            seen.setdefault(cells, p)
    sets = sorted(seen)
    return sets, np.array([seen[s] for s in sets], dtype=float), neglected


# ---------------------------------------------------------------------------
# moments and thresholds

def _orbit_weight(o: ShapeOrbit, weight: str, hull_cap: int = 6) -> int:
    if weight == "size":
        return o.size
    if weight == "diam":
        return o.diam
    return connected_hull(o.cells, o.dim, hull_cap=hull_cap)[1]


def moment_sum(spec: IntensitySpec, lam: float, weight: str = "size",
               min_diam: int = 0, max_diam: float = math.inf) -> float:
    """``sum_{A ni 0, min_diam <= diam A <= max_diam} p_A e^{lam * w(A)}`` (``inf`` if divergent)."""
    if weight not in WEIGHTS:
        raise SpecError(f"unknown weight {weight!r}")
    if lam < 0:
        raise SpecError("lambda must be non-negative")
    tot = 0.0
    for o in spec.orbits:
        if min_diam <= o.diam <= max_diam and o.probability > 0:
            tot += o.size * o.probability * math.exp(lam * _orbit_weight(o, weight))
    if spec.pair_tail is not None:
        tot += 2 * spec.pair_tail.weighted_tail(max(min_diam, 1), lam, weight, upto=max_diam)
    return tot


def size_masses(spec: IntensitySpec) -> dict:
    """``p_n = sum_{A ni 0, |A| = n} p_A`` for every size with positive mass."""
    out: dict = {}
    for o in spec.orbits:
        if o.probability > 0:
            out[o.size] = out.get(o.size, 0.0) + o.size * o.probability
    if spec.pair_tail is not None:
        m = 2 * spec.pair_tail.weighted_tail(1)
        if m > 0:
            out[2] = out.get(2, 0.0) + m
    return dict(sorted(out.items()))


@dataclass
class MomentReport:
    lambda_c: float
    gamma: float
    queries: list = field(default_factory=list)  # (lam, weight, value)


def moment_report(spec: IntensitySpec, queries: Sequence = ()) -> MomentReport:
    """``lambda_c = limsup (-log p_n)/n`` and ``gamma = inf_n log(1 + n/p_n)/n``.

    All supported families have bounded set sizes, so ``p_n = 0`` eventually
    and ``lambda_c = inf``.
    """
    masses = size_masses(spec)
    gamma = math.inf
    for n, pn in masses.items():
        gamma = min(gamma, math.log1p(n / pn) / n)
    rep = MomentReport(lambda_c=math.inf, gamma=gamma)
    for lam, weight in queries:
        rep.queries.append((lam, weight, moment_sum(spec, lam, weight)))
    return rep


def tail_threshold(spec: IntensitySpec, k: int, variant: str = "pairs") -> int:
    """Level threshold ``N_k``.

    ``pairs``: smallest positive N with ``sum_{n >= N} p_n <= k^-4``.
    ``general``: smallest N >= 0 with ``sum_{A ni 0, diam A >= N} p_A k^{2|A|} <= 1``.
    """
    if k < 1:
        raise SpecError("k must be >= 1")
    if variant == "pairs":
        if not spec.is_pair_spec():
            raise SpecError("pairs thresholds need a one-dimensional pair spec")
        bound = float(k) ** -4
        n = 1
        while pair_tail_mass(spec, n) > bound:
            n += 1
        return n
    if variant == "general":
        lam = 2 * math.log(k)
        if moment_sum(spec, lam, "size") == math.inf:
            raise SpecError(f"threshold undefined at level {k}")
        n = 0
        while moment_sum(spec, lam, "size", min_diam=n) > 1.0:
            n += 1
        return n
    raise SpecError(f"unknown variant {variant!r}")


def pair_tail_mass(spec: IntensitySpec, n: int) -> float:
    """``sum_{m >= n} p_m`` over pair lengths (one orientation)."""
    tot = 0.0
    for o in spec.orbits:
        if o.size == 2 and o.diam >= n:
            tot += o.probability
    if spec.pair_tail is not None:
        tot += spec.pair_tail.weighted_tail(n)
    return tot


# ---------------------------------------------------------------------------
# connected hull

_HULL_CACHE: dict = {}


def _relax(dp, w):
    """Node-weighted shortest-path closure of ``dp`` on the 4-neighbour grid."""
    while True:
        best = dp.copy()
        best[1:, :] = np.minimum(best[1:, :], dp[:-1, :] + w[1:, :])
        best[:-1, :] = np.minimum(best[:-1, :], dp[1:, :] + w[:-1, :])
        best[:, 1:] = np.minimum(best[:, 1:], dp[:, :-1] + w[:, 1:])
        best[:, :-1] = np.minimum(best[:, :-1], dp[:, 1:] + w[:, :-1])
        if np.array_equal(best, dp):
            return dp
        dp = best


def _components(cells: set) -> list:
    cells = set(cells)
    comps = []
    while cells:
        start = cells.pop()
        comp, stack = [start], [start]
        while stack:
            x, y = stack.pop()
            for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if nb in cells:
                    cells.remove(nb)
                    comp.append(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps


def _steiner_table(fixed: set, shape):
    """Dreyfus-Wagner over components of ``fixed`` in a box.

    Returns ``T`` where ``T[v]`` is the least number of extra cells in a
    connected set containing ``fixed`` and ``v`` (``v`` counted if not fixed).
    """
    w = np.ones(shape)
    for c in fixed:
        w[c] = 0.0
    comps = _components(fixed)
    t = len(comps)
    if t > 12:
        raise SpecError("hull search too large")
    reps = [c[0] for c in comps]
    full = (1 << t) - 1
    dp = [None] * (full + 1)
    for i, r in enumerate(reps):
        base = np.full(shape, np.inf)
        base[r] = 0.0
        dp[1 << i] = _relax(base, w)
    for s in range(1, full + 1):
        if dp[s] is not None:
            continue
        best = np.full(shape, np.inf)
        sub = (s - 1) & s
        while sub:
            if sub > (s ^ sub):  # each unordered split once
                best = np.minimum(best, dp[sub] + dp[s ^ sub] - w)
            sub = (sub - 1) & s
        dp[s] = _relax(best, w)
    return dp[full]


def connected_hull(cells, d: int, hull_cap: int = 6):
    """Minimum-cardinality connected superset of ``cells``.

    d = 1 gives the interval ``[min, max]``.  In d = 2 some optimal set lies in
    the bounding box (clamping coordinates into the box maps a connected
    superset onto a connected superset of no larger size), so the search runs
    there: Dreyfus-Wagner gives the optimum, and the lexicographically least
    optimal set is built greedily, adding at each step the smallest cell that
    keeps an optimal completion available.
    """
    pts = sorted({_as_site(c, d) for c in cells})
    if not pts:
        raise SpecError("empty shape")
    if d == 1:
        lo, hi = pts[0][0], pts[-1][0]
        return tuple((x,) for x in range(lo, hi + 1)), hi - lo + 1
    if len(pts) > hull_cap:
        raise SpecError("hull search too large")
    origin = pts[0]
    canon = tuple((x - origin[0], y - origin[1]) for x, y in pts)
    if canon not in _HULL_CACHE:
        _HULL_CACHE[canon] = _hull2d(canon)
    hull = _HULL_CACHE[canon]
    return tuple((x + origin[0], y + origin[1]) for x, y in hull), len(hull)


def _hull2d(pts):
    arr = np.array(pts)
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    shape = tuple(int(s) for s in hi - lo + 1)
    if shape[0] * shape[1] > 4096:
        raise SpecError("hull search too large")
    fixed = {(int(x - lo[0]), int(y - lo[1])) for x, y in pts}
    table = _steiner_table(fixed, shape)
    target = len(fixed) + int(table.min())
    order = [(i, j) for i in range(shape[0]) for j in range(shape[1])]
    while len(fixed) < target:
        for c in order:
            if c not in fixed and len(fixed) + table[c] == target:
                fixed.add(c)
                break
        else:  # pragma: no cover - guaranteed by the table
            raise RuntimeError("hull reconstruction failed")
        if len(fixed) < target:
            table = _steiner_table(fixed, shape)
    return tuple(sorted((int(x + lo[0]), int(y + lo[1])) for x, y in fixed))


def is_connected(cells) -> bool:
    cells = {tuple(c) for c in cells}
    if not cells:
        return False
    if len(next(iter(cells))) == 1:
        xs = sorted(c[0] for c in cells)
        return xs[-1] - xs[0] + 1 == len(xs)
    return len(_components(cells)) == 1


# ---------------------------------------------------------------------------

def scale_intensity(spec: IntensitySpec, c: float) -> IntensitySpec:
    """Map every ``p`` to ``1 - (1 - p)^c``."""
    if c <= 0:
        raise SpecError("scale must be positive")

    def f(p):
        return -math.expm1(c * math.log1p(-p))

    orbits = tuple(ShapeOrbit(o.cells, f(o.probability)) for o in spec.orbits)
    tail = spec.pair_tail
    if tail is not None:
        if tail.kind == "list":
            tail = PairTail("list", values=tuple(f(x) for x in tail.values), n0=tail.n0)
        elif c != 1.0:
            # 1-(1-p)^c is no longer geometric; keep it exact by listing the
            # head and bounding the rest by the geometric tail times max(c, 1).
            raise SpecError("scaling a geometric tail is only exact for c = 1; "
                            "convert it to a list tail first")
    return IntensitySpec(spec.dimension, orbits, tail)


def geometric_to_list(tail: PairTail, n_max: int) -> PairTail:
    return PairTail("list", values=tuple(tail.p(n) for n in range(tail.n0, n_max + 1)), n0=tail.n0)


def lambda_star(delta: int, one_dimensional: bool = False) -> float:
    """``log(3*Delta - 1)``; zero in one dimension."""
    if delta < 2:
        raise SpecError("max degree must be >= 2")
    if one_dimensional:
        return 0.0
    return math.log(3 * delta - 1)
