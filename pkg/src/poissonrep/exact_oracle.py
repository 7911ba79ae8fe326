"""Exact small-window probabilities for the union process.

Configurations over an ordered site list ``S`` are encoded little-endian:
bit ``i`` of the index is the value at ``S[i]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .intensity import IntensitySpec, SpecError, _as_site, moment_report, sets_meeting

MAX_IE_SITES = 20
MAX_LAW_SITES = 12
MAX_UPSET_SITES = 4


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def exact(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


def _masks(spec, sites, budget):
    sets, probs, neglected = sets_meeting(spec, sites, error_budget=budget)
    index = {s: i for i, s in enumerate(sites)}
    masks = np.zeros(len(sets), dtype=np.int64)
    for j, a in enumerate(sets):
        m = 0
        for c in a:
            i = index.get(c)
            if i is not None:
                m |= 1 << i
        masks[j] = m
    return masks, probs, neglected


def _norm_sites(spec, S):
    sites = []
    for s in S:
        t = _as_site(s, spec.dimension)
        if t not in sites:
            sites.append(t)
    return sites


def prob_all_zero(spec: IntensitySpec, S, budget: float = 1e-12) -> Interval:
    """``P(X̄_S == 0) = prod_{A meets S} (1 - p_A)`` with truncation interval."""
    sites = _norm_sites(spec, S)
    if not sites:
        return Interval(1.0, 1.0)
    _, probs, neglected = _masks(spec, sites, budget)
    val = float(np.exp(np.sum(np.log1p(-probs))))
    return Interval(val * max(0.0, 1.0 - neglected), val)


def prob_all_one(spec: IntensitySpec, S, budget: float = 1e-12) -> Interval:
    """``P(X̄_S == 1)`` by inclusion-exclusion over subsets of ``S``."""
    sites = _norm_sites(spec, S)
    n = len(sites)
    if n == 0:
        return Interval(1.0, 1.0)
    if n > MAX_IE_SITES:
        raise SpecError(f"|S| = {n} exceeds the inclusion-exclusion cap {MAX_IE_SITES}")
    masks, probs, neglected = _masks(spec, sites, budget)
    full = (1 << n) - 1
    g = np.zeros(1 << n)
    np.add.at(g, masks, np.log1p(-probs))
    # zeta transform: G[X] = sum over m subset of X of g[m]
    idx = np.arange(1 << n)
    for b in range(n):
        hit = (idx >> b) & 1 == 1
        g[hit] += g[idx[hit] ^ (1 << b)]
    # P(X̄_T == 0) = exp(G[full] - G[full \ T])
    t = idx
    p0 = np.exp(g[full] - g[full ^ t])
    sign = np.where(np.array([bin(x).count("1") for x in t]) % 2 == 0, 1.0, -1.0)
    val = float(np.clip(np.sum(sign * p0), 0.0, 1.0))
    return Interval(val, min(1.0, val + neglected))


@dataclass
class ExactLaw:
    sites: list
    weights: np.ndarray
    tv_error: float = 0.0

    def __post_init__(self):
        self.sites = [tuple(s) for s in self.sites]
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (1 << len(self.sites),):
            raise SpecError("weights must have length 2^|S|")
        if np.any(self.weights < -1e-15) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise SpecError("weights must be a probability vector")

    @property
    def n(self) -> int:
        return len(self.sites)

    def prob(self, config: Sequence[int]) -> float:
        return float(self.weights[encode(config)])

    def marginal(self, i: int) -> float:
        idx = np.arange(len(self.weights))
        return float(self.weights[(idx >> i) & 1 == 1].sum())

    def all_one(self) -> float:
        return float(self.weights[-1])

    def all_zero(self) -> float:
        return float(self.weights[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config"] + [f"s{i}" for i in range(self.n)] + ["probability"])
        for x in range(len(self.weights)):
            bits = decode(x, self.n)
            w.writerow(["".join(map(str, bits))] + list(bits) + [repr(float(self.weights[x]))])
        return buf.getvalue()

    @classmethod
    def product(cls, sites, probs) -> "ExactLaw":
        probs = list(probs)
        w = np.ones(1)
        for q in probs:
            w = np.concatenate([w * (1 - q), w * q])
        return cls(list(sites), w)


def encode(config) -> int:
    return sum(int(b) << i for i, b in enumerate(config))


def decode(x: int, n: int) -> tuple:
    return tuple((x >> i) & 1 for i in range(n))


def exact_law(spec: IntensitySpec, S, budget: float = 1e-12, max_sites: int = MAX_LAW_SITES) -> ExactLaw:
    """Joint law of ``(X̄_v)_{v in S}`` by OR-convolution over the sets meeting ``S``."""
    sites = _norm_sites(spec, S)
    n = len(sites)
    if n > max_sites:
        raise SpecError(f"|S| = {n} exceeds the exact-law cap {max_sites}")
    masks, probs, neglected = _masks(spec, sites, budget)
    law = kernels.or_convolve(masks, probs, n)
    return ExactLaw(sites, law, tv_error=neglected)


def law_from_samples(sites, bits: np.ndarray) -> ExactLaw:
    """Empirical law of rows of a 0/1 matrix (columns ordered as ``sites``)."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[1]
    codes = (bits << np.arange(n)).sum(axis=1)
    counts = np.bincount(codes, minlength=1 << n).astype(float)
    return ExactLaw(list(sites), counts / counts.sum())


def tv_distance(mu, nu) -> float:
    a = mu.weights if isinstance(mu, ExactLaw) else np.asarray(mu)
    b = nu.weights if isinstance(nu, ExactLaw) else np.asarray(nu)
    return 0.5 * float(np.abs(a - b).sum())


# ---------------------------------------------------------------------------
# stochastic dominance

def up_sets(n: int) -> list:
    """All up-sets of ``{0,1}^n`` as sorted tuples of configuration indices."""
    order = sorted(range(1 << n), key=lambda x: (-bin(x).count("1"), x))
    out = []
    chosen = set()

    def rec(i):
        if i == len(order):
            out.append(tuple(sorted(chosen)))
            return
        x = order[i]
        rec(i + 1)
        if all((x | (1 << b)) in chosen for b in range(n) if not x >> b & 1):
            chosen.add(x)
            rec(i + 1)
            chosen.remove(x)

    rec(0)
    return out


@dataclass
class DominanceResult:
    dominated: bool
    witness: tuple | None = None
    gap: float = 0.0  # max_U mu(U) - nu(U)


def check_dominance(mu: ExactLaw, nu: ExactLaw, tol: float = 1e-12) -> DominanceResult:
    """Is ``mu`` stochastically dominated by ``nu``?  Exhaustive over up-sets."""
    if mu.sites != nu.sites:
        raise SpecError("site lists differ")
    if mu.n > MAX_UPSET_SITES:
        raise SpecError(f"up-set enumeration is capped at {MAX_UPSET_SITES} sites")
    worst, witness = -math.inf, None
    for u in up_sets(mu.n):
        if not u:
            continue
        idx = list(u)
        g = float(mu.weights[idx].sum() - nu.weights[idx].sum())
        if g > worst:
            worst, witness = g, u
    ok = worst <= tol
    return DominanceResult(ok, None if ok else witness, worst)


def dominance_by_flow(mu: ExactLaw, nu: ExactLaw, tol: float = 1e-9) -> bool:
    """Independent check: a monotone coupling exists iff the transport LP carries full mass."""
    from scipy.optimize import linprog

    if mu.sites != nu.sites:
        raise SpecError("site lists differ")
    m = len(mu.weights)
    pairs = [(x, y) for x in range(m) for y in range(m) if x & y == x]
    a_ub = np.zeros((2 * m, len(pairs)))
    for k, (x, y) in enumerate(pairs):
        a_ub[x, k] = 1.0
        a_ub[m + y, k] = 1.0
    b_ub = np.concatenate([mu.weights, nu.weights])
    res = linprog(-np.ones(len(pairs)), A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"coupling LP failed: {res.message}")
    return -res.fun >= 1.0 - tol


def dominance_tri(mu: dict, nu: dict, n: int, tol: float = 1e-12) -> DominanceResult:
    """Dominance on ``{0,1,*}^n`` with ``0 < *`` and ``1 < *`` (0, 1 incomparable).

    Laws are dicts from tuples over ``(0, 1, 2)`` (2 standing for ``*``) to
    probabilities.  Up-sets of the product poset are enumerated exhaustively,
    so keep ``n <= 2``.
    """
    import itertools

    pts = list(itertools.product((0, 1, 2), repeat=n))

    def leq(a, b):
        return all(x == y or y == 2 for x, y in zip(a, b))

    ups = [[q for q in pts if leq(p, q)] for p in pts]
    order = sorted(range(len(pts)), key=lambda i: -sum(1 for x in pts[i] if x == 2))
    worst, witness = -math.inf, None
    chosen: set = set()

    def rec(i):
        nonlocal worst, witness
        if i == len(order):
            if chosen:
                g = sum(mu.get(pts[j], 0.0) - nu.get(pts[j], 0.0) for j in chosen)
                if g > worst:
                    worst, witness = g, tuple(pts[j] for j in sorted(chosen))
            return
        j = order[i]
        rec(i + 1)
        if all(pts.index(q) in chosen for q in ups[j] if q != pts[j]):
            chosen.add(j)
            rec(i + 1)
            chosen.remove(j)

    rec(0)
    ok = worst <= tol
    return DominanceResult(ok, None if ok else witness, worst)


# ---------------------------------------------------------------------------

@dataclass
class StreakReport:
    best_set: tuple
    delta_hat: float
    gamma: float
    lambda_c: float
    values: list = field(default_factory=list)  # (S, P(all one) interval, per-site root)


def streak_density(spec: IntensitySpec, candidate_sets, budget: float = 1e-12) -> StreakReport:
    """Best ``P(X̄_S == 1)^{1/|S|}`` over the candidates (certified lower ends)."""
    cands = [tuple(_norm_sites(spec, S)) for S in candidate_sets]
    if not cands:
        raise SpecError("empty candidate list")
    mr = moment_report(spec)
    best, best_s, values = -1.0, None, []
    for S in cands:
        if not S:
            raise SpecError("candidate sets must be non-empty")
        iv = prob_all_one(spec, S, budget)
        root = iv.lo ** (1.0 / len(S))
        values.append((S, iv, root))
        if root > best + 1e-15:
            best, best_s = root, S
    return StreakReport(best_s, best, mr.gamma, mr.lambda_c, values)
