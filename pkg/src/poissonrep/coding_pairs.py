"""Finitary coding for one-dimensional pair intensities.

Pairs ``{i, i+n}`` are grouped into levels ``I_k = [N_k, N_{k+1})``.  Within a
level the block at site ``i`` (pairs with left end ``i``) is produced from its
gates ``W_{i,0}, (W_{i+m,m})_{m in I}`` and private uniforms through the
conditional law of a monotone coupling, so a site whose gates are all zero
emits 0 having looked at nothing but its own gates.

The coupling is built by sequential exposure: first ``Y_0 = max(X_0, xi)``
with ``xi ~ Bernoulli(k^-2)``, then ``X_n`` for ``n in I`` in increasing order.
Each exposure ``j`` has conditional probability ``c_j`` and gate parameter
``q_j >= c_j``; given the gates, a step with ``w_j = 1`` fires with
probability ``c_j / q_j`` and a step with ``w_j = 0`` is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .intensity import IntensitySpec, SpecError, pair_tail_mass, tail_threshold
from .sampler import draw_included, enumerate_family, incidence


@dataclass
class Level:
    k: int
    N_k: int
    N_next: int
    I: tuple
    p: np.ndarray
    eps: float
    q0: float
    q: np.ndarray

    @property
    def empty(self) -> bool:
        return len(self.I) == 0 or not np.any(self.p > 0)

    @property
    def gate_budget(self) -> float:
        """``P(some gate at a site is 1) = 1 - (1-q0) prod (1-q_n)``."""
        if self.empty:
            return 0.0
        return 1.0 - (1.0 - self.q0) * float(np.prod(1.0 - self.q))


@dataclass
class LevelPlan:
    levels: list
    level0: tuple
    singleton: float
    residual_start: int
    residual_mass: float

    @property
    def thresholds(self):
        return [lv.N_k for lv in self.levels]


def _check_pair_spec(spec: IntensitySpec):
    if not spec.is_pair_spec():
        raise SpecError("pairs coding needs a one-dimensional spec of pairs (and singletons)")


def _pair_lengths(spec: IntensitySpec, lo: int, hi: int) -> list:
    return [n for n in range(lo, hi) if spec.pair_prob(n) > 0]


def make_level(spec: IntensitySpec, k: int) -> Level:
    Nk = tail_threshold(spec, k, "pairs")
    Nn = tail_threshold(spec, k + 1, "pairs")
    I = tuple(range(Nk, Nn))
    p = np.array([spec.pair_prob(n) for n in I], dtype=float)
    eps = min(1.0, float(k) ** -2)
    q0 = min(1.0, 2.0 * float(k) ** -2)
    q = np.minimum(1.0, float(k) ** 2 * p)
    return Level(k, Nk, Nn, I, p, eps, q0, q)


def build_levels(spec: IntensitySpec, k_max: int) -> LevelPlan:
    _check_pair_spec(spec)
    levels = [make_level(spec, k) for k in range(1, k_max + 1)]
    N1 = tail_threshold(spec, 1, "pairs")
    res = tail_threshold(spec, k_max + 1, "pairs")
    return LevelPlan(levels, tuple(_pair_lengths(spec, 1, N1)), spec.singleton_prob, res,
                     pair_tail_mass(spec, res))


# ---------------------------------------------------------------------------
# the per-block coupling

def _steps(level: Level):
    """Yield per-exposure functions ``c(state)`` in order; state = (y0, any_one)."""
    I, p, eps = level.I, level.p, level.eps
    stay = np.concatenate([np.cumprod((1.0 - p)[::-1])[::-1], [1.0]])  # prod_{m >= idx}
    c0 = 1.0 - (1.0 - eps) * stay[0]
    yield 0, level.q0, (lambda y0, anyone: c0)
    for idx in range(len(I)):
        pn = p[idx]
        first = pn / (1.0 - (1.0 - eps) * stay[idx]) if pn > 0 else 0.0

        def c(y0, anyone, pn=pn, first=first):
            if not y0:
                return 0.0
            return pn if anyone else first

        yield idx + 1, level.q[idx], c


def run_block(level: Level, w, choose):
    """Sequential block evaluation.

    ``w`` is the gate vector ``(w_0, w_n for n in I)``; ``choose(j, prob)``
    returns a bit that is 1 with probability ``prob``.  Returns
    ``(y0, x)`` with ``x`` the pair indicators, plus the list of exposures
    whose gate was read.
    """
    y0 = False
    anyone = False
    x = [0] * len(level.I)
    read = []
    for j, qj, c in _steps(level):
        if j > 0 and not y0:
            break
        read.append(j)
        cj = c(y0, anyone)
        if cj > qj * (1 + 1e-12) + 1e-15:
            raise AssertionError(f"coupling infeasible at level {level.k}, step {j}")
        bit = 0
        if w[j] and cj > 0:
            bit = choose(j, min(1.0, cj / qj))
        if j == 0:
            y0 = bool(bit)
        else:
            x[j - 1] = bit
            anyone = anyone or bool(bit)
    return int(y0), tuple(x), read


def phi(level: Level, w, uniforms) -> tuple:
    """``phi_w(u)``: pair indicators of one block from its uniforms ``u_j``."""
    return run_block(level, w, lambda j, pr: int(uniforms[j] < pr))[1]


def phi_law(level: Level, w) -> dict:
    """Exact law ``pi_w`` of the block output, by enumerating the exposure tree."""
    out: dict = {}

    def rec(prefix, prob):
        it = iter(prefix)
        pending = []

        def choose(j, pr):
            b = next(it, None)
            if b is None:
                pending.append(pr)
                raise _Branch()
            return b

        try:
            _, x, _ = run_block(level, w, choose)
        except _Branch:
            pr = pending[0]
            if pr > 0:
                rec(prefix + (1,), prob * pr)
            if pr < 1:
                rec(prefix + (0,), prob * (1 - pr))
            return
        out[x] = out.get(x, 0.0) + prob

    rec((), 1.0)
    return out


class _Branch(Exception):
    pass


def coupling_joint_bruteforce(level: Level) -> dict:
    """Joint law of (gates w, block output x) computed from first principles.

    Each exposure ``j`` uses one uniform ``U_j``: the exposed value is
    ``1{U_j < c_j}`` and the gate is ``1{U_j < q_j}``, so the pair
    (value, gate) takes (1,1), (0,1), (0,0) with probabilities
    ``c_j, q_j - c_j, 1 - q_j``.  Enumerates every (y0, x, w).
    """
    import itertools

    L = len(level.I)
    p, eps = level.p, level.eps
    qs = [level.q0] + list(level.q)
    out: dict = {}
    for bits in itertools.product((0, 1), repeat=L + 1):
        y0, xs = bits[0], bits[1:]
        if not y0 and any(xs):
            continue
        # conditional probabilities along the exposure order, from the product law
        cs = []
        stay0 = float(np.prod(1 - p))
        cs.append(1 - (1 - eps) * stay0)
        seen_one = False
        for idx in range(L):
            if not y0:
                cs.append(0.0)
                continue
            if seen_one:
                cs.append(p[idx])
            else:
                rest = float(np.prod(1 - p[idx:]))
                cs.append(p[idx] / (1 - (1 - eps) * rest) if p[idx] > 0 else 0.0)
            seen_one = seen_one or bool(xs[idx])
        for ws in itertools.product((0, 1), repeat=L + 1):
            pr = 1.0
            vals = (y0,) + tuple(xs)
            for j in range(L + 1):
                v, g, c, q = vals[j], ws[j], cs[j], qs[j]
                if v and g:
                    pr *= c
                elif v and not g:
                    pr = 0.0
                elif g:
                    pr *= q - c
                else:
                    pr *= 1 - q
                if pr == 0.0:
                    break
            if pr > 0:
                key = (tuple(ws), tuple(xs))
                out[key] = out.get(key, 0.0) + pr
    return out


# ---------------------------------------------------------------------------
# batch evaluation over replicas and a window

def _key(*parts) -> int:
    h = rng.mix64(0x9A175)
    for x in parts:
        h = rng.mix64(h ^ (int(x) & ((1 << 64) - 1)))
    return h


def _gates(seed, reps, sites, k, j, q):
    if q >= 1.0:
        return np.ones((len(reps), len(sites)), dtype=bool)
    if q <= 0.0:
        return np.zeros((len(reps), len(sites)), dtype=bool)
    u = rng.uniforms(seed, rng.STREAM_GATES, reps, rng.offset_keys(_key(1, k, j), sites))
    return u < q


def _phi_u(seed, reps, sites, k, j):
    return rng.uniforms(seed, rng.STREAM_PHI, reps, rng.offset_keys(_key(2, k, j), sites))


@dataclass
class LevelResult:
    k: int
    sites: np.ndarray
    bits: np.ndarray
    flags: np.ndarray
    radius: np.ndarray
    raw: np.ndarray  # coupled output before gating (for soundness checks)


def code_level(spec: IntensitySpec, k: int, sites, seed: int, replicas=(0,), level: Level | None = None) -> LevelResult:
    """Level-k output ``max_{n in I_k} (X^{+n}_i, X^{-n}_i)`` on a contiguous 1D window."""
    _check_pair_spec(spec)
    lv = level if level is not None else make_level(spec, k)
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    sites = np.asarray(sorted(int(s[0]) if isinstance(s, tuple) else int(s) for s in sites), dtype=np.int64)
    a, b = int(sites.min()), int(sites.max())
    R, ns = len(reps), b - a + 1
    zeros = np.zeros((R, ns), dtype=bool)
    if lv.empty:
        return LevelResult(k, np.arange(a, b + 1), zeros, zeros.copy(), np.zeros((R, ns), dtype=np.int64), zeros.copy())
    I = lv.I
    mx = I[-1]
    blocks = np.arange(a - mx, b + 1)  # left ends whose pairs can reach the window
    J = len(blocks)
    # gates: W_{s,0} for s in blocks, W_{s,n} for s in [a - mx + min I, b + mx]
    g0 = _gates(seed, reps, blocks, k, 0, lv.q0)
    span = np.arange(a - mx, b + mx + 1)
    gn = [_gates(seed, reps, span, k, idx + 1, lv.q[idx]) for idx in range(len(I))]
    # per-block gate vectors: w_n(block j) = W_{j+n, n}
    wn = [gn[idx][:, (blocks + n) - span[0]] for idx, n in enumerate(I)]
    # sequential coupling, vectorised
    stay = np.concatenate([np.cumprod((1.0 - lv.p)[::-1])[::-1], [1.0]])
    c0 = 1.0 - (1.0 - lv.eps) * stay[0]
    if c0 > lv.q0 * (1 + 1e-12) + 1e-15:
        raise AssertionError("coupling infeasible at step 0")
    r0 = c0 / lv.q0 if lv.q0 > 0 else 0.0
    y0 = g0 & (_phi_u(seed, reps, blocks, k, 0) < r0)
    anyone = np.zeros((R, J), dtype=bool)
    xplus = []
    for idx, n in enumerate(I):
        pn = lv.p[idx]
        first = pn / (1.0 - (1.0 - lv.eps) * stay[idx]) if pn > 0 else 0.0
        q = lv.q[idx]
        if max(first, pn) > q * (1 + 1e-12) + 1e-15:
            raise AssertionError(f"coupling infeasible at step {idx + 1}")
        ratio = np.where(anyone, pn / q if q > 0 else 0.0, first / q if q > 0 else 0.0)
        x = y0 & wn[idx] & (_phi_u(seed, reps, blocks, k, idx + 1) < ratio)
        anyone |= x
        xplus.append(x)
    # combine: site i gets X^{+n}_i (block i) and X^{+n}_{i-n} (block i - n)
    raw = np.zeros((R, ns), dtype=bool)
    col = np.arange(a, b + 1)
    for idx, n in enumerate(I):
        raw |= xplus[idx][:, col - blocks[0]]
        raw |= xplus[idx][:, col - n - blocks[0]]
    own0 = g0[:, col - blocks[0]]
    flags = own0.copy()
    for idx, n in enumerate(I):
        flags |= gn[idx][:, col - span[0]]
    if np.any(raw & ~flags):
        raise AssertionError("gate soundness violated")
    bits = raw & flags
    # coding radius: largest |offset| of any variable read by lazy evaluation
    radius = np.zeros((R, ns), dtype=np.int64)
    y0_own = y0[:, col - blocks[0]]
    radius = np.where(own0 & y0_own, mx, radius)
    for idx, n in enumerate(I):
        radius = np.where(gn[idx][:, col - span[0]], np.maximum(radius, n), radius)
    return LevelResult(k, col, bits, flags, radius, raw)


def _direct(spec, sites, seed, reps, min_n, max_n, budget, with_singletons):
    """Directly sampled pairs with lengths in [min_n, max_n] (and singletons)."""
    sub = spec.restrict(min_diam=min_n, max_diam=max_n, sizes=[2])
    if with_singletons and spec.singleton_prob > 0:
        sub = IntensitySpec(1, sub.orbits + tuple(o for o in spec.orbits if o.size == 1), sub.pair_tail)
    pts = np.asarray(sites, dtype=np.int64).reshape(-1, 1)
    fam = enumerate_family(sub, pts, budget, mode="meet")
    if len(fam) == 0:
        return np.zeros((len(reps), len(pts)), dtype=bool), fam.neglected
    x = rng.uniforms(seed, rng.STREAM_DIRECT, reps, fam.keys) < fam.probs[None, :]
    inc = incidence(fam, pts).toarray().astype(np.int32)
    return (x.astype(np.int32) @ inc) > 0, fam.neglected


@dataclass
class CodingReport:
    sites: np.ndarray
    radius: np.ndarray
    level_flags: dict
    level_budget: dict
    correction: np.ndarray
    residual_start: int
    residual_mass: float
    neglected: float
    borel_cantelli: float
    level0_radius: int

    def gate_rates(self) -> dict:
        return {k: float(f.mean()) for k, f in self.level_flags.items()}

    def radius_survival(self, rmax=None):
        r = self.radius.reshape(-1)
        top = int(r.max()) if rmax is None else rmax
        return [(t, float((r > t).mean())) for t in range(top + 1)]


def code_pairs(spec: IntensitySpec, sites, seed: int, k_max: int, replicas=(0,),
               budget: float = 1e-9):
    """Union over level 0 (direct block factor), coded levels 1..k_max and a direct correction layer."""
    plan = build_levels(spec, k_max)
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    pts = np.asarray(sorted(int(s[0]) if isinstance(s, tuple) else int(s) for s in sites), dtype=np.int64)
    a, b = int(pts.min()), int(pts.max())
    col = np.arange(a, b + 1)
    N1 = tail_threshold(spec, 1, "pairs")
    lv0, _ = _direct(spec, col, seed, reps, 1, N1 - 1, 0.0, True)
    out = lv0.copy()
    r0 = max(plan.level0, default=0)
    radius = np.full(out.shape, r0, dtype=np.int64)
    flags, budgets = {}, {}
    for lv in plan.levels:
        res = code_level(spec, lv.k, col, seed, reps, level=lv)
        out |= res.bits
        radius = np.maximum(radius, res.radius)
        flags[lv.k] = res.flags
        budgets[lv.k] = lv.gate_budget
    corr, neglected = _direct(spec, col, seed ^ 0x5EED, reps, plan.residual_start, math.inf, budget, False)
    out |= corr
    sel = np.searchsorted(col, pts)
    report = CodingReport(
        sites=pts, radius=radius[:, sel], level_flags={k: f[:, sel] for k, f in flags.items()},
        level_budget=budgets, correction=corr[:, sel], residual_start=plan.residual_start,
        residual_mass=plan.residual_mass, neglected=neglected,
        borel_cantelli=sum(3.0 / k ** 2 for k in range(1, k_max + 1)), level0_radius=r0,
    )
    return out[:, sel], report
