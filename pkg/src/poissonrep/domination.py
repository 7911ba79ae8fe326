"""Domination bounds and couplings: delta profiles, the sequential monotone
coupling Y <= Z, the two-piece dominating IID density, and the witness search
behind the streak lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .exact_oracle import ExactLaw
from .intensity import (IntensitySpec, SpecError, _as_site, moment_sum, sets_meeting,
                        size_masses)
from .sampler import as_sites


@dataclass
class DeltaProfile:
    sites: list
    epsilon: np.ndarray
    delta: np.ndarray
    order: str | None = None

    @property
    def vacuous(self) -> np.ndarray:
        return self.delta >= 1.0


def _uniform_delta(spec: IntensitySpec, eps: float, sequential: bool) -> float:
    """Translation-invariant delta for uniform eps (lexicographic order if sequential)."""
    if eps == 1.0:
        return 1.0
    tot = 0.0
    for o in spec.orbits:
        if sequential:
            tot += o.probability * sum(eps ** -i for i in range(o.size))
        else:
            tot += o.size * o.probability * eps ** (1 - o.size)
    if spec.pair_tail is not None:
        mass = spec.pair_tail.weighted_tail(1)
        tot += mass * ((1.0 + 1.0 / eps) if sequential else 2.0 / eps)
    if not math.isfinite(tot):
        raise SpecError("divergent sum in delta bound (weight: size)")
    return eps + (1 - eps) * tot


def delta_bound(spec: IntensitySpec, epsilon, order: str | None = None, sites=None,
                eps_outside: float | None = None, budget: float = 1e-12) -> DeltaProfile:
    """delta_v = eps_v + (1 - eps_v) * sum_{A ni v} p_A prod_{u in A, u != v} 1/eps_u.

    With ``order='lex'`` only the ``u`` preceding ``v`` enter the product.  A
    scalar ``epsilon`` without ``sites`` gives the translation-invariant value
    (order over all of Z^d).  With ``sites`` the order is the lexicographic
    order on ``sites`` followed by every other site, and ``eps_outside``
    (default: the scalar eps) is used off the window.
    """
    if order not in (None, "lex"):
        raise SpecError(f"unknown order {order!r}")
    seq = order == "lex"
    if sites is None:
        if not np.isscalar(epsilon):
            raise SpecError("per-site epsilon needs a site list")
        eps = float(epsilon)
        if not (0 < eps <= 1):
            raise SpecError("epsilon must lie in (0, 1]")
        d = _uniform_delta(spec, eps, seq)
        return DeltaProfile([(0,) * spec.dimension], np.array([eps]), np.array([d]), order)
    pts = [tuple(p) for p in as_sites(spec, sites).tolist()]
    if seq:
        pts = sorted(pts)
    eps_arr = np.full(len(pts), float(epsilon)) if np.isscalar(epsilon) else np.asarray(epsilon, dtype=float)
    if eps_arr.shape != (len(pts),) or np.any(eps_arr <= 0) or np.any(eps_arr > 1):
        raise SpecError("epsilon must lie in (0, 1] at every site")
    eo = float(eps_outside) if eps_outside is not None else (float(epsilon) if np.isscalar(epsilon) else None)
    if eo is None:
        raise SpecError("eps_outside required with per-site epsilon")
    pos = {p: i for i, p in enumerate(pts)}
    near = IntensitySpec(spec.dimension, spec.orbits,
                         spec.restrict(max_diam=_finite_cap(spec, pts)).pair_tail)
    delta = np.empty(len(pts))
    for i, v in enumerate(pts):
        if eps_arr[i] == 1.0:
            delta[i] = 1.0
            continue
        tot = 0.0
        # explicit finite orbits and in-window tail partners
        sets, probs, _ = sets_meeting(near, [v])
        for a, p in zip(sets, probs):
            w = p
            for u in a:
                if u == v:
                    continue
                j = pos.get(u)
                if seq and (j is None or j > i):
                    continue
                w /= eps_arr[j] if j is not None else eo
            tot += w
        tot += _far_tail(spec, pts, v, eo, seq)
        delta[i] = eps_arr[i] + (1 - eps_arr[i]) * tot
    return DeltaProfile(pts, eps_arr, delta, order)


def _finite_cap(spec, pts):
    if spec.pair_tail is None or spec.pair_tail.n_max != math.inf:
        return math.inf
    xs = [p[0] for p in pts]
    return max(xs) - min(xs)


def _far_tail(spec, pts, v, eo, seq):
    """Contribution of tail pairs through v whose partner lies off the window (d = 1)."""
    tail = spec.pair_tail
    if tail is None or tail.n_max != math.inf:
        return 0.0
    xs = [p[0] for p in pts]
    span = max(xs) - min(xs)
    far = tail.weighted_tail(span + 1)  # partners beyond the window on each side
    return 2 * far * (1.0 if seq else 1.0 / eo)


# ---------------------------------------------------------------------------

@dataclass
class CouplingSample:
    sites: list
    y: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    max_ratio: float
    exposures: int

    @property
    def monotone(self) -> bool:
        return bool(np.all(self.y <= self.z))


def y_law(spec: IntensitySpec, sites, eps: float, budget: float = 1e-12) -> ExactLaw:
    """Exact law of ``Y = X̄ or xi(eps)`` on ``sites`` (little-endian encoding)."""
    pts = [_as_site(s, spec.dimension) for s in sites]
    sets, probs, neglected = sets_meeting(spec, pts, error_budget=budget)
    index = {s: i for i, s in enumerate(pts)}
    masks = [sum(1 << index[c] for c in a if c in index) for a in sets]
    masks += [1 << i for i in range(len(pts))]
    probs = np.concatenate([probs, np.full(len(pts), eps)])
    return ExactLaw(pts, kernels.or_convolve(np.array(masks, dtype=np.int64), probs, len(pts)),
                    tv_error=neglected)


def sample_monotone_coupling(spec: IntensitySpec, sites, epsilon: float, order: str = "lex",
                             seed: int = 0, n_samples: int = 1, budget: float = 1e-12,
                             max_sites: int = 14) -> CouplingSample:
    """Sequential exposure of Y with one uniform per site: z = 1{U < delta}, y = 1{U < P(Y_v=1 | past)}.

    The conditional is computed exactly from the joint law of Y on ``sites``.
    Raises ``AssertionError`` if a conditional exceeds its delta.
    """
    pts = sorted(_as_site(s, spec.dimension) for s in sites)
    n = len(pts)
    if n > max_sites:
        raise SpecError(f"window of {n} sites exceeds the exact-enumeration cap {max_sites}")
    prof = delta_bound(spec, epsilon, order="lex" if order == "lex" else None, sites=pts, budget=budget)
    law = y_law(spec, pts, epsilon, budget).weights
    # prefix marginals: pref[i][x] = P(Y_0..Y_{i-1} = x)
    pref = [None] * (n + 1)
    pref[n] = law
    for i in range(n - 1, -1, -1):
        pref[i] = pref[i + 1].reshape(2, -1).sum(axis=0)
    u = rng.uniforms(seed, rng.STREAM_COUPLING, np.arange(n_samples), rng.site_keys(pts))
    y = np.zeros((n_samples, n), dtype=bool)
    z = np.zeros((n_samples, n), dtype=bool)
    code = np.zeros(n_samples, dtype=np.int64)
    worst = 0.0
    for i in range(n):
        denom = pref[i][code]
        cond = pref[i + 1][code | (1 << i)] / denom
        worst = max(worst, float(np.max(cond)) / prof.delta[i] if n_samples else 0.0)
        if np.any(cond > prof.delta[i] * (1 + 1e-12)):
            raise AssertionError(f"conditional exceeds delta at {pts[i]}")
        y[:, i] = u[:, i] < cond
        z[:, i] = u[:, i] < prof.delta[i]
        code |= y[:, i].astype(np.int64) << i
    out = CouplingSample(pts, y, z, prof.delta, worst, n * n_samples)
    if not out.monotone:
        raise AssertionError("coupling is not monotone")
    return out


# ---------------------------------------------------------------------------

@dataclass
class DominatingDensity:
    N: int
    q1: float
    q2: float
    density: float
    tail_sum: float


def dominating_iid_density(spec: IntensitySpec, lam: float) -> DominatingDensity:
    """Two-piece IID density dominating X̄ (needs a finite size-exponential moment).

    N is the least integer with ``sum_{A ni 0, diam >= N} p_A e^{lam|A|} <= 1``.
    Sets of smaller diameter are covered by independent Bernoulli(p_A^{1/|A|})
    per (set, site); the rest by the uniform-eps bound with eps = e^{-lam}.
    """
    if lam <= 0:
        raise SpecError("lambda must be positive")
    if moment_sum(spec, lam, "size") == math.inf:
        raise SpecError("no finite exponential moment at this lambda")
    N = 0
    while moment_sum(spec, lam, "size", min_diam=N) > 1.0:
        N += 1
    tail = moment_sum(spec, lam, "size", min_diam=N)
    log_keep = 0.0
    for o in spec.orbits:
        if o.diam < N and o.probability > 0:
            log_keep += o.size * math.log1p(-o.probability ** (1.0 / o.size))
    if spec.pair_tail is not None:
        for m in spec.pair_tail.support(1, N - 1):
            p = spec.pair_tail.p(m)
            log_keep += 2 * math.log1p(-math.sqrt(p))
    q1 = -math.expm1(log_keep) + 0.0
    e = math.exp(-lam)
    q2 = e + e * (1 - e) * tail
    dens = 1 - (1 - q1) * (1 - q2)
    return DominatingDensity(N, q1, q2, dens, tail)


# ---------------------------------------------------------------------------

@dataclass
class WitnessReport:
    n: int
    beta: float
    N: int
    B: list
    D: list
    bound: float
    bound_exact_z: float
    pz: float
    p_z_exact: float
    cover_prob: float
    expected_uncovered: float
    B_cap: float
    D_cap: float
    success: bool
    p_n: float
    trials: list = field(default_factory=list)

    @property
    def S(self) -> list:
        dset = set(self.D)
        return [v for v in self.grid if v not in dset]

    grid: list = field(default_factory=list)


def _yb_kernel(spec: IntensitySpec, n: int, N: int):
    """``P(b + c in Y_b)`` as a dict offset -> probability (coordinatewise-min normalisation)."""
    weights: dict = {}
    total = 0.0
    for o in spec.orbits:
        if o.size != n or o.probability == 0:
            continue
        arr = np.array(o.cells)
        cm = arr.min(axis=0)
        total += o.probability
        for c in arr - cm:
            key = tuple(int(x) for x in c)
            weights[key] = weights.get(key, 0.0) + o.probability
    if n == 2 and spec.pair_tail is not None:
        tail = spec.pair_tail
        t = tail.weighted_tail(1)
        total += t
        weights[(0,)] = weights.get((0,), 0.0) + t
        for m in tail.support(1, N):
            weights[(m,)] = weights.get((m,), 0.0) + tail.p(m)
    return {k: w / total for k, w in weights.items()}, total


def witness_search(spec: IntensitySpec, n: int, beta: float, N: int, seed: int = 0,
                   n_trials: int = 16) -> WitnessReport:
    """Random B at density 2*beta/n, exact exclusion probabilities, greedy D.

    The certified bound is ``max(0, 1 - sum_{v not in D} P(v not in Y_B)) * P(Z_0 != 0)^|B|``
    (union bound for the first factor); it is reported with the Paley-Zygmund
    value ``p_n / (n + p_n)`` and with the exact ``P(Z_0 != 0)``.
    """
    if beta < 10:
        raise SpecError("beta must be >= 10")
    d = spec.dimension
    sub = spec.restrict(sizes=[n])
    p_n = size_masses(sub).get(n, 0.0)
    if p_n <= 0:
        raise SpecError(f"no sets of size {n}")
    kern, ez = _yb_kernel(sub, n, N)
    pz = p_n / (n + p_n)
    # exact P(Z_0 nonempty): sets with coordinatewise min 0 and size n
    log_empty = sum(math.log1p(-o.probability) for o in sub.orbits if o.size == n)
    if n == 2 and sub.pair_tail is not None:
        # sum_m log(1-p_m) over the tail; bounded by a truncated sum plus a log bound
        tail = sub.pair_tail
        top = tail.n_max if tail.n_max != math.inf else 2000
        for m in tail.support(1, int(top)):
            log_empty += math.log1p(-tail.p(m))
    p_z_exact = -math.expm1(log_empty)
    shape = (N,) * d
    grid = [tuple(int(x) for x in idx) for idx in np.ndindex(*shape)]
    gi = {v: i for i, v in enumerate(grid)}
    rate = min(1.0, 2 * beta / n)
    b_cap = 8 * beta * N ** d / n
    d_cap = 8 * math.exp(-beta) * N ** d
    u = rng.uniforms(seed, rng.STREAM_WITNESS, np.arange(n_trials), rng.site_keys(grid))
    best = None
    trials = []
    for t in range(n_trials):
        B = [grid[i] for i in np.nonzero(u[t] < rate)[0]]
        log_out = np.zeros(len(grid))
        for b in B:
            for off, q in kern.items():
                v = tuple(x + y for x, y in zip(b, off))
                j = gi.get(v)
                if j is not None:
                    log_out[j] += math.log1p(-min(q, 1.0)) if q < 1.0 else -math.inf
        p_out = np.exp(log_out)
        exp_unc = float(p_out.sum())
        k = int(math.floor(d_cap + 1e-12))
        order = sorted(range(len(grid)), key=lambda j: (-p_out[j], j))
        D = sorted(grid[j] for j in order[:k] if p_out[j] > 0)
        dset = set(D)
        miss = float(sum(p_out[j] for j in range(len(grid)) if grid[j] not in dset))
        cover = max(0.0, 1.0 - miss)
        bound = cover * pz ** len(B)
        bound_x = cover * p_z_exact ** len(B)
        ok = len(B) <= b_cap and exp_unc <= 4 * N ** d * math.exp(-beta)
        trials.append((len(B), exp_unc, bound, ok))
        cand = (ok, bound_x, -t)
        if best is None or cand > best[0]:
            best = (cand, B, D, bound, bound_x, cover, exp_unc, ok)
    _, B, D, bound, bound_x, cover, exp_unc, ok = best
    return WitnessReport(n, beta, N, B, D, bound, bound_x, pz, p_z_exact, cover, exp_unc,
                         b_cap, d_cap, bool(ok), p_n, trials, grid)
