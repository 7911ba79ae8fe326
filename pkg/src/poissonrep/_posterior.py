"""Exact posterior over independent sets given "covered" evidence.

Sets ``a`` carry prior inclusion probabilities ``p[a]`` and a set of evidence
sites they cover.  Each evidence site contributes a factor 1 when some
included set covers it and ``miss`` otherwise.  Partition functions are
computed by recursive conditioning: split into connected components, solve
small components by enumeration and branch on the most connected set
otherwise, memoising every subproblem.  Everything stays in the positive
domain, so there is no cancellation.
"""

from __future__ import annotations

import numpy as np

from . import rng

BRUTE = 10
NODE_CAP = 200_000
K_SET, K_COMP, K_BRANCH = 2, 3, 4


class PosteriorTooLarge(RuntimeError):
    pass


class CoverPosterior:
    def __init__(self, probs, covers, miss: float):
        self.p = [float(x) for x in probs]
        self.cov = [frozenset(c) for c in covers]
        self.miss = float(miss)
        self._memo: dict = {}

    # -- helpers -----------------------------------------------------------
    def _split(self, sets, ones):
        """Evidence sites hit by ``sets``, then connected components."""
        hit: dict = {}
        for a in sets:
            for u in self.cov[a] & ones:
                hit.setdefault(u, []).append(a)
        dead_sites = len(ones) - len(hit)
        parent = {a: a for a in sets if self.cov[a] & hit.keys()}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for owners in hit.values():
            r0 = find(owners[0])
            for b in owners[1:]:
                rb = find(b)
                if rb != r0:
                    parent[rb] = r0
        groups: dict = {}
        for a in parent:
            groups.setdefault(find(a), []).append(a)
        comps = []
        for members in groups.values():
            cs = frozenset(members)
            co = frozenset(u for a in members for u in self.cov[a] & ones)
            comps.append((cs, co))
        free = [a for a in sets if a not in parent]
        return dead_sites, comps, free

    def _brute(self, cs, co):
        members = sorted(cs)
        m = len(members)
        idx = np.arange(1 << m)
        bits = ((idx[:, None] >> np.arange(m)) & 1).astype(bool)
        p = np.array([self.p[a] for a in members])
        with np.errstate(divide="ignore"):
            logw = bits @ np.log(p) + (~bits) @ np.log1p(-p)
        w = np.exp(logw)
        sites = sorted(co)
        inc = np.array([[u in self.cov[a] for u in sites] for a in members], dtype=bool)
        covered = (bits.astype(np.int32) @ inc.astype(np.int32)) > 0
        w = w * self.miss ** (len(sites) - covered.sum(axis=1))
        return members, bits, w

    # -- partition function --------------------------------------------------
    def z(self, sets, ones) -> float:
        sets, ones = frozenset(sets), frozenset(ones)
        if not ones:
            return 1.0
        dead, comps, _ = self._split(sets, ones)
        out = self.miss ** dead
        for cs, co in comps:
            out *= self._zc(cs, co)
            if out == 0.0:
                break
        return out

    def _zc(self, cs, co) -> float:
        key = (cs, co)
        val = self._memo.get(key)
        if val is not None:
            return val
        if len(self._memo) > NODE_CAP:
            raise PosteriorTooLarge("posterior recursion exceeded its node budget")
        if len(cs) <= BRUTE:
            val = float(self._brute(cs, co)[2].sum())
        else:
            a = max(cs, key=lambda b: (len(self.cov[b] & co), -b))
            rest = cs - {a}
            p = self.p[a]
            val = p * self.z(rest, co - self.cov[a]) + (1.0 - p) * self.z(rest, co)
        self._memo[key] = val
        return val

    def prob_none(self, S, sets, ones) -> float:
        """``P(no set of S included | evidence)`` for ``S`` a subset of ``sets``."""
        S = frozenset(S)
        base = self.z(sets, ones)
        pr = 1.0
        for a in S:
            pr *= 1.0 - self.p[a]
        return pr * self.z(frozenset(sets) - S, ones) / base

    # -- sampling ------------------------------------------------------------
    def sample(self, sets, ones, chooser, set_key) -> set:
        """Draw the included sets; ``set_key(a)`` keys the choice about set ``a``."""
        out: set = set()
        self._sample(frozenset(sets), frozenset(ones), chooser, set_key, out)
        return out

    def _sample(self, sets, ones, chooser, set_key, out):
        _, comps, free = self._split(sets, ones) if ones else (0, [], sorted(sets))
        for a in sorted(free):
            if chooser.bit((K_SET,) + tuple(set_key(a)), self.p[a]):
                out.add(a)
        for cs, co in sorted(comps, key=lambda t: min(t[0])):
            if len(cs) <= BRUTE:
                members, bits, w = self._brute(cs, co)
                j = chooser.cat((K_COMP,) + tuple(set_key(members[0])), w)
                out.update(a for i, a in enumerate(members) if bits[j, i])
                continue
            a = max(cs, key=lambda b: (len(self.cov[b] & co), -b))
            rest = cs - {a}
            p = self.p[a]
            w1 = p * self.z(rest, co - self.cov[a])
            w0 = (1.0 - p) * self.z(rest, co)
            if chooser.bit((K_BRANCH,) + tuple(set_key(a)), w1 / (w1 + w0)):
                out.add(a)
                self._sample(rest, co - self.cov[a], chooser, set_key, out)
            else:
                self._sample(rest, co, chooser, set_key, out)


# ---------------------------------------------------------------------------
# choosers: hashed uniforms for sampling, replay for exact enumeration


class HashChooser:
    """Random choices as hashes of ``(seed, stream, replica, base, key)``."""

    def __init__(self, seed, stream, replica, base):
        self.seed, self.stream, self.replica, self.base = seed, stream, replica, base

    def uniform(self, key) -> float:
        return rng.uniform_scalar(self.seed, self.stream, self.replica, rng.key_of(self.base, *key))

    def bit(self, key, p) -> bool:
        return self.uniform(key) < p

    def cat(self, key, weights) -> int:
        cw = np.cumsum(weights)
        return int(min(np.searchsorted(cw, self.uniform(key) * cw[-1], side="right"), len(cw) - 1))


class _Branch(Exception):
    def __init__(self, probs):
        self.probs = probs


class _Replay:
    def __init__(self, prefix):
        self.prefix, self.i, self.prob = prefix, 0, 1.0

    def _take(self, probs):
        if self.i < len(self.prefix):
            j = self.prefix[self.i]
            self.i += 1
            self.prob *= probs[j]
            return j
        raise _Branch(probs)

    def bit(self, key, p) -> bool:
        return self._take([1.0 - p, p]) == 1

    def cat(self, key, weights) -> int:
        w = np.asarray(weights, dtype=float)
        return self._take(list(w / w.sum()))


def enumerate_outcomes(fn) -> dict:
    """Exact law of ``fn(chooser)`` by exhausting every branch of its choices."""
    out: dict = {}
    stack = [()]
    while stack:
        pre = stack.pop()
        ch = _Replay(pre)
        try:
            res = fn(ch)
        except _Branch as b:
            for j, pj in enumerate(b.probs):
                if pj > 0:
                    stack.append(pre + (j,))
            continue
        out[res] = out.get(res, 0.0) + ch.prob
    return out
