"""Direct Monte Carlo sampling of the union process and its derived fields."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import rng
from .exact_oracle import ExactLaw, law_from_samples, tv_distance
from .intensity import IntensitySpec, SpecError, _as_site, connected_hull, diameter


@dataclass(frozen=True)
class Window:
    """Product of inclusive integer intervals ``box = ((lo, hi), ...)``."""

    box: tuple

    def __post_init__(self):
        box = tuple((int(a), int(b)) for a, b in self.box)
        if not box or any(b < a for a, b in box):
            raise SpecError("window must be non-empty")
        object.__setattr__(self, "box", box)

    @classmethod
    def interval(cls, lo, hi):
        return cls(((lo, hi),))

    @property
    def dim(self):
        return len(self.box)

    @property
    def shape(self):
        return tuple(b - a + 1 for a, b in self.box)

    def sites(self) -> np.ndarray:
        axes = [np.arange(a, b + 1) for a, b in self.box]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=1)

    def contains(self, v) -> bool:
        return all(a <= x <= b for x, (a, b) in zip(v, self.box))


def as_sites(spec_or_dim, S) -> np.ndarray:
    d = spec_or_dim.dimension if isinstance(spec_or_dim, IntensitySpec) else int(spec_or_dim)
    if isinstance(S, Window):
        return S.sites()
    pts = [_as_site(s, d) for s in S]
    return np.array(pts, dtype=np.int64).reshape(len(pts), d)


# ---------------------------------------------------------------------------
# the family of concrete sets relevant to a region

@dataclass
class SetFamily:
    dim: int
    shapes: list
    shape_ids: np.ndarray
    offsets: np.ndarray
    probs: np.ndarray
    keys: np.ndarray
    neglected: float = 0.0
    max_diam: int = 0

    def __len__(self):
        return len(self.probs)

    def cells(self, k) -> tuple:
        off = self.offsets[k]
        return tuple(tuple(int(a + b) for a, b in zip(c, off)) for c in self.shapes[self.shape_ids[k]])

    def diams(self) -> np.ndarray:
        sd = np.array([diameter(s) for s in self.shapes], dtype=np.int64)
        return sd[self.shape_ids] if len(self.shape_ids) else np.zeros(0, dtype=np.int64)

    def sizes(self) -> np.ndarray:
        ss = np.array([len(s) for s in self.shapes], dtype=np.int64)
        return ss[self.shape_ids] if len(self.shape_ids) else np.zeros(0, dtype=np.int64)

    def select(self, mask) -> "SetFamily":
        mask = np.asarray(mask, dtype=bool)
        return SetFamily(self.dim, self.shapes, self.shape_ids[mask], self.offsets[mask],
                         self.probs[mask], self.keys[mask], self.neglected, self.max_diam)


def _unique_rows(a):
    if len(a) == 0:
        return a
    return np.unique(a, axis=0)


def _tail_cut(tail, budget, per_n_count):
    """Smallest M with ``sum_{n > M} p_n * per_n_count(n) <= budget`` (geometric tails)."""
    if tail.n_max != math.inf:
        return int(tail.n_max), 0.0
    if budget <= 0:
        raise SpecError("infinite pair tail needs a positive error budget")
    m = tail.n0 - 1

    def rest(m):
        # bound sum_{n>m} c r^n (a + b n) in closed form
        a, b = per_n_count
        lo = max(m + 1, tail.n0)
        r = tail.r
        s0 = tail.c * r ** lo / (1 - r)
        s1 = tail.c * r ** lo * (lo * (1 - r) + r) / (1 - r) ** 2
        return a * s0 + b * s1

    while rest(m) > budget:
        m += 1
    return m, rest(m)


def enumerate_family(spec: IntensitySpec, sites, budget: float = 1e-9, mode: str = "meet",
                     min_diam: int = 0, max_diam: float = math.inf) -> SetFamily:
    """Concrete sets whose cells (``meet``) or hull (``hull``) can touch ``sites``.

    ``hull`` mode enumerates every translate whose bounding box meets the
    bounding box of ``sites``, a superset of the sets whose hull meets them.
    """
    pts = as_sites(spec, sites)
    d = spec.dimension
    shapes, ids, offs, probs, keys = [], [], [], [], []
    lo = pts.min(axis=0) if len(pts) else np.zeros(d, dtype=np.int64)
    hi = pts.max(axis=0) if len(pts) else np.zeros(d, dtype=np.int64)
    max_d = 0

    def add(cells, p, offsets):
        nonlocal max_d
        if len(offsets) == 0 or p == 0.0:
            return
        sid = len(shapes)
        shapes.append(cells)
        h = rng.shape_hash(cells)
        ids.append(np.full(len(offsets), sid, dtype=np.int64))
        offs.append(np.asarray(offsets, dtype=np.int64).reshape(-1, d))
        probs.append(np.full(len(offsets), p))
        keys.append(rng.offset_keys(h, offsets))
        max_d = max(max_d, diameter(cells))

    def offsets_for(cells):
        c = np.asarray(cells, dtype=np.int64)
        if mode == "meet":
            return _unique_rows(np.concatenate([pts - ci for ci in c], axis=0))
        cmin, cmax = c.min(axis=0), c.max(axis=0)
        axes = [np.arange(lo[j] - cmax[j], hi[j] - cmin[j] + 1) for j in range(d)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grid], axis=1)

    if len(pts):
        for o in spec.orbits:
            if min_diam <= o.diam <= max_diam:
                add(o.cells, o.probability, offsets_for(o.cells))
    neglected = 0.0
    tail = spec.pair_tail
    if tail is not None and len(pts):
        npts = len(pts)
        if mode == "meet":
            top, neglected = _tail_cut(tail, budget, (2 * npts, 0))
        else:
            top, neglected = _tail_cut(tail, budget, (int(hi[0] - lo[0]) + 1, 1))
        if max_diam < top:
            top, neglected = int(max_diam), 0.0
        for n in tail.support(max(1, min_diam), top):
            add(((0,), (n,)), tail.p(n), offsets_for(((0,), (n,))))
    if shapes:
        fam = SetFamily(d, shapes, np.concatenate(ids), np.concatenate(offs),
                        np.concatenate(probs), np.concatenate(keys), neglected, max_d)
    else:
        fam = SetFamily(d, [], np.zeros(0, dtype=np.int64), np.zeros((0, d), dtype=np.int64),
                        np.zeros(0), np.zeros(0, dtype=np.uint64), neglected, 0)
    return fam


def hull_shape(cells, d):
    return connected_hull(cells, d)[0]


def incidence(family: SetFamily, sites, use_hull: bool = False) -> sparse.csr_matrix:
    """Sparse ``K x n`` matrix: set ``k`` covers site ``j`` (cells or hull cells)."""
    pts = as_sites(family.dim, sites)
    index = {tuple(int(x) for x in p): j for j, p in enumerate(pts)}
    rows, cols = [], []
    for sid, shape in enumerate(family.shapes):
        sel = np.nonzero(family.shape_ids == sid)[0]
        if len(sel) == 0:
            continue
        cells = hull_shape(shape, family.dim) if use_hull else shape
        for c in cells:
            tgt = family.offsets[sel] + np.asarray(c)
            for k, t in zip(sel, map(tuple, tgt.tolist())):
                j = index.get(t)
                if j is not None:
                    rows.append(k)
                    cols.append(j)
    data = np.ones(len(rows), dtype=np.int32)
    return sparse.csr_matrix((data, (rows, cols)), shape=(len(family), len(pts)))


def draw_included(family: SetFamily, seed: int, replicas) -> np.ndarray:
    """Inclusion indicators ``X_A`` (replicas x sets)."""
    u = rng.uniforms(seed, rng.STREAM_SETS, replicas, family.keys)
    return u < family.probs[None, :]


def _chunks(replicas, width):
    replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    step = max(1, int(4_000_000 // max(1, width)))
    for i in range(0, len(replicas), step):
        yield replicas[i:i + step]


def xi_field(sites, seed, replicas, eps, d):
    pts = as_sites(d, sites)
    if eps <= 0:
        return np.zeros((len(np.atleast_1d(replicas)), len(pts)), dtype=bool)
    u = rng.uniforms(seed, rng.STREAM_XI, replicas, rng.site_keys(pts))
    return u < eps


def sample_bits(spec: IntensitySpec, sites, seed: int, replicas, budget: float = 1e-9,
                field: str = "barX", N: int = 0, eps: float = 0.0):
    """Batched fields on an arbitrary site list; rows are replica ids.

    ``field`` is one of ``barX``, ``tildeX`` (hulls of sets with diam >= N),
    or ``Y`` (tildeX or an independent Bernoulli(eps) field).  Returns the
    boolean array and the truncation TV bound.
    """
    pts = as_sites(spec, sites)
    replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    if field == "barX":
        fam = enumerate_family(spec, pts, budget, mode="meet")
        inc = incidence(fam, pts)
    elif field in ("tildeX", "Y"):
        fam = enumerate_family(spec, pts, budget, mode="hull", min_diam=N)
        inc = incidence(fam, pts, use_hull=True)
    else:
        raise SpecError(f"unknown field {field!r}")
    out = np.zeros((len(replicas), len(pts)), dtype=bool)
    pos = 0
    for chunk in _chunks(replicas, max(1, len(fam))):
        x = draw_included(fam, seed, chunk)
        out[pos:pos + len(chunk)] = (sparse.csr_matrix(x.astype(np.int32)) @ inc).toarray() > 0
        pos += len(chunk)
    if field == "Y":
        out |= xi_field(pts, seed, replicas, eps, spec.dimension)
    return out, fam.neglected


# ---------------------------------------------------------------------------

@dataclass
class FieldSample:
    window: Window
    included: list
    barX: np.ndarray
    hatX: dict
    tildeX: np.ndarray
    Y: np.ndarray
    xi: np.ndarray
    barX0: np.ndarray
    barX1: np.ndarray
    truncation_radius: int
    neglected: float
    seed: int
    replica: int
    N: int = 0
    eps: float = 0.0
    manifest: dict = field(default_factory=dict)

    def check_invariants(self):
        flat_bar = self.barX.reshape(-1)
        for j, v in enumerate(map(tuple, self.window.sites().tolist())):
            if bool(self.hatX.get(v)) != bool(flat_bar[j]):
                raise AssertionError(f"hatX/barX mismatch at {v}")
        if np.any(self.barX1 & ~self.tildeX):
            raise AssertionError("barX1 not contained in tildeX")
        if np.any(self.tildeX & ~self.Y):
            raise AssertionError("tildeX not contained in Y")
        if self.N == 0 and np.any(self.barX & ~self.tildeX):
            raise AssertionError("barX not contained in tildeX")
        if np.any((self.barX0 | self.barX1) != self.barX):
            raise AssertionError("barX split inconsistent")


def sample_field(spec: IntensitySpec, window: Window, seed: int, budget: float = 1e-9,
                 replica: int = 0, N: int = 0, eps: float = 0.0) -> FieldSample:
    """One realization on ``window`` with all derived fields.

    ``tildeX`` is the union of hulls of included sets with ``diam >= N``;
    ``N = 0`` takes hulls of every set so that barX is contained in tildeX.
    """
    if window.dim != spec.dimension:
        raise SpecError("window dimension differs from spec")
    pts = window.sites()
    shape = window.shape
    fam = enumerate_family(spec, pts, budget, mode="hull", min_diam=0)
    x = draw_included(fam, seed, [replica])[0]
    inc_meet = incidence(fam, pts)
    inc_hull = incidence(fam, pts, use_hull=True)
    diams = fam.diams()
    xv = x.astype(np.int32)
    big = (diams >= N).astype(np.int32)
    bar = (inc_meet.T @ xv) > 0
    bar1 = (inc_meet.T @ (xv * big)) > 0
    bar0 = (inc_meet.T @ (xv * (1 - big))) > 0
    tilde = (inc_hull.T @ (xv * big)) > 0
    xi = xi_field(pts, seed, [replica], eps, spec.dimension)[0]
    y = tilde | xi
    included = [fam.cells(k) for k in np.nonzero(x)[0]]
    hatx: dict = {}
    for cells in included:
        for v in cells:
            if window.contains(v):
                hatx.setdefault(v, []).append(tuple(tuple(a - b for a, b in zip(c, v)) for c in cells))
    for v in hatx:
        hatx[v].sort()
    # keep only sets that actually meet the window in the included list
    included = [c for c in included if any(window.contains(v) for v in c)]
    return FieldSample(
        window=window, included=sorted(included), barX=bar.reshape(shape), hatX=hatx,
        tildeX=tilde.reshape(shape), Y=y.reshape(shape), xi=xi.reshape(shape),
        barX0=bar0.reshape(shape), barX1=bar1.reshape(shape),
        truncation_radius=int(fam.max_diam), neglected=float(fam.neglected),
        seed=int(seed), replica=int(replica), N=int(N), eps=float(eps),
        manifest={"seed": int(seed), "replica": int(replica), "budget": budget,
                  "neglected_mass": float(fam.neglected), "truncation_radius": int(fam.max_diam),
                  "n_sets": len(fam), "N": int(N), "eps": float(eps)},
    )


def sample_tilde(spec: IntensitySpec, window: Window, N: int, eps: float, seed: int,
                 budget: float = 1e-9, replica: int = 0) -> FieldSample:
    if not (0.0 <= eps <= 1.0):
        raise SpecError("eps must lie in [0, 1]")
    return sample_field(spec, window, seed, budget, replica=replica, N=N, eps=eps)


def write_field_csv(sample: FieldSample, path) -> None:
    pts = sample.window.sites()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(pts.shape[1])] + ["barX", "tildeX", "Y"])
        for j, p in enumerate(pts.tolist()):
            w.writerow(p + [int(sample.barX.reshape(-1)[j]), int(sample.tildeX.reshape(-1)[j]),
                            int(sample.Y.reshape(-1)[j])])
    with open(str(path) + ".manifest.json", "w") as fh:
        json.dump(sample.manifest, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# decoupling by zeros

def boundary(U, d) -> list:
    """Outer vertex boundary of a finite site set."""
    U = {_as_site(u, d) for u in U}
    out = set()
    for u in U:
        for j in range(d):
            for s in (-1, 1):
                v = list(u)
                v[j] += s
                v = tuple(v)
                if v not in U:
                    out.add(v)
    return sorted(out)


@dataclass
class DecouplingReport:
    mode: str
    field: str
    tv: float
    threshold: float
    n_conditioned: int
    independent: bool
    inside: list
    outside: list


def _exact_tilde_law(spec, sites, N, eps, budget):
    fam = enumerate_family(spec, sites, budget, mode="hull", min_diam=N)
    inc = incidence(fam, sites, use_hull=True).toarray()
    masks = (inc.astype(np.int64) << np.arange(len(sites))).sum(axis=1) if len(fam) else np.zeros(0, dtype=np.int64)
    probs = fam.probs.copy()
    if eps > 0:
        masks = np.concatenate([masks, 1 << np.arange(len(sites))])
        probs = np.concatenate([probs, np.full(len(sites), eps)])
    from . import kernels

    return kernels.or_convolve(masks, probs, len(sites)), fam.neglected


def _split_law(law, n_in, n_b, n_out):
    """Conditional law of (inside, outside) given boundary all zero, as a matrix."""
    n = n_in + n_b + n_out
    idx = np.arange(1 << n)
    bmask = ((1 << n_b) - 1) << n_in
    keep = (idx & bmask) == 0
    total = law[keep].sum()
    mat = np.zeros((1 << n_in, 1 << n_out))
    ins = idx & ((1 << n_in) - 1)
    outs = idx >> (n_in + n_b)
    np.add.at(mat, (ins[keep], outs[keep]), law[keep])
    return mat, total


def decoupling_test(spec: IntensitySpec, U, N: int = 0, eps: float = 0.0, inside=None, outside=None,
                    n_samples: int = 0, seed: int = 0, mode: str = "exact", field: str = "Y",
                    budget: float = 1e-12, min_hits: int = 200) -> DecouplingReport:
    """Test whether inside and outside of ``U`` are independent given zeros on its boundary.

    ``inside`` and ``outside`` pick at most two sites each; by default the
    first site of ``U`` and the two sites just beyond the boundary.
    """
    d = spec.dimension
    U = [_as_site(u, d) for u in U]
    bd = boundary(U, d)
    inside = [_as_site(v, d) for v in (inside if inside is not None else U[:2])]
    if outside is None:
        outside = []
        for b in bd:
            nb = tuple(x + (1 if x > 0 else -1) * (j == 0) for j, x in enumerate(b))
            if nb not in U and nb not in bd and nb not in outside:
                outside.append(nb)
        outside = outside[:2]
    outside = [_as_site(v, d) for v in outside]
    sites = inside + bd + outside
    eps_eff = eps if field == "Y" else 0.0
    n_in, n_b, n_out = len(inside), len(bd), len(outside)
    if mode == "exact":
        law, _ = _exact_tilde_law(spec, sites, N, eps_eff, budget)
        mat, total = _split_law(law, n_in, n_b, n_out)
        if total <= 0:
            raise SpecError("insufficient conditional sample")
        mat /= total
        prod = np.outer(mat.sum(axis=1), mat.sum(axis=0))
        tv = 0.5 * float(np.abs(mat - prod).sum())
        return DecouplingReport("exact", field, tv, 1e-12, 0, tv <= 1e-12, inside, outside)
    bits, _ = sample_bits(spec, sites, seed, np.arange(n_samples), budget,
                          field="Y" if field == "Y" else "tildeX", N=N, eps=eps_eff)
    cond = ~bits[:, n_in:n_in + n_b].any(axis=1)
    sub = bits[cond]
    if len(sub) < min_hits:
        raise SpecError("insufficient conditional sample")
    a = (sub[:, :n_in].astype(np.int64) << np.arange(n_in)).sum(axis=1)
    b = (sub[:, n_in + n_b:].astype(np.int64) << np.arange(n_out)).sum(axis=1)

    def tv_of(a, b):
        mat = np.zeros((1 << n_in, 1 << n_out))
        np.add.at(mat, (a, b), 1.0)
        mat /= mat.sum()
        return 0.5 * float(np.abs(mat - np.outer(mat.sum(axis=1), mat.sum(axis=0))).sum())

    tv = tv_of(a, b)
    g = rng.generator(seed, rng.STREAM_DIRECT, 0, 77)
    null = [tv_of(a, g.permutation(b)) for _ in range(200)]
    thr = float(np.quantile(null, 0.99))
    return DecouplingReport("mc", field, tv, thr, int(len(sub)), tv <= thr, inside, outside)


def empirical_law(spec, sites, seed, replicas, budget=1e-9, **kw) -> ExactLaw:
    bits, _ = sample_bits(spec, sites, seed, np.arange(replicas), budget, **kw)
    return law_from_samples([tuple(s) for s in as_sites(spec, sites).tolist()], bits)


__all__ = [
    "Window", "SetFamily", "FieldSample", "enumerate_family", "incidence", "sample_bits",
    "sample_field", "sample_tilde", "decoupling_test", "boundary", "write_field_csv",
    "empirical_law", "tv_distance",
]
