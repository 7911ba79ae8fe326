"""Experiment configs, runners and the bundled scenario catalog.

A config is a JSON object::

    {"kind": "oracle", "spec": "pair-0.5", "seed": 1, "replicas": 1000,
     "params": {"sets": [[0], [0, 1]]}}

``spec`` is the name of a bundled spec, an inline spec object, or a path to
a JSON spec file.  Runners return tables (written as CSV) and named checks;
:func:`run` writes the tables plus ``manifest.json`` and maps the outcome to
an exit status.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import coding_censored as cen
from . import coding_general as cg
from . import coding_pairs as cp
from . import domination as dom
from . import exact_oracle as eo
from . import intensity as it
from . import markov1d as mk
from . import sampler as sm

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_TOLERANCE = 0, 2, 3, 4
Z_TOL = 4.0


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bundled specs


def _geo(c, r, n0=1):
    return it.PairTail("geometric", c=c, r=r, n0=n0)


def example_family(lam: float = 1.0, ks=range(2, 13)) -> it.IntensitySpec:
    """Translates of ``{0, k, ..., (k-1)k}`` with probability ``e^{-lam k}``."""
    return it.make_spec(1, [([(j * k,) for j in range(k)], math.exp(-lam * k)) for k in ks])


BUNDLED = {
    "singleton-0.5": lambda: it.make_spec(1, [([(0,)], 0.5)]),
    "pair-0.5": lambda: it.make_spec(1, [([(0,), (1,)], 0.5)]),
    "pair-0.1": lambda: it.make_spec(1, [([(0,), (1,)], 0.1)]),
    "censor-4-9": lambda: it.make_spec(1, [([(0,)], 0.5), ([(0,), (1,)], 0.1)]),
    "mixed-1d": lambda: it.make_spec(1, [([(0,)], 0.3), ([(0,), (2,)], 0.08), ([(0,), (1,), (3,)], 0.05)]),
    "geom-quarter": lambda: it.make_spec(1, pair_tail=_geo(1.0, 0.25)),
    "geom-half": lambda: it.make_spec(1, pair_tail=_geo(1.0, 0.5)),
    "geom-singleton": lambda: it.make_spec(1, [([(0,)], 0.3)], _geo(0.4, 0.5)),
    "power-3": lambda: it.make_spec(1, pair_tail=it.PairTail(
        "list", values=tuple(0.3 * n ** -3.0 for n in range(1, 201)))),
    "grid-2d": lambda: it.make_spec(2, [([(0, 0)], 0.3), ([(0, 0), (1, 0)], 0.012), ([(0, 0), (0, 1)], 0.012)]),
    "example-1.5": example_family,
}


def bundled_spec(name: str) -> it.IntensitySpec:
    try:
        return BUNDLED[name]()
    except KeyError:
        raise ConfigError(f"unknown bundled spec {name!r}; known: {', '.join(sorted(BUNDLED))}") from None


def load_spec(ref) -> it.IntensitySpec:
    if isinstance(ref, it.IntensitySpec):
        return ref
    if isinstance(ref, dict):
        try:
            return it.IntensitySpec.from_json(ref)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid inline spec: {exc}") from exc
    if isinstance(ref, str):
        if ref in BUNDLED:
            return bundled_spec(ref)
        if os.path.exists(ref):
            with open(ref) as fh:
                return load_spec(json.load(fh))
        raise ConfigError(f"spec {ref!r} is neither bundled nor a file")
    raise ConfigError("spec must be a name, a path or an object")


# ---------------------------------------------------------------------------
# config


_SCHEMAS = {
    "sample": {"window": (list, [[0, 9]]), "budget": (float, 1e-9), "field": (str, "barX"),
               "N": (int, 0), "eps": (float, 0.0)},
    "oracle": {"sets": (list, [[0], [0, 1], [0, 1, 2]]), "budget": (float, 1e-12)},
    "dominate": {"sites": (list, [0, 1, 2]), "eps": (float, 0.5), "order": (str, "lex"),
                 "lam": (float, 0.0)},
    "code-pairs": {"sites": (list, [0, 1, 2]), "k_max": (int, 6), "tv_tol": (float, 0.01)},
    "code-general": {"window": (list, [[0, 1], [0, 1]]), "k_max": (int, 3), "ell": (int, 0),
                     "tv_tol": (float, 0.01)},
    "censored": {"L": (list, [0, 1]), "v": (int, 0), "window": (list, [0, 1]),
                 "levels": (int, 16), "tv_tol": (float, 0.01)},
    "markov": {"t_cap": (int, 200), "steps": (int, 10_000), "start": (list, [])},
    "example-1.5": {"lam": (float, 1.0), "ks": (list, [2, 3, 4]), "k_family": (int, 12)},
    "streaks": {"candidates": (list, [[0], [0, 1], [0, 1, 2], [0, 1, 2, 3]]), "n": (int, 2),
                "beta": (float, 10.0), "N": (int, 40)},
    "partition": {"d": (int, 2), "r": (int, 2), "side": (int, 12)},
}
KINDS = tuple(_SCHEMAS)


@dataclass
class ExperimentConfig:
    kind: str
    spec: object
    seed: int = 0
    replicas: int = 1000
    params: dict = field(default_factory=dict)
    out: str | None = None

    def spec_obj(self) -> it.IntensitySpec:
        return load_spec(self.spec)

    def to_json(self) -> dict:
        spec = self.spec.to_json() if isinstance(self.spec, it.IntensitySpec) else self.spec
        return {"kind": self.kind, "spec": spec, "seed": self.seed, "replicas": self.replicas,
                "params": self.params}


def _coerce(name, typ, val):
    if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if typ is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if typ in (str, list) and isinstance(val, typ):
        return val
    raise ConfigError(f"parameter {name!r} must be {typ.__name__}, got {val!r}")


def make_config(obj: dict, **overrides) -> ExperimentConfig:
    """Validate a config object; keyword overrides win when not ``None``."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    obj = dict(obj)
    obj.update({k: v for k, v in overrides.items() if v is not None})
    kind = obj.get("kind")
    if kind not in _SCHEMAS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    unknown = set(obj) - {"kind", "spec", "seed", "replicas", "params", "out"}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "seed" not in obj or "replicas" not in obj:
        raise ConfigError("config needs both seed and replicas")
    seed, reps = obj["seed"], obj["replicas"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        raise ConfigError("replicas must be a positive integer")
    schema = _SCHEMAS[kind]
    raw = obj.get("params") or {}
    if not isinstance(raw, dict):
        raise ConfigError("params must be an object")
    bad = set(raw) - set(schema)
    if bad:
        raise ConfigError(f"unknown parameters for {kind}: {sorted(bad)}")
    params = {k: _coerce(k, typ, raw.get(k, default)) for k, (typ, default) in schema.items()}
    spec = obj.get("spec", "pair-0.5" if kind != "example-1.5" else "example-1.5")
    load_spec(spec)  # validate early
    return ExperimentConfig(kind, spec, seed, reps, params, obj.get("out"))


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Result:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    def check(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (tuple, list)):
        return " ".join(str(_fmt(y)) for y in x)
    return x


def write_tables(res: Result, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, (header, rows) in sorted(res.tables.items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])
        names.append(path.name)
    return names


def _se(p, n):
    return math.sqrt(max(p * (1 - p), 1e-300) / n)


def _z(est, exact, n):
    se = _se(exact, n)
    return (est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)


def _tv_floor(n_sites, reps, tol):
    """Tolerance that is at least twice the typical TV noise of an empirical law."""
    return max(tol, 2.0 * math.sqrt(2 ** n_sites / reps))


def _sites1(xs):
    return [(int(x),) if not isinstance(x, (list, tuple)) else tuple(int(y) for y in x) for x in xs]


# ---------------------------------------------------------------------------
# runners


def _window(box):
    if box and not isinstance(box[0], (list, tuple)):
        box = [box]
    return sm.Window(tuple(tuple(b) for b in box))


def run_sample(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    win = _window(p["window"])
    pts = [tuple(int(x) for x in s) for s in win.sites()]
    bits, neglected = sm.sample_bits(spec, pts, cfg.seed, np.arange(cfg.replicas), p["budget"],
                                     field=p["field"], N=p["N"], eps=p["eps"])
    res = Result(info={"neglected": neglected})
    rows = []
    for j, v in enumerate(pts):
        m = float(bits[:, j].mean())
        if p["field"] == "barX":
            ex = 1.0 - eo.prob_all_zero(spec, [v], p["budget"]).mid
            z = _z(m, ex, cfg.replicas)
            rows.append([v, m, _se(m, cfg.replicas), ex, z, "mc"])
            res.check(f"density at {v}", abs(z) <= Z_TOL, f"z={z:.2f}")
        else:
            rows.append([v, m, _se(m, cfg.replicas), "", "", "mc"])
    res.table("sample_density", ["site", "mean", "se", "exact", "z", "kind"], rows)
    return res


def run_oracle(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    res = Result()
    rows, law_rows = [], []
    for S in p["sets"]:
        S = _sites1(S) if spec.dimension == 1 else [tuple(s) for s in S]
        one = eo.prob_all_one(spec, S, p["budget"])
        zero = eo.prob_all_zero(spec, S, p["budget"])
        bits, _ = sm.sample_bits(spec, S, cfg.seed, np.arange(cfg.replicas))
        mc = float(bits.all(axis=1).mean())
        z = _z(mc, one.mid, cfg.replicas)
        rows.append([S, one.lo, one.hi, zero.lo, zero.hi, int(one.exact), mc, _se(mc, cfg.replicas), z])
        res.check(f"all-one {S}", abs(z) <= Z_TOL, f"z={z:.2f}")
        if len(S) <= 4:
            law = eo.exact_law(spec, S, p["budget"])
            for x, w in enumerate(law.weights):
                law_rows.append([S, "".join(map(str, eo.decode(x, len(S)))), w])
    res.table("oracle", ["set", "all_one_lo", "all_one_hi", "all_zero_lo", "all_zero_hi", "exact",
                         "mc_all_one", "mc_se", "z"], rows)
    res.table("exact_law", ["set", "config", "prob"], law_rows)
    return res


def run_dominate(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    sites = _sites1(p["sites"]) if spec.dimension == 1 else [tuple(s) for s in p["sites"]]
    order = None if p["order"] == "none" else p["order"]
    prof = dom.delta_bound(spec, p["eps"], order=order, sites=sites)
    res = Result()
    res.table("delta", ["site", "epsilon", "delta", "kind"],
              [[v, e, d, "exact"] for v, e, d in zip(prof.sites, prof.epsilon, prof.delta)])
    cs = dom.sample_monotone_coupling(spec, sites, p["eps"], order=p["order"], seed=cfg.seed,
                                      n_samples=cfg.replicas)
    mono = float(np.mean(np.all(cs.y <= cs.z, axis=-1)))
    res.check("pathwise y <= z", mono == 1.0, f"fraction {mono}")
    res.check("conditional <= delta", cs.max_ratio <= 1.0 + 1e-12, f"max ratio {cs.max_ratio:.6f}")
    rows = [["monotone_fraction", mono, "exact"], ["max_ratio", cs.max_ratio, "exact"],
            ["exposures", cs.exposures, "exact"]]
    if len(sites) <= 4:
        yl = dom.y_law(spec, sites, p["eps"])
        prod = eo.ExactLaw.product(sites, prof.delta)
        dres = eo.check_dominance(yl, prod)
        res.check("exact law of Y dominated by product(delta)", dres.dominated, f"gap {dres.gap:.3g}")
        emp = eo.law_from_samples(sites, cs.y.reshape(-1, len(sites)))
        tv = eo.tv_distance(emp, yl)
        tol = _tv_floor(len(sites), cfg.replicas, 0.01)
        res.check("y marginal matches law of Y", tv <= tol, f"TV {tv:.4f} <= {tol:.4f}")
        rows.append(["y_tv", tv, "mc"])
    if p["lam"] > 0:
        dd = dom.dominating_iid_density(spec, p["lam"])
        rows += [["N", dd.N, "exact"], ["q1", dd.q1, "exact"], ["q2", dd.q2, "exact"],
                 ["density", dd.density, "exact"]]
        res.check("dominating density < 1", dd.density < 1.0, f"{dd.density}")
    res.table("coupling", ["quantity", "value", "kind"], rows)
    return res


def _level_rows(rates, budgets, n):
    rows = []
    for k in sorted(rates):
        r, b = rates[k], budgets[k]
        rows.append([k, r, _se(min(b, 1.0), n), b])
    return rows


def run_code_pairs(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    sites = [int(x) for x in p["sites"]]
    bits, rep = cp.code_pairs(spec, sites, cfg.seed, p["k_max"], np.arange(cfg.replicas))
    res = Result(info={"borel_cantelli": rep.borel_cantelli, "residual_start": rep.residual_start,
                       "residual_mass": rep.residual_mass})
    rates = rep.gate_rates()
    rows = _level_rows(rates, {k: 3.0 / k ** 2 for k in rates}, bits.size)
    res.table("gate_rates", ["k", "rate", "se", "budget"], rows)
    for k, r, se, b in rows:
        res.check(f"gate rate level {k}", r <= b + 3 * se, f"{r:.5f} vs {b:.5f}")
    surv = rep.radius_survival()
    res.table("radius_survival", ["r", "p_greater"], surv)
    res.check("radius tail monotone", all(a[1] >= b[1] for a, b in zip(surv, surv[1:])))
    if len(sites) <= 4:
        law = eo.exact_law(spec, _sites1(sites))
        tv = eo.tv_distance(law, eo.law_from_samples(law.sites, bits))
        tol = _tv_floor(len(sites), cfg.replicas, p["tv_tol"])
        res.check("coded law matches exact law", tv <= tol, f"TV {tv:.4f} <= {tol:.4f}")
        res.table("tv", ["sites", "tv", "tolerance"], [[sites, tv, tol]])
    return res


def run_code_general(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    win = _window(p["window"])
    bits, rep = cg.code_general(spec, win, cfg.seed, p["k_max"], np.arange(cfg.replicas),
                                ell=p["ell"] or None)
    res = Result(info={"ell": rep.ell, "correction_start": rep.correction_start})
    rates = rep.gate_rates()
    rows = _level_rows(rates, rep.level_budget, bits.size)
    res.table("gate_rates", ["k", "rate", "se", "budget"], rows)
    for k, r, se, b in rows:
        res.check(f"gate rate level {k}", r <= b + 3 * se, f"{r:.5f} vs {b:.5f}")
    res.table("radius_survival", ["r", "p_greater"], rep.radius_survival())
    pts = [tuple(int(x) for x in s) for s in win.sites()]
    if len(pts) <= 4:
        law = eo.exact_law(spec, pts)
        tv = eo.tv_distance(law, eo.law_from_samples(law.sites, bits))
        tol = _tv_floor(len(pts), cfg.replicas, p["tv_tol"])
        res.check("coded law matches exact law", tv <= tol, f"TV {tv:.4f} <= {tol:.4f}")
        res.table("tv", ["sites", "tv", "tolerance"], [[pts, tv, tol]])
    return res


def run_partition(cfg: ExperimentConfig) -> Result:
    p = cfg.params
    d, r, side = p["d"], p["r"], p["side"]
    win = sm.Window(tuple((0, side - 1) for _ in range(d)))
    rows = []
    for rep in range(cfg.replicas):
        ps = cg.sample_partition(d, r, win, cfg.seed, rep)  # checks the invariants
        rows.append([rep, ps.n_classes, len(ps.centers)])
    res = Result()
    res.table("partition", ["replica", "classes", "centers"], rows)
    res.check("net and ball invariants", True, f"{cfg.replicas} windows")
    return res


def run_censored(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    L = _sites1(p["L"])
    v = (int(p["v"]),)
    eps = cen.censor_prob(spec, v, L)
    f = cen.sample_ZL(spec, L, cfg.seed, np.arange(cfg.replicas))
    rate = float((f.values[:, f.domain.index(v)] == cen.STAR).mean())
    z = _z(rate, min(eps, 1.0), cfg.replicas)
    res = Result()
    res.check("star rate equals eps", abs(z) <= Z_TOL, f"{rate:.5f} vs {eps:.5f}")
    win = [int(x) for x in p["window"]]
    final, lvl = cen.refine_batch(spec, win, cfg.seed, np.arange(cfg.replicas), p["levels"])
    unresolved = int((final == cen.STAR).sum())
    res.check("refinement resolves the window", unresolved == 0, f"{unresolved} unresolved")
    res.table("censor", ["quantity", "value", "se", "kind"],
              [["eps", eps, 0.0, "exact"], ["star_rate", rate, _se(rate, cfg.replicas), "mc"]])
    chain = cen.censor_chain(spec, v[0], min(p["levels"], 12))
    res.table("censor_chain", ["level", "eps"], list(enumerate(chain)))
    hist = np.bincount(lvl.ravel().clip(min=0))
    res.table("resolution", ["level", "count"], list(enumerate(hist.tolist())))
    if len(win) <= 4 and unresolved == 0:
        law = eo.exact_law(spec, _sites1(win))
        tv = eo.tv_distance(law, eo.law_from_samples(law.sites, final))
        tol = _tv_floor(len(win), cfg.replicas, p["tv_tol"])
        res.check("final law matches exact law", tv <= tol, f"TV {tv:.4f} <= {tol:.4f}")
        res.table("tv", ["sites", "tv", "tolerance"], [[win, tv, tol]])
    return res


def run_markov(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    start = mk.make_state(p["start"]) if p["start"] else None
    st = mk.return_time_stats(spec, cfg.replicas, p["t_cap"], cfg.seed, start=start)
    res = Result(info={"tv_bound": st.tv_bound})
    res.table("survival", ["t", "p_greater"], st.rows())
    res.table("fit", ["slope", "intercept", "r2", "t_lo", "t_hi", "censored", "runs"],
              [[st.slope, st.intercept, st.r2, st.fit_range[0], st.fit_range[1], st.n_censored,
                cfg.replicas]])
    wc = mk.w_chain_check(spec, p["steps"], cfg.seed, start=start)
    res.check("W recursion pathwise", wc.mismatches == 0, f"{p['steps']} steps")
    fam = mk.fresh_family(spec)
    cnt, _ = mk.stationary_summary(spec, cfg.seed, np.arange(cfg.replicas))
    se = cnt.std() / math.sqrt(cfg.replicas) if cnt.std() > 0 else 1e-300
    zc = (cnt.mean() - fam.mean_crossing) / se
    res.check("stationary crossing count mean", abs(zc) <= Z_TOL or cnt.std() == 0, f"z={zc:.2f}")
    res.table("stationary", ["mean_count", "se", "expected"], [[cnt.mean(), se, fam.mean_crossing]])
    return res


def run_example(cfg: ExperimentConfig) -> Result:
    """Sets ``A_k`` of ``k`` points with gap ``k`` and ``p = e^{-lam k}``."""
    p = cfg.params
    lam = p["lam"]
    ks = [int(k) for k in p["ks"]]
    spec = example_family(lam, range(min(ks), max(p["k_family"], max(ks)) + 1))
    x0 = 1.0 - eo.prob_all_zero(spec, [(0,)]).mid
    res = Result()
    rows = []
    for k in ks:
        A = [(j * k,) for j in range(k)]
        one = eo.prob_all_one(spec, A).mid
        bits, _ = sm.sample_bits(spec, A, cfg.seed, np.arange(cfg.replicas))
        mc = float(bits.all(axis=1).mean())
        pk = math.exp(-lam * k)
        radius_lb = max(0.0, one ** (1.0 / k) - x0)
        rows.append([k, pk, one, mc, _se(mc, cfg.replicas), x0, radius_lb])
        res.check(f"P(all one on A_{k}) >= e^(-lam k)", one >= pk and mc + Z_TOL * _se(pk, cfg.replicas) >= pk,
                  f"{one:.6f} >= {pk:.6f}")
    res.table("example", ["k", "p_Ak", "exact_all_one", "mc_all_one", "mc_se", "p_site",
                          "radius_tail_lower_bound"], rows)
    tail = sum(k * math.exp(-lam * k) for k in range(min(ks), 2000))
    res.info.update({"family_tail_sum": tail, "below_e_minus_lam": tail < math.exp(-lam),
                     "site_density_below_e_minus_lam": x0 < math.exp(-lam)})
    return res


def run_streaks(cfg: ExperimentConfig) -> Result:
    spec, p = cfg.spec_obj(), cfg.params
    cands = [_sites1(S) for S in p["candidates"]]
    rep = eo.streak_density(spec, cands)
    res = Result(info={"gamma": rep.gamma, "lambda_c": rep.lambda_c})
    rows = [[S, iv.lo, iv.hi, root] for S, iv, root in rep.values]
    res.table("streaks", ["set", "all_one_lo", "all_one_hi", "per_site_root"], rows)
    res.table("streak_summary", ["best_set", "delta_hat", "gamma", "lambda_c"],
              [[rep.best_set, rep.delta_hat, rep.gamma, rep.lambda_c]])
    try:
        w = dom.witness_search(spec, p["n"], p["beta"], p["N"], seed=cfg.seed)
    except it.SpecError as exc:
        res.info["witness"] = str(exc)
        return res
    S = [v for v in w.S]
    mc_rows = []
    if len(S) <= 64:
        bits, _ = sm.sample_bits(spec, S, cfg.seed, np.arange(cfg.replicas))
        mc = float(bits.all(axis=1).mean())
        upper = mc + 3 * _se(max(mc, 1.0 / cfg.replicas), cfg.replicas)
        res.check("certified bound below MC upper estimate", w.bound <= upper,
                  f"{w.bound:.3g} <= {upper:.3g}")
        mc_rows = [mc, upper]
    res.table("witness", ["n", "beta", "N", "B", "D", "bound", "success", "mc", "mc_upper"],
              [[w.n, w.beta, w.N, len(w.B), len(w.D), w.bound, w.success] + (mc_rows or ["", ""])])
    return res


RUNNERS = {
    "sample": run_sample, "oracle": run_oracle, "dominate": run_dominate,
    "code-pairs": run_code_pairs, "code-general": run_code_general, "censored": run_censored,
    "markov": run_markov, "example-1.5": run_example, "streaks": run_streaks,
    "partition": run_partition,
}


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    name: str
    anchor: str
    config: dict


SCENARIOS = {s.name: s for s in [
    Scenario("example-1.5", "single exponential moment is not sufficient (sets A_k, p = e^{-lam k})",
             {"kind": "example-1.5", "seed": 15, "replicas": 20_000, "params": {"lam": 1.0, "ks": [2, 3, 4]}}),
    Scenario("streak-lower-bound", "streak density delta versus gamma; witness sets B and D",
             {"kind": "streaks", "spec": "power-3", "seed": 23, "replicas": 20_000,
              "params": {"n": 2, "beta": 10.0, "N": 40}}),
    Scenario("pairs-coding-budget", "pair coding: positive radius with probability at most 3/k^2",
             {"kind": "code-pairs", "spec": "geom-singleton", "seed": 32, "replicas": 20_000,
              "params": {"sites": [0, 1, 2], "k_max": 6}}),
    Scenario("oracle-pair", "union of included sets; P(all one) = 0.625 for the p = 1/2 pair",
             {"kind": "oracle", "spec": "pair-0.5", "seed": 1, "replicas": 20_000,
              "params": {"sets": [[0], [0, 1], [0, 1, 2]]}}),
    Scenario("domination-delta", "domination by a product measure with delta_v = 0.7",
             {"kind": "dominate", "spec": "pair-0.1", "seed": 21, "replicas": 20_000,
              "params": {"sites": [0, 1], "eps": 0.5, "order": "none", "lam": 0.0}}),
    Scenario("dominating-density", "two-piece dominating IID density (11/12 for p_n = 4^-n, lam = log 2)",
             {"kind": "dominate", "spec": "geom-quarter", "seed": 16, "replicas": 5_000,
              "params": {"sites": [0, 1], "eps": 0.5, "order": "lex", "lam": math.log(2.0)}}),
    Scenario("general-partition", "greedy (r,r)-net partition meets at most 5^d classes per ball",
             {"kind": "partition", "seed": 32, "replicas": 200, "params": {"d": 2, "r": 2, "side": 12}}),
    Scenario("general-coding", "general coding over diameter levels in d = 2",
             {"kind": "code-general", "spec": "grid-2d", "seed": 33, "replicas": 5_000,
              "params": {"window": [[0, 1], [0, 1]], "k_max": 3}}),
    Scenario("censored-refinement", "censored fields with eps = 4/9 and multiscale refinement",
             {"kind": "censored", "spec": "censor-4-9", "seed": 34, "replicas": 20_000,
              "params": {"L": [0, 1], "v": 0, "window": [0, 1]}}),
    Scenario("return-times", "crossing chain return times have exponential tails",
             {"kind": "markov", "spec": "geom-singleton", "seed": 36, "replicas": 20_000,
              "params": {"t_cap": 200, "steps": 10_000}}),
    Scenario("direct-sampling", "site density of the union process",
             {"kind": "sample", "spec": "mixed-1d", "seed": 1, "replicas": 20_000,
              "params": {"window": [[0, 4]]}}),
]}


def list_scenarios() -> list:
    return [(s.name, s.anchor) for s in SCENARIOS.values()]


def scenario_config(name: str, **overrides) -> ExperimentConfig:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; try 'list'")
    return make_config(SCENARIOS[name].config, **overrides)


# ---------------------------------------------------------------------------
# orchestration


def manifest(cfg: ExperimentConfig, res: Result, files: list) -> dict:
    return {
        "version": __version__,
        "backend": kernels.BACKEND,
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "files": files,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in res.checks],
        "info": {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in res.info.items()},
    }


def run(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> tuple:
    """Run one experiment; returns ``(exit_status, Result)``.

    Config problems raise :class:`ConfigError`; failed internal assertions
    propagate as ``AssertionError``.  Both are mapped to exit codes by the CLI.
    """
    res = RUNNERS[cfg.kind](cfg)
    dest = out or cfg.out
    if dest is not None:
        path = Path(dest)
        files = write_tables(res, path)
        with open(path / "manifest.json", "w") as fh:
            json.dump(manifest(cfg, res, files), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return (EXIT_OK if res.passed else EXIT_TOLERANCE), res


__all__ = [
    "BUNDLED", "KINDS", "SCENARIOS", "ConfigError", "ExperimentConfig", "Result", "Scenario",
    "bundled_spec", "example_family", "list_scenarios", "load_spec", "make_config", "run",
    "scenario_config",
]
