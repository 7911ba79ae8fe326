"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each kernel is run on the same inputs with both backends; outputs are
compared before timing so a speedup never hides a disagreement.
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from poissonrep import _kernels_py

try:
    from poissonrep import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rs):
    keys = rs.integers(0, 2**63, size=4096, dtype=np.int64).astype(np.uint64)
    reps = np.arange(256, dtype=np.uint64)
    n_bits = 12
    masks = rs.integers(1, 1 << n_bits, size=60)
    probs = rs.uniform(0.01, 0.3, size=60)
    w = rs.random((60, 60))
    edge = np.zeros_like(w, dtype=bool)
    edge[:2], edge[-2:], edge[:, :2], edge[:, -2:] = True, True, True, True
    ci, cj = np.nonzero(rs.random((60, 60)) < 0.05)
    u = rs.random(len(ci))
    m = rs.integers(-1, 6, size=200_000)
    m_rows = rs.integers(-1, 4, size=(2000, 300))
    return {
        "hash_uniforms": lambda k: k.hash_uniforms(7, 1, reps, keys),
        "or_convolve": lambda k: k.or_convolve(masks, probs, n_bits),
        "greedy_net": lambda k: k.greedy_net(w, 2, edge),
        "voronoi_assign": lambda k: k.voronoi_assign(ci, cj, u, 60, 60, 2),
        "w_chain": lambda k: k.w_chain(m, -1),
        "first_hits": lambda k: k.first_hits(m_rows, -1, -1),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e .`", file=sys.stderr)
        return 1
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        if not same(fn(_kernels_py), fn(_ckernels)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 3
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        rows.append((name, t_py, t_c, t_py / t_c))
        print(f"{name:16s} numpy {t_py * 1e3:9.2f} ms   cython {t_c * 1e3:9.2f} ms   x{t_py / t_c:7.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numpy_s", "cython_s", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
