"""Pure-Python/numpy implementations of the hot kernels.

These define the reference semantics; ``_ckernels.pyx`` must agree with them
bit for bit.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

BACKEND = "python"


def _mix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_uniforms(seed, stream, replicas, keys):
    """Counter-based uniforms ``u[r, j]`` for replica ids and 64-bit keys.

    The value depends only on ``(seed, stream, replicas[r], keys[j])``.
    """
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed], dtype=np.uint64) ^ (np.array([stream], dtype=np.uint64) * _GOLDEN))
        reps = np.asarray(replicas, dtype=np.uint64)
        ks = np.asarray(keys, dtype=np.uint64)
        hr = _mix(base + reps * _M1)
        z = _mix(hr[:, None] ^ ks[None, :])
    return (z >> _S11).astype(np.float64) * _INV53


def or_convolve(masks, probs, n_bits):
    """Law of the bitwise OR of independent events ``mask_i w.p. probs_i``."""
    law = np.zeros(1 << n_bits)
    law[0] = 1.0
    idx = np.arange(1 << n_bits)
    for m, q in zip(np.asarray(masks, dtype=np.int64), np.asarray(probs, dtype=np.float64)):
        if q == 0.0:
            continue
        moved = law * q
        law = law * (1.0 - q)
        np.add.at(law, idx | int(m), moved)
    return law


def greedy_net(w, r, edge):
    """Greedy (r, r)-net on a grid by increasing ``w`` with settlement flags.

    ``w`` is a 2D array of distinct priorities; ``edge`` marks sites whose
    r-ball leaves the simulated region.  Status is three-valued: a site is a
    known non-centre once a known centre of lower priority lies in its ball,
    a known centre when every lower site of its (fully simulated) ball is a
    known non-centre, and unknown otherwise.  Known statuses agree with the
    infinite-volume greedy net.  Returns ``(centers, settled)``.
    """
    h, wd = w.shape
    order = np.argsort(w, axis=None, kind="stable")
    status = np.full((h, wd), -2, dtype=np.int8)  # -2 not yet processed
    for flat in order:
        i, j = divmod(int(flat), wd)
        ball = status[max(0, i - r):i + r + 1, max(0, j - r):j + r + 1]
        if np.any(ball == 1):
            status[i, j] = 0
        elif edge[i, j] or np.any(ball == -1):
            status[i, j] = -1
        else:
            status[i, j] = 1
    return status == 1, status >= 0


def voronoi_assign(ci, cj, u, h, wd, rmax=-1):
    """Label each grid site by its nearest center (l-infinity), ties by smaller ``u``.

    With ``rmax >= 0`` only centers within ``rmax`` are considered; sites
    with none keep label -1.
    """
    ci = np.asarray(ci, dtype=np.int64).reshape(-1)
    cj = np.asarray(cj, dtype=np.int64).reshape(-1)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    big = np.iinfo(np.int64).max
    best_d = np.full((h, wd), big, dtype=np.int64)
    best_u = np.full((h, wd), np.inf)
    best = np.full((h, wd), -1, dtype=np.int64)
    for k in range(len(ci)):
        if rmax >= 0:
            i0, i1 = max(0, ci[k] - rmax), min(h, ci[k] + rmax + 1)
            j0, j1 = max(0, cj[k] - rmax), min(wd, cj[k] + rmax + 1)
        else:
            i0, i1, j0, j1 = 0, h, 0, wd
        ii, jj = np.mgrid[i0:i1, j0:j1]
        d = np.maximum(np.abs(ii - ci[k]), np.abs(jj - cj[k]))
        bd, bu = best_d[i0:i1, j0:j1], best_u[i0:i1, j0:j1]
        better = (d < bd) | ((d == bd) & (u[k] < bu))
        bd[better] = d[better]
        bu[better] = u[k]
        best[i0:i1, j0:j1][better] = k
    return best, best_d


def w_chain(m, w0):
    """Run ``W_n = max(W_{n-1} - 1, M_n)`` from ``W_0 = w0``; returns ``W_1..W_n``."""
    m = np.asarray(m, dtype=np.int64)
    out = np.empty(len(m), dtype=np.int64)
    w = int(w0)
    for n in range(len(m)):
        w = max(w - 1, int(m[n]))
        out[n] = w
    return out


def first_hits(m_rows, w0, target):
    """First ``n >= 1`` with ``W_n == target`` per row of ``m_rows`` (0 if never)."""
    m_rows = np.asarray(m_rows, dtype=np.int64)
    out = np.zeros(m_rows.shape[0], dtype=np.int64)
    for r in range(m_rows.shape[0]):
        w = int(w0)
        for n in range(m_rows.shape[1]):
            w = max(w - 1, int(m_rows[r, n]))
            if w == target:
                out[r] = n + 1
                break
    return out
