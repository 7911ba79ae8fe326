"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting ``POISSONREP_PURE=1``
forces the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("POISSONREP_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
hash_uniforms = _impl.hash_uniforms
or_convolve = _impl.or_convolve
greedy_net = _impl.greedy_net
voronoi_assign = _impl.voronoi_assign
w_chain = _impl.w_chain
first_hits = _impl.first_hits

__all__ = [
    "BACKEND",
    "hash_uniforms",
    "or_convolve",
    "greedy_net",
    "voronoi_assign",
    "w_chain",
    "first_hits",
]
