"""Select the compiled kernels when available, else the pure-Python twins.

Set ``EMDGEOM_PURE=1`` to force the pure-Python path.
"""
import os

from . import _fallback

BACKEND = "python"
network_simplex = _fallback.network_simplex
segment_pair_extremes = _fallback.segment_pair_extremes

if not os.environ.get("EMDGEOM_PURE"):
    try:
        from . import _native
    except ImportError:
        pass
    else:
        BACKEND = "native"
        network_simplex = _native.network_simplex
        segment_pair_extremes = _native.segment_pair_extremes
