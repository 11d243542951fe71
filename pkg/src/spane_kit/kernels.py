"""Hot-loop kernels, compiled when available.

The Cython extension ``_ckernels`` is used if it was built; otherwise the
numpy implementations in ``_pykernels`` are loaded. Both produce identical
outputs. Set ``SPANE_KIT_PURE=1`` to force the numpy path.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("SPANE_KIT_PURE"):
    _ckernels = None
else:
    try:
        from . import _ckernels
    except ImportError:
        _ckernels = None

_impl = _ckernels if _ckernels is not None else _pykernels
BACKEND = "cython" if _ckernels is not None else "python"


def topk_desc(sims, k):
    return _impl.topk_desc(np.ascontiguousarray(sims, dtype=np.float64), k)


def ksg_counts(x, y, k):
    return _impl.ksg_counts(np.ascontiguousarray(x, dtype=np.float64),
                            np.ascontiguousarray(y, dtype=np.float64), k)


def yin_pick(diff, tau_min, tau_max, threshold):
    return _impl.yin_pick(np.ascontiguousarray(diff, dtype=np.float64),
                          tau_min, tau_max, float(threshold))


def backends():
    """Map of backend name to kernel module, for tests and benchmarks."""
    found = {"python": _pykernels}
    if _ckernels is not None:
        found["cython"] = _ckernels
    return found
