"""Hot-loop kernels, compiled when available.

The Cython build (``_ckernels``) is preferred; set ``SMOOTHCERT_PURE=1`` to
force the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("SMOOTHCERT_PURE", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"


def _indices(indices):
    return np.ascontiguousarray(np.asarray(indices, dtype=np.uint64).reshape(-1))


def uniform_rows(seed, context, indices, ncols, counter=0, impl=None):
    """Uniforms in (0, 1): one row per stream index, ``ncols`` counters each."""
    impl = impl or _impl
    return impl.uniform_rows(int(seed), int(context), _indices(indices), int(ncols), int(counter))


def gaussian_rows(seed, context, indices, ncols, counter=0, impl=None):
    """Standard normals via Box-Muller, laid out like :func:`uniform_rows`."""
    impl = impl or _impl
    return impl.gaussian_rows(int(seed), int(context), _indices(indices), int(ncols), int(counter))


def binom_upper_tail(k, n, p, impl=None):
    impl = impl or _impl
    return impl.binom_upper_tail(int(k), int(n), float(p))
