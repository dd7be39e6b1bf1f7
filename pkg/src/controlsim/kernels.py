"""Hot-loop kernels: the compiled extension when available, numpy otherwise.

Set ``CONTROLSIM_PURE_PYTHON=1`` to force the numpy fallback.  ``BACKEND``
names the implementation in use.
"""
import os

from . import _pykernels

if os.environ.get("CONTROLSIM_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"
BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl

# numpy's SIMD log outruns the compiled scalar loop (see benchmarks/bench_kernels.py),
# so only the accumulator is taken from the extension
folded_log_lr = _pykernels.folded_log_lr
tolerance_accumulate = _impl.tolerance_accumulate
