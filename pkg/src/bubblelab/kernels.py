"""Hot-loop kernels: compiled extension if built, numpy fallback otherwise.

Set BUBBLELAB_PURE_PYTHON=1 to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("BUBBLELAB_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py

# numpy's vectorized pow already beats a scalar compiled loop for the weight sums
weight_sum = _kernels_py.weight_sum
riesz_sum = _impl.riesz_sum
riesz_kernel = _kernels_py.riesz_kernel
