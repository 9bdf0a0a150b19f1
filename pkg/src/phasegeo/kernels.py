"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Setting ``PHASEGEO_PURE_PYTHON=1`` forces the fallback.
:data:`BACKEND` names the active backend.
"""

import os

from . import _pykernels

try:
    if os.environ.get("PHASEGEO_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build
    _impl = _pykernels
    BACKEND = "numpy"

objective = _impl.objective
objective_grad = _impl.objective_grad
hessian_form = _impl.hessian_form

BACKENDS = {"numpy": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
