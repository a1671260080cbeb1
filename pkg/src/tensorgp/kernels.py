"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``TENSORGP_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

_compiled = None
if os.environ.get("TENSORGP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py

sqe_gram = _impl.sqe_gram
gaussian_kde_eval = _impl.gaussian_kde_eval

__all__ = ["BACKEND", "sqe_gram", "gaussian_kde_eval"]
