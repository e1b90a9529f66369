"""Backend selection for the stencil and time-stepping kernels.

The Cython extension is used when it was built; otherwise (or when
``RDODE_PURE_PYTHON=1`` is set) the numpy fallback is loaded.  Both expose
``laplacian`` and ``fitzhugh_advance`` with identical signatures.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("RDODE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

laplacian = _impl.laplacian
fitzhugh_advance = _impl.fitzhugh_advance

python_backend = _kernels_py


def compiled_backend():
    """Return the compiled module, or None when it is unavailable."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
