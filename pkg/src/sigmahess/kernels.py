"""Backend selection for the hot kernels.

The compiled extension is used when it imports cleanly; setting
``SIGMAHESS_PURE=1`` forces the numpy fallback (used by the benchmark and by
the backend-parity tests).
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("SIGMAHESS_PURE"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

esp_all = _impl.esp_all
batch_esp = _impl.batch_esp
batch_sigma_grad = _impl.batch_sigma_grad
batch_jacobi_eigh = _impl.batch_jacobi_eigh


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython").

    ``None`` means the compiled extension is not available.
    """
    if name == "python":
        return _fallback
    if name == "cython":
        try:
            from . import _kernels
        except ImportError:
            return None
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
