"""Backend selection for the convolution data-movement kernels.

The compiled Cython module is preferred; the numpy fallback is bitwise
identical. Set TIDECAST_KERNELS=python or TIDECAST_KERNELS=compiled to force
a backend (forcing `compiled` raises if the extension is missing).
"""

from __future__ import annotations

import os

from tidecast.nn import _im2col_py

_FORCE = os.environ.get("TIDECAST_KERNELS", "").strip().lower()

if _FORCE == "python":
    _impl = _im2col_py
    _BACKEND = "python"
elif _FORCE == "compiled":
    from tidecast.nn import _im2col as _impl  # type: ignore[no-redef]

    _BACKEND = "compiled"
else:
    try:
        from tidecast.nn import _im2col as _impl  # type: ignore[no-redef]

        _BACKEND = "compiled"
    except ImportError:
        _impl = _im2col_py
        _BACKEND = "python"

im2col = _impl.im2col
col2im = _impl.col2im


def backend_name() -> str:
    return _BACKEND
