"""Backend selection for the hot kernels.

Prefers the compiled Cython module; falls back to the NumPy
implementations when it is absent or when BICUP_PURE_PY=1 is set.
"""

import os

if os.environ.get("BICUP_PURE_PY") == "1":
    from bicup import _kernels_py as _impl
else:
    try:
        from bicup import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from bicup import _kernels_py as _impl

BACKEND = _impl.BACKEND
conv_out_size = _impl.conv_out_size
im2col = _impl.im2col
col2im = _impl.col2im
