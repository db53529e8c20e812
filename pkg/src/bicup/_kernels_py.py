"""NumPy implementations of the patch gather/scatter kernels.

These are the reference semantics for the compiled module in
``_kernels.pyx``; ``bicup.kernels`` picks whichever is importable.
Both backends must agree exactly (same gathers, same accumulation
order per output element), which the backend tests assert.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def conv_out_size(size: int, k: int, stride: int) -> int:
    if size < k:
        raise ValueError(f"input size {size} smaller than kernel {k}")
    return (size - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Gather conv patches.

    x: (B, C, H, W) -> (B, C*kh*kw, L) where L = Ho*Wo, valid padding.
    Column l holds the flattened patch under output position l.
    """
    if x.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {x.dtype}")
    b, c, h, w = x.shape
    ho = conv_out_size(h, kh, stride)
    wo = conv_out_size(w, kw, stride)
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (B, C, Ho, Wo, kh, kw) -> (B, C, kh, kw, Ho, Wo)
    cols = v.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int,
           stride: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the input plane.

    cols: (B, C*kh*kw, L) -> (B, C, H, W). Adjoint of im2col.
    """
    if cols.dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {cols.dtype}")
    b = cols.shape[0]
    ho = conv_out_size(h, kh, stride)
    wo = conv_out_size(w, kw, stride)
    v = cols.reshape(b, c, kh, kw, ho, wo)
    x = np.zeros((b, c, h, w), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += v[:, :, i, j]
    return x
