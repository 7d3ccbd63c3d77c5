"""Hot kernels for the mention encoder: centered 1-d convolution + tanh.

The convolution inner loop dominates training time, so a compiled Cython
implementation is preferred when present. The numpy fallback below computes
identical values (same padding, same accumulation order up to BLAS), and is
selected automatically when the extension is missing or when the
HIERTYPE_NO_CEXT environment variable is set.

Convention: filters ``W`` have shape (w, d_out, d_in) with w odd, input ``M``
has shape (s, d_in), and output row i is
``tanh(b + sum_j W[j] @ M[i - w//2 + j])`` with zero padding outside [0, s).
"""

import os

import numpy as np

from ..errors import ShapeError

try:
    if os.environ.get("HIERTYPE_NO_CEXT"):
        raise ImportError("compiled kernels disabled via HIERTYPE_NO_CEXT")
    from . import _ckernels
except ImportError:
    _ckernels = None

HAVE_COMPILED = _ckernels is not None


def _check_shapes(M, W, b):
    if M.ndim != 2 or W.ndim != 3 or b.ndim != 1:
        raise ShapeError(f"conv1d expects M(s,d_in) W(w,d_out,d_in) b(d_out), "
                         f"got {M.shape} {W.shape} {b.shape}")
    w, d_out, d_in = W.shape
    if w % 2 == 0:
        raise ShapeError(f"filter width must be odd, got {w}")
    if M.shape[1] != d_in or b.shape[0] != d_out:
        raise ShapeError(f"conv1d shape mismatch: M{M.shape} W{W.shape} b{b.shape}")


def _windows(M, w):
    """Stack the w-token context of every position: (s, w*d_in)."""
    s, d_in = M.shape
    off = w // 2
    Mp = np.zeros((s + w - 1, d_in), dtype=M.dtype)
    Mp[off:off + s] = M
    view = np.lib.stride_tricks.sliding_window_view(Mp, w, axis=0)  # (s, d_in, w)
    return view.transpose(0, 2, 1).reshape(s, w * d_in)


def conv1d_tanh_forward_numpy(M, W, b):
    _check_shapes(M, W, b)
    w, d_out, d_in = W.shape
    win = _windows(M, w)
    Wflat = W.transpose(1, 0, 2).reshape(d_out, w * d_in)
    return np.tanh(win @ Wflat.T + b)


def conv1d_tanh_backward_numpy(M, W, C, dC):
    """Gradients of the fused conv+tanh given output C and upstream dC."""
    _check_shapes(M, W, np.zeros(W.shape[1]))
    s, d_in = M.shape
    w, d_out, _ = W.shape
    off = w // 2
    dpre = dC * (1.0 - C * C)
    db = dpre.sum(axis=0)
    win = _windows(M, w)
    dWflat = dpre.T @ win
    dW = dWflat.reshape(d_out, w, d_in).transpose(1, 0, 2).copy()
    Wflat = W.transpose(1, 0, 2).reshape(d_out, w * d_in)
    dwin = dpre @ Wflat
    dMp = np.zeros((s + w - 1, d_in))
    for j in range(w):
        dMp[j:j + s] += dwin[:, j * d_in:(j + 1) * d_in]
    return dMp[off:off + s], dW, db


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_tanh_forward(M, W, b):
    if _ckernels is not None:
        _check_shapes(M, W, b)
        return _ckernels.conv1d_tanh_forward(_c64(M), _c64(W), _c64(b))
    return conv1d_tanh_forward_numpy(M, W, b)


def conv1d_tanh_backward(M, W, C, dC):
    if _ckernels is not None:
        return _ckernels.conv1d_tanh_backward(_c64(M), _c64(W), _c64(C), _c64(dC))
    return conv1d_tanh_backward_numpy(M, W, C, dC)
