"""Forward operations and their recorded gradients.

Everything the gesture network needs: 3D convolution, max pooling, ReLU,
an LSTM cell (fused, with an analytic backward), affine, softmax and
cross-entropy, plus the shape plumbing (reshape, time-step slicing).
"""

import numpy as np

from .. import kernels
from ..errors import DimensionError, InputError
from .core import Op, Tensor, recording

LOG_CLAMP = 1e-12


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _triple(v):
    if isinstance(v, int):
        return (v, v, v)
    t = tuple(int(e) for e in v)
    if len(t) != 3:
        raise InputError(f"expected 3 entries, got {v!r}")
    return t


# ---------------------------------------------------------------------------
# conv3d


class _Conv3d(Op):
    __slots__ = ("stride", "padding", "xshape", "kshape")

    def backward(self, out_grads):
        dy = out_grads[0]
        x, k = self.inputs[0], self.inputs[1]
        dx = kernels.conv3d_backward_input(
            k.data, dy, self.xshape, self.stride, self.padding
        )
        dk = kernels.conv3d_backward_kernel(
            x.data, dy, self.kshape, self.stride, self.padding
        )
        grads = [dx, dk]
        if len(self.inputs) == 3:
            grads.append(dy.sum(axis=(0, 2, 3, 4)))
        return grads


def conv3d(x, kernel, bias=None, stride=(1, 1, 1), padding=(0, 0, 0)):
    """Cross-correlate ``x`` (N,Cin,T,H,W) with ``kernel`` (Cout,Cin,kT,kH,kW).

    Zero padding; output size per axis is floor((n + 2p - k)/s) + 1.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    stride, padding = _triple(stride), _triple(padding)
    if x.data.ndim != 5:
        raise DimensionError(f"conv3d input must be 5-D, got {x.data.ndim}-D")
    if kernel.data.ndim != 5:
        raise DimensionError(f"conv3d kernel must be 5-D, got {kernel.data.ndim}-D")
    if any(s < 1 for s in stride):
        raise InputError(f"strides must be >= 1, got {stride}")
    if any(p < 0 for p in padding):
        raise InputError(f"padding must be >= 0, got {padding}")
    N, Cin, T, H, W = x.shape
    Cout, Ckin, kT, kH, kW = kernel.shape
    if Ckin != Cin:
        raise DimensionError(
            f"channel axis mismatch: input C_in={Cin}, kernel C_in={Ckin}"
        )
    for name, n, k, p in (("T", T, kT, padding[0]),
                          ("H", H, kH, padding[1]),
                          ("W", W, kW, padding[2])):
        if k > n + 2 * p:
            raise DimensionError(
                f"kernel exceeds padded input on axis {name}: {k} > {n + 2 * p}"
            )
    y = kernels.conv3d_forward(x.data, kernel.data, stride, padding)
    inputs = [x, kernel]
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (Cout,):
            raise DimensionError(
                f"bias must have shape ({Cout},) to match C_out, got {bias.shape}"
            )
        y += bias.data.reshape(1, -1, 1, 1, 1)
        inputs.append(bias)
    out = Tensor.from_op(y)
    if recording():
        op = _Conv3d(inputs, (out,))
        op.stride, op.padding = stride, padding
        op.xshape, op.kshape = x.shape, kernel.shape
    return out


# ---------------------------------------------------------------------------
# maxpool3d


class _MaxPool3d(Op):
    __slots__ = ("argmax", "xshape")

    def backward(self, out_grads):
        return [kernels.maxpool3d_backward(out_grads[0], self.argmax, self.xshape)]


def maxpool3d(x, window):
    """Non-overlapping max pooling; ``window`` must divide (T, H, W).

    Gradient routes to the argmax; ties go to the lowest flat index.
    """
    x = _as_tensor(x)
    window = _triple(window)
    if x.data.ndim != 5:
        raise DimensionError(f"maxpool3d input must be 5-D, got {x.data.ndim}-D")
    N, C, T, H, W = x.shape
    for name, n, p in (("T", T, window[0]), ("H", H, window[1]), ("W", W, window[2])):
        if p < 1 or n % p != 0:
            raise DimensionError(
                f"pool window must divide axis {name}: {n} % {p} != 0"
            )
    y, argmax = kernels.maxpool3d_forward(x.data, window)
    out = Tensor.from_op(y)
    if recording():
        op = _MaxPool3d((x,), (out,))
        op.argmax, op.xshape = argmax, x.shape
    return out


# ---------------------------------------------------------------------------
# relu


class _Relu(Op):
    __slots__ = ("mask",)

    def backward(self, out_grads):
        return [out_grads[0] * self.mask]


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0
    out = Tensor.from_op(np.where(mask, x.data, 0.0))
    if recording():
        op = _Relu((x,), (out,))
        op.mask = mask
    return out


# ---------------------------------------------------------------------------
# shape plumbing


class _Reshape(Op):
    __slots__ = ("xshape",)

    def backward(self, out_grads):
        return [out_grads[0].reshape(self.xshape)]


def reshape(x, shape):
    x = _as_tensor(x)
    out = Tensor.from_op(x.data.reshape(shape))
    if recording():
        op = _Reshape((x,), (out,))
        op.xshape = x.shape
    return out


class _SliceTime(Op):
    __slots__ = ("t", "xshape")

    def backward(self, out_grads):
        dx = np.zeros(self.xshape)
        dx[:, :, self.t] = out_grads[0]
        return [dx]


def slice_time(x, t):
    """Select time step ``t`` from (N, C, T, H, W) -> (N, C, H, W)."""
    x = _as_tensor(x)
    if x.data.ndim != 5:
        raise DimensionError(f"slice_time input must be 5-D, got {x.data.ndim}-D")
    if not 0 <= t < x.shape[2]:
        raise InputError(f"time index {t} out of range [0, {x.shape[2]})")
    out = Tensor.from_op(np.ascontiguousarray(x.data[:, :, t]))
    if recording():
        op = _SliceTime((x,), (out,))
        op.t, op.xshape = t, x.shape
    return out


# ---------------------------------------------------------------------------
# affine


class _Affine(Op):
    __slots__ = ()

    def backward(self, out_grads):
        dy = out_grads[0]
        x, w = self.inputs[0], self.inputs[1]
        return [dy @ w.data.T, x.data.T @ dy, dy.sum(axis=0)]


def affine(x, w, b):
    """x (N, D) @ w (D, K) + b (K)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError(
            f"affine expects 2-D operands, got x {x.shape}, w {w.shape}"
        )
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"inner axis mismatch: x D={x.shape[1]}, w D={w.shape[0]}"
        )
    if b.shape != (w.shape[1],):
        raise DimensionError(
            f"bias must have shape ({w.shape[1]},), got {b.shape}"
        )
    out = Tensor.from_op(x.data @ w.data + b.data)
    if recording():
        _Affine((x, w, b), (out,))
    return out


# ---------------------------------------------------------------------------
# LSTM cell (fused)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _LstmStep(Op):
    __slots__ = ("cache",)

    def backward(self, out_grads):
        dh_next, dc_next = out_grads
        x, h, c, wx, wh, _b = self.inputs
        i, f, g, o, c_new, tc = self.cache
        N, Hd = i.shape
        if dh_next is None:
            dh_next = np.zeros((N, Hd))
        if dc_next is None:
            dc_next = np.zeros((N, Hd))
        do = dh_next * tc
        dc = dc_next + dh_next * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c.data
        dg = dc * i
        dc_prev = dc * f
        dpre = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dx = dpre @ wx.data.T
        dh_prev = dpre @ wh.data.T
        dwx = x.data.T @ dpre
        dwh = h.data.T @ dpre
        db = dpre.sum(axis=0)
        return [dx, dh_prev, dc_prev, dwx, dwh, db]


def lstm_step(x, h, c, wx, wh, b):
    """One LSTM cell update.

    Gate order along the 4*Hd axis is (input, forget, cell, output) with
    sigmoid/sigmoid/tanh/sigmoid activations:
    c' = f*c + i*g,  h' = o*tanh(c').
    """
    x, h, c = _as_tensor(x), _as_tensor(h), _as_tensor(c)
    wx, wh, b = _as_tensor(wx), _as_tensor(wh), _as_tensor(b)
    if x.data.ndim != 2 or h.data.ndim != 2 or c.data.ndim != 2:
        raise DimensionError("lstm_step expects 2-D (N, features) operands")
    N, D = x.shape
    Hd = h.shape[1]
    if h.shape != (N, Hd) or c.shape != (N, Hd):
        raise DimensionError(
            f"state shape mismatch: h {h.shape}, c {c.shape}, batch {N}"
        )
    if wx.shape != (D, 4 * Hd):
        raise DimensionError(
            f"wx must be ({D}, {4 * Hd}) for D={D}, Hd={Hd}, got {wx.shape}"
        )
    if wh.shape != (Hd, 4 * Hd):
        raise DimensionError(f"wh must be ({Hd}, {4 * Hd}), got {wh.shape}")
    if b.shape != (4 * Hd,):
        raise DimensionError(f"b must be ({4 * Hd},), got {b.shape}")

    pre = x.data @ wx.data + h.data @ wh.data + b.data
    i = _sigmoid(pre[:, :Hd])
    f = _sigmoid(pre[:, Hd : 2 * Hd])
    g = np.tanh(pre[:, 2 * Hd : 3 * Hd])
    o = _sigmoid(pre[:, 3 * Hd :])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    h_out, c_out = Tensor.from_op(h_new), Tensor.from_op(c_new)
    if recording():
        op = _LstmStep((x, h, c, wx, wh, b), (h_out, c_out))
        op.cache = (i, f, g, o, c_new, tc)
    return h_out, c_out


# ---------------------------------------------------------------------------
# softmax / cross-entropy


class _Softmax(Op):
    __slots__ = ("probs",)

    def backward(self, out_grads):
        dy = out_grads[0]
        p = self.probs
        return [p * (dy - (dy * p).sum(axis=1, keepdims=True))]


def softmax(logits):
    """Row-wise softmax with max-subtraction for stability."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax expects (N, K), got {logits.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor.from_op(p)
    if recording():
        op = _Softmax((logits,), (out,))
        op.probs = p
    return out


class _CrossEntropy(Op):
    __slots__ = ("labels", "picked")

    def backward(self, out_grads):
        dy = float(out_grads[0])
        probs = self.inputs[0]
        N = probs.shape[0]
        dp = np.zeros_like(probs.data)
        live = self.picked > LOG_CLAMP  # clamped rows get no gradient
        rows = np.arange(N)[live]
        dp[rows, self.labels[live]] = -dy / (N * self.picked[live])
        return [dp]


def cross_entropy(probs, labels):
    """Mean negative log-probability at the label, clamped below 1e-12."""
    probs = _as_tensor(probs)
    labels = np.asarray(labels)
    if probs.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects (N, K) probs, got {probs.shape}")
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise DimensionError(
            f"labels must be ({probs.shape[0]},), got {labels.shape}"
        )
    labels = labels.astype(np.int64)
    K = probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        bad = labels[(labels < 0) | (labels >= K)][0]
        raise InputError(f"label {bad} out of range [0, {K})")
    N = probs.shape[0]
    picked = probs.data[np.arange(N), labels]
    loss = float(np.mean(-np.log(np.maximum(picked, LOG_CLAMP))))
    out = Tensor.from_op(np.asarray(loss))
    if recording():
        op = _CrossEntropy((probs,), (out,))
        op.labels, op.picked = labels, picked
        out.creator = op
    return out
