"""Pure-numpy implementations of the hot kernels.

Forward 3D convolution goes through a strided im2col view plus one
``tensordot`` (so the contraction lands in BLAS).  The input-gradient pass
scatters per kernel offset with strided views instead of ``np.add.at``,
which is orders of magnitude slower.  Max pooling relies on the windows
tiling each axis exactly, so a reshape puts every window on its own axis.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

NAME = "numpy"


def _out_size(n, k, s):
    return (n - k) // s + 1


def _pad(x, padding):
    pT, pH, pW = padding
    if pT == 0 and pH == 0 and pW == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pT, pT), (pH, pH), (pW, pW)))


def _window_view(xp, kshape, stride):
    """Strided view (N, C, To, Ho, Wo, kT, kH, kW) over the padded input."""
    N, C, Tp, Hp, Wp = xp.shape
    kT, kH, kW = kshape
    sT, sH, sW = stride
    To, Ho, Wo = _out_size(Tp, kT, sT), _out_size(Hp, kH, sH), _out_size(Wp, kW, sW)
    st = xp.strides
    shape = (N, C, To, Ho, Wo, kT, kH, kW)
    strides = (st[0], st[1], st[2] * sT, st[3] * sH, st[4] * sW, st[2], st[3], st[4])
    return as_strided(xp, shape=shape, strides=strides)


def conv3d_forward(x, k, stride, padding):
    """x: (N, Cin, T, H, W), k: (Cout, Cin, kT, kH, kW) -> (N, Cout, To, Ho, Wo)."""
    xp = _pad(x, padding)
    cols = _window_view(xp, k.shape[2:], stride)
    # contract over Cin, kT, kH, kW -> (N, To, Ho, Wo, Cout)
    y = np.tensordot(cols, k, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    return np.ascontiguousarray(np.moveaxis(y, -1, 1))


def conv3d_backward_kernel(x, dy, kshape, stride, padding):
    xp = _pad(x, padding)
    cols = _window_view(xp, kshape[2:], stride)
    # contract over N, To, Ho, Wo -> (Cin, kT, kH, kW, Cout)
    dk = np.tensordot(cols, dy, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    return np.ascontiguousarray(np.moveaxis(dk, -1, 0))


def conv3d_backward_input(k, dy, xshape, stride, padding):
    N, C, T, H, W = xshape
    pT, pH, pW = padding
    sT, sH, sW = stride
    kT, kH, kW = k.shape[2:]
    To, Ho, Wo = dy.shape[2:]
    # (N, To, Ho, Wo, Cin, kT, kH, kW): contribution of every output grad to
    # every tap of the kernel window it was computed from.
    dcols = np.tensordot(dy, k, axes=([1], [0]))
    dxp = np.zeros((N, C, T + 2 * pT, H + 2 * pH, W + 2 * pW))
    for dt in range(kT):
        for dh in range(kH):
            for dw in range(kW):
                dxp[
                    :, :,
                    dt : dt + To * sT : sT,
                    dh : dh + Ho * sH : sH,
                    dw : dw + Wo * sW : sW,
                ] += np.moveaxis(dcols[..., dt, dh, dw], -1, 1)
    if pT or pH or pW:
        dxp = dxp[:, :, pT : pT + T, pH : pH + H, pW : pW + W]
    return np.ascontiguousarray(dxp)


def maxpool3d_forward(x, window):
    """Non-overlapping max pooling; windows must tile each pooled axis.

    Returns the pooled array plus the flat index (into ``x``) of each
    window's maximum.  Ties go to the lowest flat index, which is also the
    first element in window-local row-major order.
    """
    N, C, T, H, W = x.shape
    pT, pH, pW = window
    To, Ho, Wo = T // pT, H // pH, W // pW
    r = x.reshape(N, C, To, pT, Ho, pH, Wo, pW)
    r = np.moveaxis(r, (3, 5), (5, 6))  # (N, C, To, Ho, Wo, pT, pH, pW)
    flat = r.reshape(N, C, To, Ho, Wo, pT * pH * pW)
    local = flat.argmax(axis=-1)  # first max in window order == lowest flat idx
    y = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    # map window-local (dt, dh, dw) back to a flat index into x
    dt, rem = np.divmod(local, pH * pW)
    dh, dw = np.divmod(rem, pW)
    n, c, to, ho, wo = np.indices((N, C, To, Ho, Wo), sparse=True)
    t = to * pT + dt
    h = ho * pH + dh
    w = wo * pW + dw
    argmax = ((n * C + c) * T + t) * H * W + h * W + w
    return np.ascontiguousarray(y), np.ascontiguousarray(argmax.ravel())


def maxpool3d_backward(dy, argmax, xshape):
    dx = np.zeros(int(np.prod(xshape)))
    # windows are disjoint, so plain assignment routes each grad correctly
    dx[argmax] = dy.ravel()
    return dx.reshape(xshape)
