# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct 3D convolution and max pooling.

The convolution loops accumulate one output row (the W axis) at a time in
a small scratch buffer, so the multiply-accumulate sweeps stay in L1 and
gcc can vectorize them.  Padding is materialized by the caller-facing
wrappers; the core loops assume pre-padded input.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def _pad(x, padding):
    pT, pH, pW = padding
    if pT == 0 and pH == 0 and pW == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pT, pT), (pH, pH), (pW, pW)))


cdef void _conv_fwd_core(const double[:, :, :, :, ::1] xp,
                         const double[:, :, :, :, ::1] k,
                         double[:, :, :, :, ::1] y, double[::1] acc,
                         Py_ssize_t sT, Py_ssize_t sH, Py_ssize_t sW) noexcept nogil:
    cdef Py_ssize_t N = y.shape[0], Co = y.shape[1], To = y.shape[2]
    cdef Py_ssize_t Ho = y.shape[3], Wo = y.shape[4]
    cdef Py_ssize_t Ci = k.shape[1], kT = k.shape[2], kH = k.shape[3], kW = k.shape[4]
    cdef Py_ssize_t n, co, ci, kt, kh, kw, to, ho, wo
    cdef double w
    cdef const double* xrow
    for n in range(N):
        for co in range(Co):
            for to in range(To):
                for ho in range(Ho):
                    for wo in range(Wo):
                        acc[wo] = 0.0
                    for ci in range(Ci):
                        for kt in range(kT):
                            for kh in range(kH):
                                xrow = &xp[n, ci, to * sT + kt, ho * sH + kh, 0]
                                for kw in range(kW):
                                    w = k[co, ci, kt, kh, kw]
                                    if sW == 1:
                                        for wo in range(Wo):
                                            acc[wo] += w * xrow[wo + kw]
                                    else:
                                        for wo in range(Wo):
                                            acc[wo] += w * xrow[wo * sW + kw]
                    for wo in range(Wo):
                        y[n, co, to, ho, wo] = acc[wo]


cdef void _conv_bwd_kernel_core(const double[:, :, :, :, ::1] xp,
                                const double[:, :, :, :, ::1] dy,
                                double[:, :, :, :, ::1] dk, Py_ssize_t sT,
                                Py_ssize_t sH, Py_ssize_t sW) noexcept nogil:
    cdef Py_ssize_t N = dy.shape[0], Co = dy.shape[1], To = dy.shape[2]
    cdef Py_ssize_t Ho = dy.shape[3], Wo = dy.shape[4]
    cdef Py_ssize_t Ci = dk.shape[1], kT = dk.shape[2], kH = dk.shape[3], kW = dk.shape[4]
    cdef Py_ssize_t n, co, ci, kt, kh, kw, to, ho, wo
    cdef double acc
    cdef const double* xrow
    cdef const double* dyrow
    for n in range(N):
        for co in range(Co):
            for to in range(To):
                for ho in range(Ho):
                    dyrow = &dy[n, co, to, ho, 0]
                    for ci in range(Ci):
                        for kt in range(kT):
                            for kh in range(kH):
                                xrow = &xp[n, ci, to * sT + kt, ho * sH + kh, 0]
                                for kw in range(kW):
                                    acc = 0.0
                                    if sW == 1:
                                        for wo in range(Wo):
                                            acc += dyrow[wo] * xrow[wo + kw]
                                    else:
                                        for wo in range(Wo):
                                            acc += dyrow[wo] * xrow[wo * sW + kw]
                                    dk[co, ci, kt, kh, kw] += acc


cdef void _conv_bwd_input_core(const double[:, :, :, :, ::1] k,
                               const double[:, :, :, :, ::1] dy,
                               double[:, :, :, :, ::1] dxp, Py_ssize_t sT,
                               Py_ssize_t sH, Py_ssize_t sW) noexcept nogil:
    cdef Py_ssize_t N = dy.shape[0], Co = dy.shape[1], To = dy.shape[2]
    cdef Py_ssize_t Ho = dy.shape[3], Wo = dy.shape[4]
    cdef Py_ssize_t Ci = k.shape[1], kT = k.shape[2], kH = k.shape[3], kW = k.shape[4]
    cdef Py_ssize_t n, co, ci, kt, kh, kw, to, ho, wo
    cdef double w
    cdef double* dxrow
    cdef const double* dyrow
    for n in range(N):
        for co in range(Co):
            for to in range(To):
                for ho in range(Ho):
                    dyrow = &dy[n, co, to, ho, 0]
                    for ci in range(Ci):
                        for kt in range(kT):
                            for kh in range(kH):
                                dxrow = &dxp[n, ci, to * sT + kt, ho * sH + kh, 0]
                                for kw in range(kW):
                                    w = k[co, ci, kt, kh, kw]
                                    if w == 0.0:
                                        continue
                                    if sW == 1:
                                        for wo in range(Wo):
                                            dxrow[wo + kw] += w * dyrow[wo]
                                    else:
                                        for wo in range(Wo):
                                            dxrow[wo * sW + kw] += w * dyrow[wo]


def conv3d_forward(x, k, stride, padding):
    xp = _pad(np.asarray(x, dtype=np.float64), padding)
    k = np.ascontiguousarray(k, dtype=np.float64)
    cdef Py_ssize_t sT = stride[0], sH = stride[1], sW = stride[2]
    N, _, Tp, Hp, Wp = xp.shape
    Co, _, kT, kH, kW = k.shape
    To = (Tp - kT) // sT + 1
    Ho = (Hp - kH) // sH + 1
    Wo = (Wp - kW) // sW + 1
    y = np.empty((N, Co, To, Ho, Wo))
    acc = np.empty(Wo)
    _conv_fwd_core(xp, k, y, acc, sT, sH, sW)
    return y


def conv3d_backward_kernel(x, dy, kshape, stride, padding):
    xp = _pad(np.asarray(x, dtype=np.float64), padding)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t sT = stride[0], sH = stride[1], sW = stride[2]
    dk = np.zeros(kshape)
    _conv_bwd_kernel_core(xp, dy, dk, sT, sH, sW)
    return dk


def conv3d_backward_input(k, dy, xshape, stride, padding):
    k = np.ascontiguousarray(k, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t sT = stride[0], sH = stride[1], sW = stride[2]
    N, C, T, H, W = xshape
    pT, pH, pW = padding
    dxp = np.zeros((N, C, T + 2 * pT, H + 2 * pH, W + 2 * pW))
    _conv_bwd_input_core(k, dy, dxp, sT, sH, sW)
    if pT or pH or pW:
        dxp = np.ascontiguousarray(dxp[:, :, pT:pT + T, pH:pH + H, pW:pW + W])
    return dxp


def maxpool3d_forward(x, window):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, :, ::1] xv = x
    cdef Py_ssize_t pT = window[0], pH = window[1], pW = window[2]
    cdef Py_ssize_t N = xv.shape[0], C = xv.shape[1], T = xv.shape[2]
    cdef Py_ssize_t H = xv.shape[3], W = xv.shape[4]
    cdef Py_ssize_t To = T // pT, Ho = H // pH, Wo = W // pW
    y = np.empty((N, C, To, Ho, Wo))
    am = np.empty(N * C * To * Ho * Wo, dtype=np.int64)
    cdef double[:, :, :, :, ::1] yv = y
    cdef cnp.int64_t[::1] av = am
    cdef Py_ssize_t n, c, to, ho, wo, dt, dh, dw, t, h, w, pos
    cdef double best, v
    cdef Py_ssize_t besti
    with nogil:
        pos = 0
        for n in range(N):
            for c in range(C):
                for to in range(To):
                    for ho in range(Ho):
                        for wo in range(Wo):
                            best = xv[n, c, to * pT, ho * pH, wo * pW]
                            besti = ((n * C + c) * T + to * pT) * H * W \
                                + (ho * pH) * W + wo * pW
                            for dt in range(pT):
                                t = to * pT + dt
                                for dh in range(pH):
                                    h = ho * pH + dh
                                    for dw in range(pW):
                                        w = wo * pW + dw
                                        v = xv[n, c, t, h, w]
                                        if v > best:
                                            best = v
                                            besti = ((n * C + c) * T + t) * H * W \
                                                + h * W + w
                            yv[n, c, to, ho, wo] = best
                            av[pos] = besti
                            pos += 1
    return y, am


def maxpool3d_backward(dy, argmax, xshape):
    dx = np.zeros(int(np.prod(xshape)))
    dx[argmax] = np.ravel(dy)
    return dx.reshape(xshape)
