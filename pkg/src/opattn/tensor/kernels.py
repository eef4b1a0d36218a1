"""Numba inner loops for the convolution family.

Four kernels: tap-accumulation forwards for the full and per-channel
(depthwise) convolutions - each also reused for its input gradient with a
flipped kernel, and the depthwise one for average pooling with an all-ones
kernel - plus the two weight gradients. All parallelize over independent
output slots with sequential inner sums, so results do not depend on thread
count. Everything else in the engine is numpy/BLAS.

Two patterns matter for speed: inner loops run over a hoisted slice
(``seg = base[off:off + n]``) because offset indexing (``base[t + off]``)
defeats LLVM's vectorizer, and accumulators are typed from the input arrays
so float32 work stays in float32 SIMD lanes. Each kernel also has a serial
compilation used below a size cutoff, where thread-launch overhead would
dominate (gradient checking runs thousands of tiny forwards).
"""

import numpy as np
from numba import njit, prange

# below this output element count the serial compilations win
SERIAL_CUTOFF = 16384


def _dwconv_fwd(xpad, w, dil, out):
    # xpad: (N, C, H + d(f-1), W + d(f-1)) zero-padded input; w: (C, f, f)
    # Works on one flattened (row-major) plane per (n, c); the strip between
    # row ends is computed as slop and discarded on copy-out.
    N, C, H, W = out.shape
    f = w.shape[1]
    Wp = xpad.shape[3]
    span = dil * (f - 1)
    nflat = H * Wp - span
    for nc in prange(N * C):
        n = nc // C
        c = nc % C
        base = xpad[n, c].reshape((H + span) * Wp)
        buf = np.zeros(nflat, out.dtype)
        for i in range(f):
            for j in range(f):
                wv = w[c, i, j]
                off = i * dil * Wp + j * dil
                seg = base[off:off + nflat]
                for t in range(nflat):
                    buf[t] += wv * seg[t]
        o = out[n, c]
        for y in range(H):
            row = y * Wp
            for x in range(W):
                o[y, x] = buf[row + x]
    return out


def _conv_fwd(xpad, w, b, dil, out):
    # xpad: (N, Ci, H + d(f-1), W + d(f-1)); w: (Co, Ci, f, f); b: (Co,)
    N, Co, H, W = out.shape
    Ci = w.shape[1]
    f = w.shape[2]
    Wp = xpad.shape[3]
    span = dil * (f - 1)
    nflat = H * Wp - span
    for nco in prange(N * Co):
        n = nco // Co
        co = nco % Co
        buf = np.empty(nflat, out.dtype)
        buf[:] = b[co]
        for ci in range(Ci):
            base = xpad[n, ci].reshape((H + span) * Wp)
            for i in range(f):
                for j in range(f):
                    wv = w[co, ci, i, j]
                    off = i * dil * Wp + j * dil
                    seg = base[off:off + nflat]
                    for t in range(nflat):
                        buf[t] += wv * seg[t]
        o = out[n, co]
        for y in range(H):
            row = y * Wp
            for x in range(W):
                o[y, x] = buf[row + x]
    return out


def _dwconv_wgrad(xpad, gout, dil, f, gw):
    # gw[c, i, j] = sum_{n,y,x} gout[n,c,y,x] * xpad[n,c,y+i*dil,x+j*dil]
    N, C, H, W = gout.shape
    for cij in prange(C * f * f):
        c = cij // (f * f)
        ij = cij % (f * f)
        i = ij // f
        j = ij % f
        acc = gout[0, 0, 0, 0] * 0  # typed zero: accumulate in the input dtype
        for n in range(N):
            for y in range(H):
                grow = gout[n, c, y]
                seg = xpad[n, c, y + i * dil][j * dil:j * dil + W]
                for x in range(W):
                    acc += grow[x] * seg[x]
        gw[c, i, j] = acc
    return gw


def _conv_wgrad(xpad, gout, dil, f, gw):
    # gw[co, ci, i, j] = sum_{n,y,x} gout[n,co,y,x] * xpad[n,ci,y+i*dil,x+j*dil]
    N, Co, H, W = gout.shape
    Ci = xpad.shape[1]
    for coci in prange(Co * Ci):
        co = coci // Ci
        ci = coci % Ci
        for i in range(f):
            for j in range(f):
                acc = gout[0, 0, 0, 0] * 0
                for n in range(N):
                    for y in range(H):
                        grow = gout[n, co, y]
                        seg = xpad[n, ci, y + i * dil][j * dil:j * dil + W]
                        for x in range(W):
                            acc += grow[x] * seg[x]
                gw[co, ci, i, j] = acc
    return gw


_dwconv_fwd_par = njit(parallel=True, cache=True, fastmath=True)(_dwconv_fwd)
_dwconv_fwd_ser = njit(cache=True, fastmath=True)(_dwconv_fwd)
_conv_fwd_par = njit(parallel=True, cache=True, fastmath=True)(_conv_fwd)
_conv_fwd_ser = njit(cache=True, fastmath=True)(_conv_fwd)
_dwconv_wgrad_par = njit(parallel=True, cache=True, fastmath=True)(_dwconv_wgrad)
_dwconv_wgrad_ser = njit(cache=True, fastmath=True)(_dwconv_wgrad)
_conv_wgrad_par = njit(parallel=True, cache=True, fastmath=True)(_conv_wgrad)
_conv_wgrad_ser = njit(cache=True, fastmath=True)(_conv_wgrad)


def dwconv_fwd(xpad, w, dil, out):
    k = _dwconv_fwd_ser if out.size < SERIAL_CUTOFF else _dwconv_fwd_par
    return k(xpad, w, dil, out)


def conv_fwd(xpad, w, b, dil, out):
    k = _conv_fwd_ser if out.size < SERIAL_CUTOFF else _conv_fwd_par
    return k(xpad, w, b, dil, out)


def dwconv_wgrad(xpad, gout, dil, f, gw):
    k = _dwconv_wgrad_ser if gout.size < SERIAL_CUTOFF else _dwconv_wgrad_par
    return k(xpad, gout, dil, f, gw)


def conv_wgrad(xpad, gout, dil, f, gw):
    k = _conv_wgrad_ser if gout.size < SERIAL_CUTOFF else _conv_wgrad_par
    return k(xpad, gout, dil, f, gw)
