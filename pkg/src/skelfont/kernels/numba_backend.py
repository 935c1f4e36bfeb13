"""Numba JIT kernel implementations.

Same contracts as numpy_backend. The stride-1 cases (the bulk of the
network) get dedicated inner loops over contiguous rows so LLVM can
vectorize them; fastmath allows the reductions to reassociate, which
keeps results within float rounding of the numpy backend while staying
bit-reproducible run to run (the compiled code is cached). All loops
are single-threaded with a fixed iteration order.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, fastmath=True)
def conv2d_forward(x, w, stride, pad):
    n, c, h, wi = x.shape
    f, _, k, _ = w.shape
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wi + 2 * pad - k) // stride + 1
    y = np.zeros((n, f, h_out, w_out), dtype=x.dtype)
    for b in range(n):
        for fo in range(f):
            yb = y[b, fo]
            for ci in range(c):
                xb = x[b, ci]
                for ky in range(k):
                    for kx in range(k):
                        wv = w[fo, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        dy = ky - pad
                        dx = kx - pad
                        ho_lo = 0
                        while ho_lo * stride + dy < 0:
                            ho_lo += 1
                        ho_hi = h_out
                        while ho_hi > ho_lo and (ho_hi - 1) * stride + dy >= h:
                            ho_hi -= 1
                        wo_lo = 0
                        while wo_lo * stride + dx < 0:
                            wo_lo += 1
                        wo_hi = w_out
                        while wo_hi > wo_lo and (wo_hi - 1) * stride + dx >= wi:
                            wo_hi -= 1
                        if stride == 1:
                            for ho in range(ho_lo, ho_hi):
                                yrow = yb[ho]
                                xrow = xb[ho + dy]
                                for wo in range(wo_lo, wo_hi):
                                    yrow[wo] += wv * xrow[wo + dx]
                        else:
                            for ho in range(ho_lo, ho_hi):
                                yrow = yb[ho]
                                xrow = xb[ho * stride + dy]
                                for wo in range(wo_lo, wo_hi):
                                    yrow[wo] += wv * xrow[wo * stride + dx]
    return y


@njit(cache=True, fastmath=True)
def conv2d_input_grad(gy, w, stride, pad, h, wi):
    n, f, h_out, w_out = gy.shape
    _, c, k, _ = w.shape
    gx = np.zeros((n, c, h, wi), dtype=gy.dtype)
    for b in range(n):
        for fo in range(f):
            gb = gy[b, fo]
            for ci in range(c):
                xb = gx[b, ci]
                for ky in range(k):
                    for kx in range(k):
                        wv = w[fo, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        dy = ky - pad
                        dx = kx - pad
                        ho_lo = 0
                        while ho_lo * stride + dy < 0:
                            ho_lo += 1
                        ho_hi = h_out
                        while ho_hi > ho_lo and (ho_hi - 1) * stride + dy >= h:
                            ho_hi -= 1
                        wo_lo = 0
                        while wo_lo * stride + dx < 0:
                            wo_lo += 1
                        wo_hi = w_out
                        while wo_hi > wo_lo and (wo_hi - 1) * stride + dx >= wi:
                            wo_hi -= 1
                        if stride == 1:
                            for ho in range(ho_lo, ho_hi):
                                grow = gb[ho]
                                xrow = xb[ho + dy]
                                for wo in range(wo_lo, wo_hi):
                                    xrow[wo + dx] += wv * grow[wo]
                        else:
                            for ho in range(ho_lo, ho_hi):
                                grow = gb[ho]
                                xrow = xb[ho * stride + dy]
                                for wo in range(wo_lo, wo_hi):
                                    xrow[wo * stride + dx] += wv * grow[wo]
    return gx


@njit(cache=True, fastmath=True)
def conv2d_weight_grad(x, gy, stride, pad, k):
    n, c, h, wi = x.shape
    _, f, h_out, w_out = gy.shape
    gw = np.zeros((f, c, k, k), dtype=x.dtype)
    for b in range(n):
        for fo in range(f):
            gb = gy[b, fo]
            for ci in range(c):
                xb = x[b, ci]
                for ky in range(k):
                    for kx in range(k):
                        dy = ky - pad
                        dx = kx - pad
                        ho_lo = 0
                        while ho_lo * stride + dy < 0:
                            ho_lo += 1
                        ho_hi = h_out
                        while ho_hi > ho_lo and (ho_hi - 1) * stride + dy >= h:
                            ho_hi -= 1
                        wo_lo = 0
                        while wo_lo * stride + dx < 0:
                            wo_lo += 1
                        wo_hi = w_out
                        while wo_hi > wo_lo and (wo_hi - 1) * stride + dx >= wi:
                            wo_hi -= 1
                        acc = 0.0
                        if stride == 1:
                            for ho in range(ho_lo, ho_hi):
                                grow = gb[ho]
                                xrow = xb[ho + dy]
                                for wo in range(wo_lo, wo_hi):
                                    acc += grow[wo] * xrow[wo + dx]
                        else:
                            for ho in range(ho_lo, ho_hi):
                                grow = gb[ho]
                                xrow = xb[ho * stride + dy]
                                for wo in range(wo_lo, wo_hi):
                                    acc += grow[wo] * xrow[wo * stride + dx]
                        gw[fo, ci, ky, kx] += acc
    return gw


@njit(cache=True)
def thin_subpass(bits, cond):
    h, w = bits.shape
    out = bits.copy()
    deleted = 0
    for y in range(h):
        for x in range(w):
            if bits[y, x] != 1:
                continue
            # 8-neighborhood clockwise from the pixel above; zero padding
            p2 = bits[y - 1, x] if y > 0 else 0
            p3 = bits[y - 1, x + 1] if y > 0 and x + 1 < w else 0
            p4 = bits[y, x + 1] if x + 1 < w else 0
            p5 = bits[y + 1, x + 1] if y + 1 < h and x + 1 < w else 0
            p6 = bits[y + 1, x] if y + 1 < h else 0
            p7 = bits[y + 1, x - 1] if y + 1 < h and x > 0 else 0
            p8 = bits[y, x - 1] if x > 0 else 0
            p9 = bits[y - 1, x - 1] if y > 0 and x > 0 else 0
            count = int(p2) + p3 + p4 + p5 + p6 + p7 + p8 + p9
            if count < 2 or count > 6:
                continue
            trans = 0
            if p2 == 0 and p3 == 1:
                trans += 1
            if p3 == 0 and p4 == 1:
                trans += 1
            if p4 == 0 and p5 == 1:
                trans += 1
            if p5 == 0 and p6 == 1:
                trans += 1
            if p6 == 0 and p7 == 1:
                trans += 1
            if p7 == 0 and p8 == 1:
                trans += 1
            if p8 == 0 and p9 == 1:
                trans += 1
            if p9 == 0 and p2 == 1:
                trans += 1
            if trans != 1:
                continue
            if cond == 0:
                ok = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
            else:
                ok = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
            if ok:
                out[y, x] = 0
                deleted += 1
    return out, deleted
