"""Pure-numpy kernel implementations.

Convolutions go through im2col/col2im so the heavy lifting lands in a
single BLAS matmul per call. Thinning is fully vectorized over the
grid.
"""

import numpy as np

NAME = "numpy"


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _padded(x, pad):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[:, :, pad:pad + h, pad:pad + w] = x
    return out


def _im2col(xp, k, stride, h_out, w_out):
    """(N*Hout*Wout, C*k*k) patch matrix from the padded input."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, h_out, w_out, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )
    return np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h_out * w_out, c * k * k
    )


def conv2d_forward(x, w, stride, pad):
    n, c, h, wi = x.shape
    f = w.shape[0]
    k = w.shape[2]
    h_out = _out_size(h, k, stride, pad)
    w_out = _out_size(wi, k, stride, pad)
    mat = _im2col(_padded(x, pad), k, stride, h_out, w_out)
    y = mat @ w.reshape(f, c * k * k).T
    return np.ascontiguousarray(
        y.reshape(n, h_out, w_out, f).transpose(0, 3, 1, 2)
    )


def conv2d_input_grad(gy, w, stride, pad, h, wi):
    # input gradient as a dilated full convolution with the flipped,
    # channel-swapped weight; one GEMM instead of k*k scatter passes.
    # full[y'] covers gx[y' - pad], so slice at offset pad and zero-fill
    # any bottom/right rows the kernel never reached.
    n, f, h_out, w_out = gy.shape
    c = w.shape[1]
    k = w.shape[2]
    if stride > 1:
        hd = (h_out - 1) * stride + 1
        wd = (w_out - 1) * stride + 1
        gyd = np.zeros((n, f, hd, wd), dtype=gy.dtype)
        gyd[:, :, ::stride, ::stride] = gy
    else:
        gyd = gy
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    full = conv2d_forward(gyd, wt, 1, k - 1)
    avail_h = min(h, full.shape[2] - pad)
    avail_w = min(wi, full.shape[3] - pad)
    if avail_h == h and avail_w == wi:
        return np.ascontiguousarray(full[:, :, pad:pad + h, pad:pad + wi])
    gx = np.zeros((n, c, h, wi), dtype=gy.dtype)
    gx[:, :, :avail_h, :avail_w] = full[:, :, pad:pad + avail_h, pad:pad + avail_w]
    return gx


def conv2d_weight_grad(x, gy, stride, pad, k):
    n, c, h, wi = x.shape
    f, h_out, w_out = gy.shape[1], gy.shape[2], gy.shape[3]
    mat = _im2col(_padded(x, pad), k, stride, h_out, w_out)
    gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(
        n * h_out * w_out, f
    )
    return (gmat.T @ mat).reshape(f, c, k, k)


def thin_subpass(bits, cond):
    """One deletion sweep against a frozen snapshot of the grid.

    bits: uint8 {0,1} array (H, W), 1 = foreground. cond selects the
    directional deletion condition (0 or 1). Out-of-grid neighbors
    read as 0. Returns the new grid and the number of deleted pixels.
    """
    g = np.zeros((bits.shape[0] + 2, bits.shape[1] + 2), dtype=np.int32)
    g[1:-1, 1:-1] = bits
    p2 = g[:-2, 1:-1]
    p3 = g[:-2, 2:]
    p4 = g[1:-1, 2:]
    p5 = g[2:, 2:]
    p6 = g[2:, 1:-1]
    p7 = g[2:, :-2]
    p8 = g[1:-1, :-2]
    p9 = g[:-2, :-2]
    seq = (p2, p3, p4, p5, p6, p7, p8, p9)
    count = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    trans = np.zeros_like(count)
    for i in range(8):
        trans += (seq[i] == 0) & (seq[(i + 1) % 8] == 1)
    if cond == 0:
        extra = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        extra = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    delete = (bits == 1) & (count >= 2) & (count <= 6) & (trans == 1) & extra
    out = np.where(delete, 0, bits).astype(np.uint8)
    return out, int(delete.sum())
