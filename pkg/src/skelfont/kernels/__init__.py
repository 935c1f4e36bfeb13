"""Hot numeric kernels with two interchangeable backends.

The numpy backend routes convolutions through im2col + BLAS matmuls;
the numba backend JIT-compiles explicit loops. Both compute the same
functions:

    conv2d_forward(x, w, stride, pad)            -> y
    conv2d_input_grad(gy, w, stride, pad, h, w)  -> gx
    conv2d_weight_grad(x, gy, stride, pad, k)    -> gw
    thin_subpass(bits, cond)                     -> (bits', n_deleted)

Selection: set SKELFONT_BACKEND=numba or SKELFONT_BACKEND=numpy before
import; unset defaults to numpy, which benchmarks faster on the
BLAS-shaped convolution work (see benchmarks/bench_kernels.py --
thinning is where the JIT loops win). Results agree bit-exactly for
thinning (integer logic) and to float rounding for the conv kernels
(different summation orders).
"""

import os

_choice = os.environ.get("SKELFONT_BACKEND", "").strip().lower()
if _choice not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"SKELFONT_BACKEND must be 'numba' or 'numpy', got {_choice!r}"
    )

if _choice == "numba":
    from skelfont.kernels import numba_backend as _active
else:
    from skelfont.kernels import numpy_backend as _active

BACKEND = _active.NAME

conv2d_forward = _active.conv2d_forward
conv2d_input_grad = _active.conv2d_input_grad
conv2d_weight_grad = _active.conv2d_weight_grad
thin_subpass = _active.thin_subpass
