"""Glyph skeleton extraction by iterative two-subpass thinning.

Boundary foreground pixels are deleted when their 3x3 neighborhood
satisfies a neighbor-count condition, a transition-count condition,
and one of two directional conditions. The two directional variants
alternate as subpasses A and B; within a subpass every deletion is
decided against a frozen snapshot of the grid, so the result does not
depend on scan order. Iteration stops when a full A+B round deletes
nothing, leaving a one-pixel-wide skeleton.

The 3x3 neighborhood is indexed clockwise starting from the pixel
directly above the center:

    p9 p2 p3
    p8 p1 p4
    p7 p6 p5

Out-of-grid neighbors read as 0 (zero padding), so border pixels
participate in thinning like any others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from skelfont import kernels
from skelfont.errors import ChannelMismatch, OutOfBounds
from skelfont.imgcore import BinaryGrid, RasterImage, binarize, to_gray

SUBPASS_A = "A"
SUBPASS_B = "B"


@dataclass(frozen=True)
class PatchStats:
    """Neighborhood summary of a single pixel.

    n: number of foreground neighbors (center excluded).
    p: number of (0,1) pairs in the cyclic sequence p2..p9,p2.
    neighbors: the bits p2..p9 in clockwise order.
    """

    n: int
    p: int
    neighbors: tuple[int, ...]


# clockwise offsets (dy, dx) for p2..p9
_OFFSETS = (
    (-1, 0),   # p2
    (-1, 1),   # p3
    (0, 1),    # p4
    (1, 1),    # p5
    (1, 0),    # p6
    (1, -1),   # p7
    (0, -1),   # p8
    (-1, -1),  # p9
)


def patch_stats(grid: BinaryGrid, x: int, y: int) -> PatchStats:
    """Read the 3x3 neighborhood of (x=column, y=row), zero-padded."""
    if not (0 <= x < grid.width and 0 <= y < grid.height):
        raise OutOfBounds(f"({x}, {y}) outside {grid.width}x{grid.height} grid")
    bits = grid.bits
    nb = []
    for dy, dx in _OFFSETS:
        yy, xx = y + dy, x + dx
        if 0 <= yy < grid.height and 0 <= xx < grid.width:
            nb.append(int(bits[yy, xx]))
        else:
            nb.append(0)
    n = sum(nb)
    p = sum(
        1 for i in range(8) if nb[i] == 0 and nb[(i + 1) % 8] == 1
    )
    return PatchStats(n=n, p=p, neighbors=tuple(nb))


def deletable(stats: PatchStats, subpass: str) -> bool:
    """Deletion predicate for a foreground pixel in the given subpass."""
    if not (2 <= stats.n <= 6 and stats.p == 1):
        return False
    p2, _, p4, _, p6, _, p8, _ = stats.neighbors
    if subpass == SUBPASS_A:
        return p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
    if subpass == SUBPASS_B:
        return p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    raise ValueError(f"subpass must be 'A' or 'B', got {subpass!r}")


def thin(grid: BinaryGrid) -> BinaryGrid:
    """Iterate subpasses A and B until a full round deletes no pixel."""
    bits = np.ascontiguousarray(grid.bits, dtype=np.uint8)
    while True:
        bits, deleted_a = kernels.thin_subpass(bits, 0)
        bits, deleted_b = kernels.thin_subpass(bits, 1)
        if deleted_a + deleted_b == 0:
            break
    return BinaryGrid(width=grid.width, height=grid.height, bits=bits)


def ske(img: RasterImage, threshold: float) -> BinaryGrid:
    """Full skeleton pipeline: grayscale -> binarize -> thin."""
    if img.channels != 3:
        raise ChannelMismatch(f"ske expects an RGB image, got {img.channels} channels")
    return thin(binarize(to_gray(img), threshold))
