import numpy as np
import pytest

from skelfont.imgcore import KIND_GRAY, KIND_RGB, image_from_array


def rgb_image(arr):
    """(H, W, 3) array in [0,1] -> RasterImage."""
    return image_from_array(np.asarray(arr, dtype=np.float32), KIND_RGB)


def gray_image(arr):
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return image_from_array(arr, KIND_GRAY)


def bar_glyph(height=9, width=15, bar_rows=(3, 4, 5), ink=0.0):
    """White glyph image with a horizontal bar of black ink."""
    arr = np.ones((height, width, 3), dtype=np.float32)
    for r in bar_rows:
        arr[r, 2:width - 2, :] = ink
    return rgb_image(arr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
