"""Exception types shared across the package.

Grouped by the surface that raises them; the CLI maps these onto exit
codes (usage=1, data=2, numerical=3).
"""


class SkelfontError(Exception):
    """Base class for all package errors."""


# --- image ingestion ---

class MalformedImage(SkelfontError):
    """Input bytes are not a decodable PNG."""


class UnsupportedDepth(SkelfontError):
    """PNG bit depth other than 8 (e.g. 16-bit)."""


class UnsupportedChannels(SkelfontError):
    """Channel count not supported by the operation."""


class ChannelMismatch(SkelfontError):
    """Operation applied to an image with the wrong channel count."""


class InvalidThreshold(SkelfontError):
    """Binarization threshold outside (0, 1)."""


class InvalidSize(SkelfontError):
    """Zero or negative target dimension."""


class OutOfBounds(SkelfontError):
    """Pixel coordinate outside the grid."""


# --- tensors and models ---

class ShapeMismatch(SkelfontError):
    """Tensor shapes inconsistent for the requested operation."""


class DegenerateBatch(SkelfontError):
    """Batch statistics undefined (fewer than 2 values per channel)."""


class InvalidSpec(SkelfontError):
    """Model specification violates its invariants."""


# --- training ---

class NonFiniteLoss(SkelfontError):
    """A loss term became NaN or infinite; training aborts."""


class DataEmpty(SkelfontError):
    """Dataset or split contains no usable samples."""


class EmptyFont(SkelfontError):
    """A font directory contains no files."""


class UnreadableFile(SkelfontError):
    """A manifest entry points to a file that cannot be read."""


# --- metrics ---

class ImageTooSmall(SkelfontError):
    """Image smaller than the metric's window."""


class DimensionMismatch(SkelfontError):
    """Feature dimensionalities disagree."""


class NumericalFailure(SkelfontError):
    """A numerical routine left its validity envelope."""
