"""Glyph dataset ingestion, manifests, splits, and batch sampling.

A manifest is a UTF-8 TSV with lines `path<TAB>font<TAB>split`, LF
endings. Splits are drawn per font with a seeded shuffle; the test
fraction rounds down but never below one file. Batch sampling draws
the two domains through independent per-epoch permutations, so an
epoch visits every image of each domain exactly once and no pairing is
implied.

synth_fonts writes a two-font toy dataset: random polyline "glyphs"
rendered at stroke thickness 1 (font "thin") and the same shapes
dilated to thickness 3 (font "thick"). Shared shape, different style,
so a translation between the fonts has a learnable ground truth.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from skelfont.errors import DataEmpty, EmptyFont, UnreadableFile
from skelfont.imgcore import KIND_GRAY, RasterImage, decode_png, encode_png, image_from_array, resize

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

FONT_THIN = "thin"
FONT_THICK = "thick"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    font: str
    split: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def fonts(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.font not in seen:
                seen.append(e.font)
        return seen

    def for_font(self, font: str, split: str | None = None) -> list[ManifestEntry]:
        return [
            e for e in self.entries
            if e.font == font and (split is None or e.split == split)
        ]


def write_manifest(manifest: Manifest, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in manifest.entries:
            fh.write(f"{e.path}\t{e.font}\t{e.split}\n")


def read_manifest(path) -> Manifest:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            p, font, split = line.split("\t")
            entries.append(ManifestEntry(path=p, font=font, split=split))
    return Manifest(entries=tuple(entries))


def _font_rng(seed: int) -> np.random.Generator:
    # fresh generator per font: fonts with identical file counts get the
    # same permutation, so same-named files land in the same split and
    # test-time pairing by filename stays possible
    return np.random.default_rng(seed)


def build_manifest(root, fonts, split_ratio: float = 0.8, seed: int = 0) -> Manifest:
    """Per-font seeded shuffle, then split; test count = max(1, floor(n*(1-ratio)))."""
    if not (0.0 < split_ratio < 1.0):
        raise ValueError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    entries = []
    for font in fonts:
        font_dir = os.path.join(root, font)
        if not os.path.isdir(font_dir):
            raise EmptyFont(f"no directory for font {font!r} under {root}")
        files = sorted(
            f for f in os.listdir(font_dir) if f.lower().endswith(".png")
        )
        if not files:
            raise EmptyFont(f"font {font!r} has no PNG files")
        for f in files:
            full = os.path.join(font_dir, f)
            if not os.access(full, os.R_OK):
                raise UnreadableFile(full)
        n = len(files)
        # epsilon guards float noise: 10 * (1 - 0.8) must floor to 2, not 1
        n_test = max(1, int(np.floor(n * (1.0 - split_ratio) + 1e-9)))
        perm = _font_rng(seed).permutation(n)
        test_idx = set(int(i) for i in perm[:n_test])
        for i, f in enumerate(files):
            split = SPLIT_TEST if i in test_idx else SPLIT_TRAIN
            entries.append(
                ManifestEntry(path=f"{font}/{f}", font=font, split=split)
            )
    return Manifest(entries=tuple(entries))


def load_entry(root, entry: ManifestEntry, size: int) -> RasterImage:
    full = os.path.join(root, entry.path)
    try:
        with open(full, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UnreadableFile(full) from exc
    return resize(decode_png(raw), size, size)


def epoch_permutation(n: int, seed: int, epoch: int, domain: int) -> np.ndarray:
    """Pure function of (seed, epoch, domain); no shared RNG state."""
    return np.random.default_rng([seed, epoch, domain]).permutation(n)


@dataclass(frozen=True)
class UnpairedBatch:
    batch_x: list
    batch_y: list


def load_batch(manifest: Manifest, root, font_x: str, font_y: str,
               batch_index: int, batch_size: int, size: int, seed: int,
               epoch: int = 0) -> UnpairedBatch:
    """Decode one unpaired training batch under the epoch permutations."""
    ex = manifest.for_font(font_x, SPLIT_TRAIN)
    ey = manifest.for_font(font_y, SPLIT_TRAIN)
    n = min(len(ex), len(ey))
    if n == 0:
        raise DataEmpty(f"no training images for {font_x!r}/{font_y!r}")
    lo = batch_index * batch_size
    if lo >= n:
        raise DataEmpty(f"batch {batch_index} beyond epoch of {n} images")
    hi = min(lo + batch_size, n)
    px = epoch_permutation(len(ex), seed, epoch, 0)[:n]
    py = epoch_permutation(len(ey), seed, epoch, 1)[:n]
    bx = [load_entry(root, ex[int(i)], size) for i in px[lo:hi]]
    by = [load_entry(root, ey[int(i)], size) for i in py[lo:hi]]
    return UnpairedBatch(batch_x=bx, batch_y=by)


@dataclass(frozen=True)
class LoadedDataset:
    """All images of one unpaired task decoded and resized up front."""

    font_x: str
    font_y: str
    train_x: list
    train_y: list
    test_x: list
    test_y: list


def load_dataset(manifest: Manifest, root, font_x: str, font_y: str,
                 size: int) -> LoadedDataset:
    def _load(font, split):
        return [load_entry(root, e, size) for e in manifest.for_font(font, split)]

    ds = LoadedDataset(
        font_x=font_x,
        font_y=font_y,
        train_x=_load(font_x, SPLIT_TRAIN),
        train_y=_load(font_y, SPLIT_TRAIN),
        test_x=_load(font_x, SPLIT_TEST),
        test_y=_load(font_y, SPLIT_TEST),
    )
    if not ds.train_x or not ds.train_y:
        raise DataEmpty(f"empty training split for {font_x!r} or {font_y!r}")
    return ds


def _draw_segment(grid: np.ndarray, p0, p1):
    """Rasterize one 8-connected segment of thickness 1."""
    y0, x0 = p0
    y1, x1 = p1
    steps = max(abs(y1 - y0), abs(x1 - x0)) * 2 + 1
    ys = np.rint(np.linspace(y0, y1, steps)).astype(int)
    xs = np.rint(np.linspace(x0, x1, steps)).astype(int)
    grid[ys, xs] = True


def _random_glyph(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random polyline strokes on a size x size grid; True = ink."""
    grid = np.zeros((size, size), dtype=bool)
    margin = max(2, size // 8)
    n_strokes = int(rng.integers(2, 5))
    for _ in range(n_strokes):
        n_points = int(rng.integers(2, 4))
        pts = rng.integers(margin, size - margin, size=(n_points, 2))
        for a, b in zip(pts[:-1], pts[1:]):
            _draw_segment(grid, a, b)
    if not grid.any():
        grid[size // 2, margin:size - margin] = True
    return grid


def synth_fonts(n_per_font: int, size: int, seed: int, out_dir) -> Manifest:
    """Generate the two-font toy dataset on disk and write its manifest.

    Deterministic from the seed: same seed, byte-identical PNG sets.
    Returns the manifest (also written to out_dir/manifest.tsv).
    """
    if n_per_font < 2:
        raise DataEmpty("need at least 2 glyphs per font")
    rng = np.random.default_rng(seed)
    thin_dir = os.path.join(out_dir, FONT_THIN)
    thick_dir = os.path.join(out_dir, FONT_THICK)
    os.makedirs(thin_dir, exist_ok=True)
    os.makedirs(thick_dir, exist_ok=True)
    structure = np.ones((3, 3), dtype=bool)
    for i in range(n_per_font):
        glyph = _random_glyph(rng, size)
        thick = binary_dilation(glyph, structure=structure)
        for directory, ink in ((thin_dir, glyph), (thick_dir, thick)):
            img = image_from_array(1.0 - ink.astype(np.float32), KIND_GRAY)
            with open(os.path.join(directory, f"{i:04d}.png"), "wb") as fh:
                fh.write(encode_png(img))
    manifest = build_manifest(out_dir, [FONT_THIN, FONT_THICK], 0.8, seed)
    write_manifest(manifest, os.path.join(out_dir, "manifest.tsv"))
    return manifest
