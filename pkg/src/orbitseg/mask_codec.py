"""Categorical masks as 8-bit palette-indexed PNGs.

Index data is preserved bit-exactly; the embedded palette mirrors the
taxonomy display colors so the files are human-viewable. Decoding verifies
the stored palette against the taxonomy, because silent palette drift is
the classic way segmentation labels get corrupted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .taxonomy import ClassTaxonomy, TaxonomyError, color_to_index


class MaskCodecError(ValueError):
    pass


@dataclass(frozen=True)
class CategoricalMask:
    """Row-major class-index image, 8-bit."""

    data: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.dtype != np.uint8:
            raise MaskCodecError("mask data must be a 2-D uint8 array")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def validate(self, taxonomy: ClassTaxonomy) -> None:
        top = int(self.data.max()) if self.data.size else 0
        if top >= taxonomy.num_classes:
            raise MaskCodecError(
                f"mask contains index {top} but taxonomy has {taxonomy.num_classes} classes")


def _padded_palette(taxonomy: ClassTaxonomy) -> list[int]:
    # PNG palettes hold 256 entries; unused rows are zero
    pal = np.zeros((256, 3), dtype=np.uint8)
    pal[: taxonomy.num_classes] = taxonomy.palette()
    return pal.reshape(-1).tolist()


def encode_mask(mask: CategoricalMask, taxonomy: ClassTaxonomy, path: str | Path) -> None:
    """Write an indexed-color PNG; palette row k is taxonomy color k."""
    mask.validate(taxonomy)  # never write a file with out-of-range indices
    img = Image.fromarray(mask.data, mode="L").convert("P")
    img.putpalette(_padded_palette(taxonomy))
    img.save(Path(path), format="PNG", bits=8)


def decode_mask(path: str | Path, taxonomy: ClassTaxonomy) -> CategoricalMask:
    """Read an indexed-color PNG back to indices, verifying the palette."""
    path = Path(path)
    with Image.open(path) as img:
        if img.mode != "P":
            raise MaskCodecError(f"{path}: not an indexed-color image (mode {img.mode})")
        stored = img.getpalette()
        data = np.asarray(img, dtype=np.uint8)
    if stored is not None:
        stored = np.array(stored, dtype=np.uint8).reshape(-1, 3)
        k = taxonomy.num_classes
        if len(stored) < k or not np.array_equal(stored[:k], taxonomy.palette()):
            raise MaskCodecError(
                f"{path}: embedded palette does not match taxonomy display colors")
    mask = CategoricalMask(data=data)
    if mask.data.size and int(mask.data.max()) >= taxonomy.num_classes:
        raise MaskCodecError(
            f"{path}: index {int(mask.data.max())} out of range for "
            f"{taxonomy.num_classes}-class taxonomy")
    return mask


def mask_to_rgb(mask: CategoricalMask, taxonomy: ClassTaxonomy) -> np.ndarray:
    """Paint a mask with its taxonomy colors; (H, W, 3) uint8."""
    mask.validate(taxonomy)
    return taxonomy.palette()[mask.data]


def rgb_to_mask(rgb: np.ndarray, taxonomy: ClassTaxonomy) -> CategoricalMask:
    """Convert a flat-colored RGB label image to indices (exact color match)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise MaskCodecError("rgb image must be (H, W, 3)")
    rgb = rgb.astype(np.uint8)
    h, w = rgb.shape[:2]
    out = np.zeros((h, w), dtype=np.uint8)
    # one lookup per distinct color; unknown colors reported at their first pixel
    flat = rgb.reshape(-1, 3)
    colors, inverse = np.unique(flat, axis=0, return_inverse=True)
    lut = np.zeros(len(colors), dtype=np.uint8)
    for ci, color in enumerate(colors):
        key = (int(color[0]), int(color[1]), int(color[2]))
        try:
            lut[ci] = color_to_index(taxonomy, key)
        except TaxonomyError:
            where = int(np.argmax(inverse == ci))
            raise MaskCodecError(
                f"unknown color {key} at pixel (row {where // w}, col {where % w})") from None
    out = lut[inverse].reshape(h, w)
    return CategoricalMask(data=out)
