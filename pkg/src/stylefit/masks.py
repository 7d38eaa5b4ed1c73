"""Mask ingestion and the three-region partition of the latent grid.

Two pixel-space masks drive a try-on job: the person's garment mask
(arrives as data; segmentation is out of scope) and the sketch mask
(derived from stroke drawings here). Their union, downsampled to latent
resolution, splits every latent cell into exactly one of three regions:

    synthesis  - sketch cells: denoised with full conditioning
    removal    - garment-only cells: denoised without sketch guidance
    preserve   - everything else: re-noised original, never generated

Downsampling is any-coverage (max-pool): a cell is masked when any of
its pixels is, so no pixel marked for change is ever silently frozen.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .embeddings import RgbImage, extract_lightness
from .errors import InputError


class EmptyMaskWarning(UserWarning):
    """A mask operation produced no covered pixels."""


@dataclass
class GrayMask:
    """Binary raster, uint8 values in {0, 1}, shape (H, W)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise InputError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        if not np.isin(arr, (0, 1)).all():
            raise InputError("mask values must be 0 or 1")
        self.values = arr.astype(np.uint8)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def coverage(self) -> int:
        """Number of masked pixels."""
        return int(self.values.sum())

    def to_bool(self) -> np.ndarray:
        return self.values.astype(bool)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "GrayMask":
        return cls(np.zeros(shape, dtype=np.uint8))


def load_mask(path: str | Path) -> GrayMask:
    """Read a mask PNG; pixels at or above half intensity count as masked."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"mask file not found: {p}")
    with Image.open(p) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return GrayMask((arr >= 0.5).astype(np.uint8))


def save_mask(mask: GrayMask, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    Image.fromarray(mask.values * np.uint8(255), mode="L").save(tmp, format="PNG")
    tmp.replace(p)


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def sketch_to_mask(
    sketch: RgbImage,
    stroke_threshold: float = 0.5,
    close_radius: int = 3,
) -> GrayMask:
    """Turn a stroke drawing into the region it encloses.

    Strokes are pixels whose luma falls strictly below the threshold
    (dark ink on a light canvas). A morphological close with a disk of
    ``close_radius`` bridges small gaps so nearly-closed outlines still
    enclose their interior, which is then flood-filled. Stroke pixels
    are always kept, whatever the close does near borders.
    """
    if not 0 < stroke_threshold <= 1:
        raise InputError("stroke_threshold must be in (0, 1]")
    if close_radius < 0:
        raise InputError("close_radius must be >= 0")
    luma = extract_lightness(sketch, "luma")
    strokes = luma < stroke_threshold
    if not strokes.any():
        warnings.warn("sketch contains no strokes; mask is empty", EmptyMaskWarning)
        return GrayMask.empty(strokes.shape)
    closed = strokes
    if close_radius > 0:
        # Dilate so gaps up to ~2*radius become connected, fill the now
        # enclosed interior, then erode back. Plain binary closing cannot
        # bridge gaps in 1-px strokes (the bridge erodes away again), and
        # for an intact convex outline this sequence is an exact no-op.
        selem = _disk(close_radius)
        bridged = ndimage.binary_dilation(strokes, structure=selem)
        closed = ndimage.binary_erosion(
            ndimage.binary_fill_holes(bridged), structure=selem
        )
    filled = ndimage.binary_fill_holes(closed)
    return GrayMask(filled | strokes)


def downsample_mask(mask: GrayMask, factor: int) -> GrayMask:
    """Any-coverage reduction to latent resolution: a latent cell is
    masked iff at least one pixel inside it is."""
    if factor < 1:
        raise InputError("factor must be >= 1")
    if mask.height % factor or mask.width % factor:
        raise InputError(
            f"mask dimensions {mask.height}x{mask.width} must be divisible by {factor}"
        )
    h, w = mask.height // factor, mask.width // factor
    cells = mask.values.reshape(h, factor, w, factor).max(axis=(1, 3))
    return GrayMask(cells)


def dilate_mask(mask: GrayMask, radius: int) -> GrayMask:
    if radius < 0:
        raise InputError("radius must be >= 0")
    if radius == 0:
        return GrayMask(mask.values.copy())
    return GrayMask(ndimage.binary_dilation(mask.to_bool(), structure=_disk(radius)))


@dataclass
class RegionSet:
    """Latent-resolution masks for one job. ``person`` and ``sketch``
    must already be downsampled; ``union`` is always their cell-wise OR,
    and the three derived regions partition the grid."""

    person: np.ndarray
    sketch: np.ndarray
    union: np.ndarray

    def __post_init__(self) -> None:
        for name in ("person", "sketch", "union"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 2:
                raise InputError(f"{name} mask must be 2-D")
            if not np.isin(arr, (0, 1)).all():
                raise InputError(f"{name} mask values must be 0 or 1")
            setattr(self, name, arr.astype(np.uint8))
        if self.person.shape != self.sketch.shape or self.person.shape != self.union.shape:
            raise InputError("region masks must share one shape")
        if not np.array_equal(self.union, self.person | self.sketch):
            raise InputError("union mask must equal person | sketch")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.union.shape)  # type: ignore[return-value]

    @property
    def synthesis(self) -> np.ndarray:
        """Sketch-guided cells."""
        return self.sketch

    @property
    def removal(self) -> np.ndarray:
        """Masked cells outside the sketch: generated without sketch guidance."""
        return self.union & (1 - self.sketch)

    @property
    def preserve(self) -> np.ndarray:
        """Untouched cells: the original latent is re-noised here."""
        return 1 - self.union

    def counts(self) -> dict[str, int]:
        return {
            "synthesis": int(self.synthesis.sum()),
            "removal": int(self.removal.sum()),
            "preserve": int(self.preserve.sum()),
        }


def compose_region_masks(
    person_mask: Optional[GrayMask],
    sketch_mask: Optional[GrayMask],
    factor: int,
    person_dilation: int = 0,
    pixel_shape: tuple[int, int] | None = None,
) -> RegionSet:
    """Downsample pixel masks and assemble the region partition.

    Either mask may be None (treated as empty); ``pixel_shape`` is then
    required to fix the grid. Person-mask dilation, when configured,
    happens at latent resolution after downsampling.
    """
    shapes = {m.values.shape for m in (person_mask, sketch_mask) if m is not None}
    if pixel_shape is not None:
        shapes.add(tuple(pixel_shape))
    if len(shapes) == 0:
        raise InputError("need at least one mask or an explicit pixel_shape")
    if len(shapes) > 1:
        raise InputError(f"mask shapes disagree: {sorted(shapes)}")
    shape = shapes.pop()

    person_px = person_mask if person_mask is not None else GrayMask.empty(shape)
    sketch_px = sketch_mask if sketch_mask is not None else GrayMask.empty(shape)
    person = downsample_mask(person_px, factor)
    if person_dilation > 0:
        person = dilate_mask(person, person_dilation)
    sketch = downsample_mask(sketch_px, factor)
    union = GrayMask(person.values | sketch.values)
    if union.coverage == 0:
        warnings.warn("both masks are empty; nothing will be generated", EmptyMaskWarning)
    return RegionSet(person=person.values, sketch=sketch.values, union=union.values)
