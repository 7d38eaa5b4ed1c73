"""Shared factories for test inputs.

Images are built block-constant (constant within each spatial_factor
cell) wherever a test needs the codec round trip to be lossless; sketch
factories draw closed dark outlines whose stroke geometry is easy to
reason about at latent resolution.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from stylefit.embeddings import RgbImage, save_image


def block_constant_image(rng: np.random.Generator, cells: int = 8, factor: int = 8) -> RgbImage:
    """Random image constant within each factor x factor block."""
    coarse = rng.uniform(0.15, 0.85, size=(cells, cells, 3))
    return RgbImage(coarse.repeat(factor, axis=0).repeat(factor, axis=1))


def outline_sketch(
    size: int = 64,
    lo: int = 20,
    hi: int = 44,
    ink: float = 0.05,
) -> RgbImage:
    """White canvas with a dark rectangle outline from lo to hi (exclusive)."""
    s = np.ones((size, size, 3))
    s[lo:hi, lo, :] = ink
    s[lo:hi, hi - 1, :] = ink
    s[lo, lo:hi, :] = ink
    s[hi - 1, lo:hi, :] = ink
    return RgbImage(s)


def square_mask_image(size: int = 64, lo: int = 8, hi: int = 48) -> RgbImage:
    """Black canvas with a white square: loads as a garment mask."""
    m = np.zeros((size, size, 3))
    m[lo:hi, lo:hi, :] = 1.0
    return RgbImage(m)


def quadrant_image(size: int = 64) -> RgbImage:
    """Four flat colored quadrants; chromatic and structured."""
    img = np.zeros((size, size, 3))
    h = size // 2
    img[:h, :h] = [0.8, 0.2, 0.2]
    img[:h, h:] = [0.2, 0.7, 0.3]
    img[h:, :h] = [0.2, 0.3, 0.8]
    img[h:, h:] = [0.8, 0.7, 0.2]
    return RgbImage(img)


@pytest.fixture
def job_inputs(tmp_path: Path) -> dict[str, Path]:
    """A standard set of job input files with all three regions nonempty.

    At factor 8 on a 64x64 image (8x8 latent): the garment mask covers
    cells rows/cols 1..5, the sketch outline covers the border cells of
    rows/cols 2..4, so removal (garment minus sketch) and preserve are
    both nonempty alongside synthesis.
    """
    rng = np.random.default_rng(1234)
    person = block_constant_image(rng)
    paths = {
        "person": tmp_path / "person.png",
        "garment": tmp_path / "garment.png",
        "sketch": tmp_path / "sketch.png",
        "prompt": tmp_path / "prompt.png",
    }
    save_image(person, paths["person"])
    save_image(square_mask_image(lo=8, hi=48), paths["garment"])
    save_image(outline_sketch(lo=17, hi=39), paths["sketch"])
    save_image(quadrant_image(), paths["prompt"])
    return paths
