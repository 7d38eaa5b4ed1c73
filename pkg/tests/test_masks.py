"""Mask handling: sketch rasterization, pooling, and the region partition."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylefit.embeddings import RgbImage
from stylefit.errors import InputError
from stylefit.masks import (
    EmptyMaskWarning,
    GrayMask,
    RegionSet,
    compose_region_masks,
    dilate_mask,
    downsample_mask,
    load_mask,
    save_mask,
    sketch_to_mask,
)

from conftest import outline_sketch


# --------------------------------------------------------------------------
# GrayMask basics


def test_mask_values_must_be_binary() -> None:
    with pytest.raises(InputError):
        GrayMask(np.full((4, 4), 2, dtype=np.uint8))
    with pytest.raises(InputError):
        GrayMask(np.zeros(4, dtype=np.uint8))


def test_mask_coverage_and_empty() -> None:
    m = GrayMask.empty((3, 5))
    assert m.coverage == 0
    assert m.values.shape == (3, 5)
    arr = np.zeros((3, 5), dtype=np.uint8)
    arr[1, 2] = 1
    assert GrayMask(arr).coverage == 1


def test_mask_file_round_trip(tmp_path) -> None:
    rng = np.random.default_rng(0)
    mask = GrayMask((rng.random((16, 16)) < 0.4).astype(np.uint8))
    path = tmp_path / "m.png"
    save_mask(mask, path)
    assert np.array_equal(load_mask(path).values, mask.values)


# --------------------------------------------------------------------------
# sketch rasterization


def test_closed_outline_is_filled() -> None:
    mask = sketch_to_mask(outline_sketch(lo=20, hi=44))
    # Interior far from the strokes is inside the region.
    assert mask.values[32, 32] == 1
    # Stroke pixels themselves are in the region.
    assert mask.values[20, 30] == 1
    # Outside the outline stays out.
    assert mask.values[5, 5] == 0
    assert mask.values[60, 60] == 0


def test_small_gap_is_bridged_by_closing() -> None:
    sketch = outline_sketch(lo=20, hi=44)
    broken = sketch.values.copy()
    broken[20, 30:33, :] = 1.0  # 3-px gap on the top edge
    mask = sketch_to_mask(RgbImage(broken), close_radius=3)
    assert mask.values[32, 32] == 1


def test_wide_gap_defeats_the_fill() -> None:
    sketch = outline_sketch(lo=20, hi=44)
    broken = sketch.values.copy()
    broken[20, 24:40, :] = 1.0  # 16-px gap: disk(3) cannot bridge it
    mask = sketch_to_mask(RgbImage(broken), close_radius=3)
    assert mask.values[32, 32] == 0
    # The remaining strokes are still marked.
    assert mask.values[30, 20] == 1


def test_blank_sketch_warns_and_returns_empty() -> None:
    blank = RgbImage(np.ones((32, 32, 3)))
    with pytest.warns(EmptyMaskWarning):
        mask = sketch_to_mask(blank)
    assert mask.coverage == 0


def test_sketch_threshold_validation() -> None:
    sketch = outline_sketch()
    with pytest.raises(InputError):
        sketch_to_mask(sketch, stroke_threshold=0.0)
    with pytest.raises(InputError):
        sketch_to_mask(sketch, stroke_threshold=1.5)
    with pytest.raises(InputError):
        sketch_to_mask(sketch, close_radius=-1)


def test_strokes_survive_even_without_closing() -> None:
    mask = sketch_to_mask(outline_sketch(lo=20, hi=44), close_radius=0)
    assert mask.values[20, 30] == 1


# --------------------------------------------------------------------------
# pooling to latent resolution


def test_downsample_requires_divisible_shape() -> None:
    with pytest.raises(InputError):
        downsample_mask(GrayMask.empty((10, 10)), factor=4)
    with pytest.raises(InputError):
        downsample_mask(GrayMask.empty((8, 8)), factor=0)


def test_single_pixel_marks_its_cell() -> None:
    """A lone pixel at (3, 3) lands in latent cell (0, 0) and nowhere else."""
    arr = np.zeros((8, 8), dtype=np.uint8)
    arr[3, 3] = 1
    down = downsample_mask(GrayMask(arr), factor=4)
    expected = np.zeros((2, 2), dtype=np.uint8)
    expected[0, 0] = 1
    assert np.array_equal(down.values, expected)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_downsampling_is_conservative(seed: int) -> None:
    """No pixel is lost: a cell is marked iff it contains a marked pixel."""
    rng = np.random.default_rng(seed)
    factor = int(rng.choice([2, 4, 8]))
    cells = int(rng.integers(2, 9))
    px = (rng.random((cells * factor, cells * factor)) < 0.05).astype(np.uint8)
    down = downsample_mask(GrayMask(px), factor)
    pooled = px.reshape(cells, factor, cells, factor).max(axis=(1, 3))
    assert np.array_equal(down.values, pooled)


def test_dilation_grows_by_radius() -> None:
    arr = np.zeros((9, 9), dtype=np.uint8)
    arr[4, 4] = 1
    grown = dilate_mask(GrayMask(arr), radius=1)
    # A radius-1 disk is a cross: the four edge neighbours, not corners.
    cross = np.zeros((9, 9), dtype=np.uint8)
    cross[4, 3:6] = 1
    cross[3:6, 4] = 1
    assert np.array_equal(grown.values, cross)
    assert np.array_equal(dilate_mask(GrayMask(arr), radius=0).values, arr)
    # radius 2 reaches the diagonal neighbours too.
    assert dilate_mask(GrayMask(arr), radius=2).values[3:6, 3:6].all()


# --------------------------------------------------------------------------
# the three-region partition


def random_region_set(rng: np.random.Generator) -> RegionSet:
    shape = (int(rng.integers(2, 12)), int(rng.integers(2, 12)))
    person = (rng.random(shape) < 0.5).astype(np.uint8)
    sketch = (rng.random(shape) < 0.4).astype(np.uint8)
    return RegionSet(person=person, sketch=sketch, union=person | sketch)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_regions_partition_the_grid(seed: int) -> None:
    regions = random_region_set(np.random.default_rng(seed))
    s, r, p = regions.synthesis, regions.removal, regions.preserve
    # Pairwise disjoint ...
    assert not (s & r).any()
    assert not (s & p).any()
    assert not (r & p).any()
    # ... and together they cover every cell exactly once.
    assert np.array_equal(s + r + p, np.ones(regions.shape, dtype=np.uint8))
    # Synthesis-or-removal is exactly the union.
    assert np.array_equal(s | r, regions.union)
    # Synthesis is the sketch itself; removal is garment-only cells.
    assert np.array_equal(s, regions.sketch)
    assert np.array_equal(r, regions.person & ~regions.sketch & 1)


def test_region_set_validation() -> None:
    person = np.ones((2, 2), dtype=np.uint8)
    sketch = np.zeros((2, 2), dtype=np.uint8)
    with pytest.raises(InputError):
        RegionSet(person=person, sketch=sketch, union=sketch)  # union mismatch
    with pytest.raises(InputError):
        RegionSet(person=person, sketch=np.zeros((3, 3), dtype=np.uint8), union=person)
    with pytest.raises(InputError):
        RegionSet(person=person * 3, sketch=sketch, union=person * 3)


def test_region_counts() -> None:
    person = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    sketch = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    regions = RegionSet(person=person, sketch=sketch, union=person | sketch)
    assert regions.counts() == {"synthesis": 2, "removal": 1, "preserve": 1}


# --------------------------------------------------------------------------
# composition from pixel masks


def test_compose_downsamples_both_masks() -> None:
    person_px = np.zeros((16, 16), dtype=np.uint8)
    person_px[0:8, 0:8] = 1
    sketch_px = np.zeros((16, 16), dtype=np.uint8)
    sketch_px[4:12, 4:12] = 1
    regions = compose_region_masks(GrayMask(person_px), GrayMask(sketch_px), factor=4)
    assert regions.shape == (4, 4)
    assert np.array_equal(regions.person, np.array(
        [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=np.uint8))
    assert np.array_equal(regions.sketch, np.array(
        [[0, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 0]], dtype=np.uint8))


def test_compose_shape_disagreement_rejected() -> None:
    with pytest.raises(InputError):
        compose_region_masks(GrayMask.empty((8, 8)), GrayMask.empty((16, 16)), factor=4)
    with pytest.raises(InputError):
        compose_region_masks(None, None, factor=4)
    with pytest.raises(InputError):
        compose_region_masks(GrayMask.empty((8, 8)), None, factor=4, pixel_shape=(16, 16))


def test_compose_with_missing_masks_and_warning() -> None:
    with pytest.warns(EmptyMaskWarning):
        regions = compose_region_masks(None, None, factor=4, pixel_shape=(8, 8))
    assert regions.shape == (2, 2)
    assert regions.counts() == {"synthesis": 0, "removal": 0, "preserve": 4}


def test_compose_person_dilation_at_latent_resolution() -> None:
    person_px = np.zeros((32, 32), dtype=np.uint8)
    person_px[12:20, 12:20] = 1  # one latent cell at factor 8... (cells 1..2)
    regions = compose_region_masks(GrayMask(person_px), None, factor=8, person_dilation=1)
    undilated = compose_region_masks(GrayMask(person_px), None, factor=8)
    assert regions.person.sum() > undilated.person.sum()
    # Dilation acts on latent cells: a radius-1 disk (a cross) grows the
    # 2x2 core by its four edge neighbours on each side, not the corners.
    assert undilated.person.sum() == 4
    assert regions.person.sum() == 12
