"""Fast end-to-end property checks on the mock backend.

Run via ``stylefit selfcheck``. Every check is deterministic, needs no
network or GPU, and finishes in well under a second; together they
cover the load-bearing invariants of each module so a broken install
fails loudly before any real job is attempted.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .backend import LatentGrid, MockBackend, cosine_schedule, q_sample
from .config import load_config
from .embeddings import MockImageEncoder, RgbImage, compute_style_embedding, save_image
from .evalsuite import (
    EloState,
    MatchOutcome,
    MockJointEncoder,
    chamfer_distance,
    chamfer_distance_bruteforce,
    elo_update,
)
from .injection import InjectionConfig, analyze_block_sensitivity, build_injection_map
from .masks import GrayMask, compose_region_masks, downsample_mask, sketch_to_mask
from .removal import RemovalDirection, compute_direction, remove_item, remove_items
from .sampler import TryOnJobSpec, run_tryon


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _block_constant_image(seed: int, cells: tuple[int, int] = (4, 4), factor: int = 8) -> RgbImage:
    """Random image constant within each factor x factor block, so the
    mock codec round-trips it exactly."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.05, 0.95, size=(*cells, 3))
    return RgbImage(coarse.repeat(factor, axis=0).repeat(factor, axis=1))


def _rect_outline_sketch(size: int = 32, lo: int = 6, hi: int = 25) -> RgbImage:
    canvas = np.ones((size, size, 3))
    canvas[lo : hi + 1, lo : hi + 1] = 0.1
    canvas[lo + 1 : hi, lo + 1 : hi] = 1.0
    return RgbImage(canvas)


def _quadrant_probe(size: int = 32) -> RgbImage:
    colors = [(0.9, 0.2, 0.2), (0.2, 0.3, 0.8), (0.8, 0.7, 0.2), (0.1, 0.6, 0.4)]
    img = np.ones((size, size, 3))
    half = size // 2
    img[:half, :half] = colors[0]
    img[:half, half:] = colors[1]
    img[half:, :half] = colors[2]
    img[half:, half:] = colors[3]
    return RgbImage(img)


# -- individual checks ------------------------------------------------------


def check_codec_round_trip() -> None:
    backend = MockBackend(steps=10)
    image = _block_constant_image(seed=7)
    back = backend.decode(backend.encode(image))
    err = np.abs(back.values - image.values).max()
    assert err <= 1e-6, f"round-trip error {err}"


def check_codec_fixtures() -> None:
    backend = MockBackend(steps=10)
    white = RgbImage(np.ones((32, 32, 3)))
    z_white = backend.encode(white)
    assert np.allclose(z_white.values, 1.0, atol=1e-12), "white must encode to all-ones"
    gray = RgbImage(np.full((32, 32, 3), 0.5))
    assert np.allclose(backend.encode(gray).values, 0.0, atol=1e-12), "mid-gray must encode to zeros"


def check_schedule() -> None:
    sched = cosine_schedule(50)
    assert abs(sched.alpha_bar[0] - 1.0) <= 1e-6
    assert (np.diff(sched.alpha_bar) < 0).all(), "alpha_bar must strictly decrease"
    assert sched.alpha_bar[-1] > 0


def check_q_sample_identity_and_determinism() -> None:
    sched = cosine_schedule(10)
    z0 = LatentGrid(np.random.default_rng(3).standard_normal((4, 4, 4)))
    assert np.array_equal(q_sample(z0, 0, sched, 1).values, z0.values), "t=0 must be exact"
    a = q_sample(z0, 5, sched, 42).values
    b = q_sample(z0, 5, sched, 42).values
    assert np.array_equal(a, b), "same seed must reproduce the same noise"


def check_removal_properties() -> None:
    backend = MockBackend(steps=10)
    person = _block_constant_image(seed=11)
    z = backend.encode(person)
    rng = np.random.default_rng(5)
    v = rng.standard_normal(z.shape)
    d = RemovalDirection(unit=v / np.linalg.norm(v), source_norm=float(np.linalg.norm(v)))
    assert np.array_equal(remove_item(z, d, alpha=0.0).values, z.values), "alpha=0 must be a no-op"
    removed = remove_item(z, d, alpha=1.0)
    resid = abs(float(np.tensordot(removed.values, d.unit, axes=3)))
    assert resid <= 1e-6 * np.linalg.norm(z.values), f"alpha=1 residual {resid}"
    coeff = float(np.tensordot(z.values, d.unit, axes=3))
    half = remove_item(z, d, alpha=0.5)
    got = float(np.tensordot(half.values, d.unit, axes=3))
    assert abs(got - 0.5 * coeff) <= 1e-9 * max(1.0, abs(coeff)), "residual law broken"
    once = remove_items(z, [d], alpha=1.0)
    twice = remove_items(z, [d, d], alpha=1.0)
    assert np.allclose(once.values, twice.values, atol=1e-12), "duplicate direction must drop"


def check_mask_partition() -> None:
    rng = np.random.default_rng(9)
    person = GrayMask((rng.random((32, 32)) < 0.3).astype(np.uint8))
    sketch = GrayMask((rng.random((32, 32)) < 0.2).astype(np.uint8))
    regions = compose_region_masks(person, sketch, factor=8)
    total = regions.synthesis + regions.removal + regions.preserve
    assert (total == 1).all(), "regions must partition the grid"
    single = np.zeros((8, 8), dtype=np.uint8)
    single[3, 3] = 1
    down = downsample_mask(GrayMask(single), 8)
    assert down.values.shape == (1, 1) and down.values[0, 0] == 1, "any-coverage downsample"


def check_sketch_fill() -> None:
    mask = sketch_to_mask(_rect_outline_sketch(), stroke_threshold=0.5, close_radius=3)
    assert mask.values[15, 15] == 1, "outline interior must be filled"
    assert mask.values[2, 2] == 0, "outside must stay unmasked"


def check_preserve_region_and_determinism(tmp: Path) -> None:
    cfg = load_config(overrides={"backend": {"steps": 10}})
    person = _block_constant_image(seed=21)
    garment = np.zeros((32, 32), dtype=np.uint8)
    garment[8:24, 8:24] = 1
    save_image(person, tmp / "person.png")
    from .masks import save_mask

    save_mask(GrayMask(garment), tmp / "garment.png")
    spec = TryOnJobSpec(
        person="person.png",
        garment_mask="garment.png",
        text_prompt="denim jacket",
        steps=10,
        seed=3,
    )
    backend = MockBackend(steps=10)
    r1 = run_tryon(spec, backend, cfg, root=tmp)
    r2 = run_tryon(spec, backend, cfg, root=tmp)
    assert np.array_equal(r1.image.values, r2.image.values), "same spec+seed must reproduce"
    pre = r1.regions.preserve.astype(bool)
    diff = np.abs(r1.final_latent.values - r1.removed_latent.values)[:, pre].max()
    assert diff <= 1e-6, f"preserve region drifted by {diff}"


def check_zero_scale_erasure(tmp: Path) -> None:
    cfg = load_config(overrides={"backend": {"steps": 10}})
    person = _block_constant_image(seed=23)
    prompt = _quadrant_probe()
    save_image(person, tmp / "p2.png")
    save_image(prompt, tmp / "prompt.png")
    garment = np.zeros((32, 32), dtype=np.uint8)
    garment[0:16, 0:16] = 1
    from .masks import save_mask

    save_mask(GrayMask(garment), tmp / "g2.png")
    backend = MockBackend(steps=10)
    base = dict(person="p2.png", garment_mask="g2.png", text_prompt="velvet", steps=10, seed=5)
    with_prompt = TryOnJobSpec(
        **base, image_prompt="prompt.png", style_scale=0.0, content_scale=0.0
    )
    without = TryOnJobSpec(**base, style_scale=0.0, content_scale=0.0)
    out_a = run_tryon(with_prompt, backend, cfg, root=tmp)
    out_b = run_tryon(without, backend, cfg, root=tmp)
    assert np.array_equal(out_a.image.values, out_b.image.values), "zero scales must erase the prompt"


def check_injection_map_linearity() -> None:
    enc = MockImageEncoder()
    prompt = _quadrant_probe()
    style = compute_style_embedding(prompt, enc)
    cfg1 = InjectionConfig(style_scale=0.5)
    cfg2 = InjectionConfig(style_scale=1.0)
    m1 = build_injection_map(cfg1, style_embedding=style)
    m2 = build_injection_map(cfg2, style_embedding=style)
    b = cfg1.style_blocks[0]
    assert np.allclose(m2[b].image, 2.0 * m1[b].image), "style entries must scale linearly"


def check_block_recovery() -> None:
    backend = MockBackend.with_reference_block_profile(steps=10)
    joint = MockJointEncoder()
    joint.register("patterned", np.array([0.0, 0.0, 0.0, 1.0, 0.0]))
    report = analyze_block_sensitivity(
        [_quadrant_probe()], ["patterned"], backend, MockImageEncoder(), joint, seed=0
    )
    style, content = report.recommend(n_style=1, n_content=3)
    assert style == (7,), f"expected style block (7,), got {style}"
    assert content == (3, 4, 6), f"expected content blocks (3, 4, 6), got {content}"


def check_chamfer_and_elo() -> None:
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    assert chamfer_distance(a, a) == 0.0
    assert abs(chamfer_distance(a, b) - 5.0) <= 1e-12
    rng = np.random.default_rng(2)
    for _ in range(5):
        pa = rng.uniform(0, 20, size=(rng.integers(1, 40), 2))
        pb = rng.uniform(0, 20, size=(rng.integers(1, 40), 2))
        assert chamfer_distance(pa, pb) == chamfer_distance_bruteforce(pa, pb), "tree != brute force"
    state = EloState.fresh(["a", "b"])
    state = elo_update(state, MatchOutcome("a", "b", "a"))
    assert state.rating("a") == 1016.0 and state.rating("b") == 984.0, "elo fixture"


ALL_CHECKS: list[tuple[str, Callable[..., None]]] = [
    ("codec round trip", check_codec_round_trip),
    ("codec fixtures", check_codec_fixtures),
    ("noise schedule", check_schedule),
    ("q_sample identity and determinism", check_q_sample_identity_and_determinism),
    ("removal properties", check_removal_properties),
    ("mask partition and downsampling", check_mask_partition),
    ("sketch outline fill", check_sketch_fill),
    ("preserve region and determinism", check_preserve_region_and_determinism),
    ("zero-scale prompt erasure", check_zero_scale_erasure),
    ("injection map linearity", check_injection_map_linearity),
    ("block sensitivity recovery", check_block_recovery),
    ("chamfer and elo fixtures", check_chamfer_and_elo),
]


def run_selfcheck() -> list[CheckResult]:
    results: list[CheckResult] = []
    with tempfile.TemporaryDirectory(prefix="stylefit-selfcheck-") as tmp:
        tmp_path = Path(tmp)
        for name, fn in ALL_CHECKS:
            try:
                if fn.__code__.co_argcount:
                    fn(tmp_path)
                else:
                    fn()
                results.append(CheckResult(name, True))
            except AssertionError as exc:
                results.append(CheckResult(name, False, str(exc)))
            except Exception as exc:  # noqa: BLE001 - report, don't crash the suite
                results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
