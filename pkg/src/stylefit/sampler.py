"""Region-adaptive try-on sampling.

One job stitches the other modules together. The person latent has its
garment signature projected out, the masks carve the latent grid into
synthesis / removal / preserve regions, and each denoising step fuses
two conditional branches with re-noised original content:

    z_{t-1} =   synthesis * denoise(z_t, full conditioning)
              + removal   * denoise(z_t, conditioning minus sketch)
              + preserve  * q_sample(z_removed, t-1)

With no sketch the two branches coincide and the update collapses to
masked denoising plus re-noising. The preserve region therefore ends at
exactly the removed latent: untouched content is untouched.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .backend import Backend, DenoiserConditioning, LatentGrid, derive_seed, q_sample
from .embeddings import (
    ImageEncoder,
    MockImageEncoder,
    MockTextEncoder,
    PromptEmbedding,
    RgbImage,
    TextEncoder,
    compute_style_embedding,
    encode_image_prompt,
    extract_lightness,
    load_image,
)
from .errors import DegenerateInputError, InputError, JobCancelled
from .injection import InjectionConfig
from .masks import GrayMask, RegionSet, compose_region_masks, load_mask, sketch_to_mask
from .removal import direction_from_garment, remove_item

_SCALE_KEYS = ("style", "content", "sketch", "text")
_WIRE_KEYS = (
    "person",
    "garment_mask",
    "sketch",
    "image_prompt",
    "text_prompt",
    "scales",
    "alpha",
    "seed",
    "steps",
)


@dataclass
class TryOnJobSpec:
    """One editing or try-on request. Image fields are file paths."""

    person: str | None = None
    garment_mask: str | None = None
    sketch: str | None = None
    image_prompt: str | None = None
    text_prompt: str | None = None
    style_scale: float = 0.5
    content_scale: float = 0.5
    sketch_scale: float = 0.7
    text_scale: float = 0.5
    alpha: float = 1.0
    seed: int = 0
    steps: int = 50

    def __post_init__(self) -> None:
        problems = []
        for name in ("style_scale", "content_scale", "sketch_scale", "text_scale"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not np.isfinite(v) or v < 0:
                problems.append(f"{name} must be a finite number >= 0")
        if not isinstance(self.alpha, (int, float)) or not 0.0 <= float(self.alpha) <= 1.0:
            problems.append("alpha must lie in [0, 1]")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            problems.append("seed must be a non-negative integer")
        if not isinstance(self.steps, int) or isinstance(self.steps, bool) or self.steps < 1:
            problems.append("steps must be a positive integer")
        if self.sketch is None and self.image_prompt is None and self.text_prompt is None:
            problems.append("at least one of sketch, image_prompt, text_prompt is required")
        if problems:
            raise InputError("invalid job spec: " + "; ".join(problems))

    def to_wire(self) -> dict[str, Any]:
        """Canonical JSON-compatible form (the on-the-wire field names)."""
        return {
            "person": self.person,
            "garment_mask": self.garment_mask,
            "sketch": self.sketch,
            "image_prompt": self.image_prompt,
            "text_prompt": self.text_prompt,
            "scales": {
                "style": float(self.style_scale),
                "content": float(self.content_scale),
                "sketch": float(self.sketch_scale),
                "text": float(self.text_scale),
            },
            "alpha": float(self.alpha),
            "seed": int(self.seed),
            "steps": int(self.steps),
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "TryOnJobSpec":
        unknown = sorted(set(doc) - set(_WIRE_KEYS))
        if unknown:
            raise InputError(f"unknown job spec fields: {unknown}")
        scales = doc.get("scales") or {}
        if not isinstance(scales, Mapping):
            raise InputError("scales must be an object")
        bad_scales = sorted(set(scales) - set(_SCALE_KEYS))
        if bad_scales:
            raise InputError(f"unknown scale fields: {bad_scales}")
        kwargs: dict[str, Any] = {}
        for name in ("person", "garment_mask", "sketch", "image_prompt", "text_prompt"):
            value = doc.get(name)
            if value is not None and not isinstance(value, str):
                raise InputError(f"{name} must be a string path or null")
            kwargs[name] = value
        defaults = cls.__dataclass_fields__

        def as_number(value: Any, label: str) -> float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InputError(f"{label} must be a number, got {value!r}")
            return float(value)

        for key in _SCALE_KEYS:
            fname = f"{key}_scale"
            kwargs[fname] = as_number(scales.get(key, defaults[fname].default), f"scales.{key}")
        kwargs["alpha"] = as_number(doc.get("alpha", defaults["alpha"].default), "alpha")
        seed = doc.get("seed", defaults["seed"].default)
        steps = doc.get("steps", defaults["steps"].default)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise InputError("seed must be an integer")
        if not isinstance(steps, int) or isinstance(steps, bool):
            raise InputError("steps must be an integer")
        kwargs["seed"] = seed
        kwargs["steps"] = steps
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TryOnJobSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"job spec is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("job spec root must be an object")
        return cls.from_wire(doc)


@dataclass
class TryOnResult:
    """Output image plus everything needed to audit the run."""

    image: RgbImage
    final_latent: LatentGrid
    removed_latent: LatentGrid
    regions: RegionSet
    spec: TryOnJobSpec
    steps_run: int
    trajectories: dict[str, list[float]]
    warnings: list[str] = field(default_factory=list)

    def diagnostics(self) -> dict[str, Any]:
        return {
            "steps_run": self.steps_run,
            "region_cells": self.regions.counts(),
            "region_l2_vs_removed": self.trajectories,
            "warnings": list(self.warnings),
        }


def build_sketch_control(
    sketch: RgbImage, factor: int, stroke_threshold: float = 0.5
) -> np.ndarray:
    """Latent-resolution ink-strength map in [0, 1].

    Ink strength rises as stroke luma falls below the threshold, then is
    mean-pooled per cell. Cells without any stroke pixel are exactly 0,
    so the control map can never reach outside the sketch mask.
    """
    if sketch.height % factor or sketch.width % factor:
        raise InputError(f"sketch dimensions must be divisible by {factor}")
    luma = extract_lightness(sketch, "luma")
    ink = np.clip((stroke_threshold - luma) / stroke_threshold, 0.0, 1.0)
    ink[luma >= stroke_threshold] = 0.0
    h, w = sketch.height // factor, sketch.width // factor
    return ink.reshape(h, factor, w, factor).mean(axis=(1, 3))


def _resolve(path: str, root: Path | None) -> Path:
    p = Path(path)
    if not p.is_absolute() and root is not None:
        p = root / p
    return p


def _load_inputs(
    spec: TryOnJobSpec, root: Path | None
) -> tuple[RgbImage, GrayMask | None, RgbImage | None, RgbImage | None]:
    if spec.person is None:
        raise InputError("job spec needs a person image")
    person = load_image(_resolve(spec.person, root))
    garment = load_mask(_resolve(spec.garment_mask, root)) if spec.garment_mask else None
    sketch = load_image(_resolve(spec.sketch, root)) if spec.sketch else None
    prompt = load_image(_resolve(spec.image_prompt, root)) if spec.image_prompt else None
    if garment is not None and garment.values.shape != person.values.shape[:2]:
        raise InputError("garment mask dimensions must match the person image")
    if sketch is not None and sketch.values.shape != person.values.shape:
        raise InputError("sketch dimensions must match the person image")
    return person, garment, sketch, prompt


def run_tryon(
    spec: TryOnJobSpec,
    backend: Backend,
    cfg: Mapping[str, Any],
    *,
    root: Path | None = None,
    image_encoder: ImageEncoder | None = None,
    text_encoder: TextEncoder | None = None,
    progress: Callable[[int, int], None] | None = None,
    should_cancel: Callable[[], bool] | None = None,
) -> TryOnResult:
    """Full try-on: remove the current garment's latent trace, then
    synthesize the masked regions under the requested conditioning."""
    return _run_job(
        spec,
        backend,
        cfg,
        remove_garment=True,
        root=root,
        image_encoder=image_encoder,
        text_encoder=text_encoder,
        progress=progress,
        should_cancel=should_cancel,
    )


def run_edit(
    spec: TryOnJobSpec,
    backend: Backend,
    cfg: Mapping[str, Any],
    *,
    root: Path | None = None,
    image_encoder: ImageEncoder | None = None,
    text_encoder: TextEncoder | None = None,
    progress: Callable[[int, int], None] | None = None,
    should_cancel: Callable[[], bool] | None = None,
) -> TryOnResult:
    """Prompt-driven editing: identical loop, but the original latent is
    kept intact (no garment removal), so masked regions are re-painted
    over the existing content rather than over its removal."""
    return _run_job(
        spec,
        backend,
        cfg,
        remove_garment=False,
        root=root,
        image_encoder=image_encoder,
        text_encoder=text_encoder,
        progress=progress,
        should_cancel=should_cancel,
    )


def _region_l2(diff: np.ndarray, region: np.ndarray) -> float:
    return float(np.sqrt(((diff * region[None, :, :]) ** 2).sum()))


def fuse_regions(
    regions: RegionSet,
    d_full: np.ndarray,
    d_plain: np.ndarray,
    renoised: np.ndarray,
) -> np.ndarray:
    """One fusion step over the region partition:

        synthesis * d_full + removal * d_plain + preserve * renoised

    Because the three regions partition the grid, each cell takes its
    value from exactly one branch. When d_full and d_plain coincide (no
    sketch guidance) the update degenerates to the two-term form
    union * d + preserve * renoised.
    """
    return (
        regions.synthesis[None, :, :] * d_full
        + regions.removal[None, :, :] * d_plain
        + regions.preserve[None, :, :] * renoised
    )


def _run_job(
    spec: TryOnJobSpec,
    backend: Backend,
    cfg: Mapping[str, Any],
    remove_garment: bool,
    root: Path | None,
    image_encoder: ImageEncoder | None,
    text_encoder: TextEncoder | None,
    progress: Callable[[int, int], None] | None,
    should_cancel: Callable[[], bool] | None,
) -> TryOnResult:
    image_encoder = image_encoder if image_encoder is not None else MockImageEncoder()
    text_encoder = text_encoder if text_encoder is not None else MockTextEncoder()
    person, garment, sketch, prompt = _load_inputs(spec, root)
    notes: list[str] = []

    mask_cfg = cfg["mask"]
    sketch_mask = None
    if sketch is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            sketch_mask = sketch_to_mask(
                sketch,
                stroke_threshold=float(mask_cfg["stroke_threshold"]),
                close_radius=int(mask_cfg["close_radius"]),
            )
        notes.extend(str(w.message) for w in caught)
    regions = compose_region_masks(
        garment,
        sketch_mask,
        factor=backend.spatial_factor,
        person_dilation=int(mask_cfg["person_dilation"]),
        pixel_shape=(person.height, person.width),
    )

    z_person = backend.encode(person)
    z_base = z_person
    if remove_garment and garment is not None and garment.coverage > 0:
        try:
            direction = direction_from_garment(person, garment, backend)
            z_base = remove_item(
                z_person, direction, alpha=spec.alpha, mode=str(cfg["removal"]["mode"])
            )
        except DegenerateInputError as exc:
            notes.append(f"garment removal skipped: {exc}")

    if regions.union.sum() == 0:
        notes.append("no region to generate; returning the prepared latent unchanged")
        return TryOnResult(
            image=backend.decode(z_base),
            final_latent=z_base.copy(),
            removed_latent=z_base,
            regions=regions,
            spec=spec,
            steps_run=0,
            trajectories={"synthesis": [], "removal": [], "preserve": []},
            warnings=notes,
        )

    injection = InjectionConfig.from_config(cfg["injection"]).with_scales(
        style_scale=spec.style_scale,
        content_scale=spec.content_scale,
        sketch_scale=spec.sketch_scale,
        text_scale=spec.text_scale,
    )
    style_emb: PromptEmbedding | None = None
    content_emb: PromptEmbedding | None = None
    if prompt is not None:
        cspe = cfg["cspe"]
        style_emb = compute_style_embedding(
            prompt,
            image_encoder,
            sigma_frac=float(cspe["sigma_frac"]),
            lightness_space=str(cspe["lightness_space"]),
        )
        content_emb = encode_image_prompt(prompt, image_encoder)
    text_emb = text_encoder.encode(spec.text_prompt) if spec.text_prompt else None

    control = None
    if sketch is not None:
        control = build_sketch_control(
            sketch, backend.spatial_factor, float(mask_cfg["stroke_threshold"])
        )
    guidance = float(cfg["backend"]["guidance_scale"])
    cond_full = DenoiserConditioning(
        sketch=control,
        style_embedding=style_emb,
        content_embedding=content_emb,
        text_embedding=text_emb,
        injection=injection,
        guidance_scale=guidance,
    )
    if sketch is None:
        cond_plain = cond_full
    else:
        # The removal region must see no sketch guidance. When the sketch
        # is the only modality, an all-zero control map stands in for
        # "none" to keep the conditioning structurally valid.
        no_sketch = None
        if style_emb is None and content_emb is None and text_emb is None:
            no_sketch = np.zeros_like(control)
        cond_plain = DenoiserConditioning(
            sketch=no_sketch,
            style_embedding=style_emb,
            content_embedding=content_emb,
            text_embedding=text_emb,
            injection=injection,
            guidance_scale=guidance,
        )

    steps = int(spec.steps)
    if steps != backend.steps:
        raise InputError(
            f"spec requests {steps} steps but the backend schedule has {backend.steps};"
            " configure backend.steps to match"
        )
    z = q_sample(z_base, steps, backend.schedule, derive_seed(spec.seed, "init"))
    trajectories: dict[str, list[float]] = {"synthesis": [], "removal": [], "preserve": []}
    for t in range(steps, 0, -1):
        if should_cancel is not None and should_cancel():
            raise JobCancelled(f"cancelled before step {t}")
        d_full = backend.denoise_step(z, t, cond_full, derive_seed(spec.seed, "denoise", t))
        if cond_plain is cond_full:
            d_plain = d_full
        else:
            d_plain = backend.denoise_step(z, t, cond_plain, derive_seed(spec.seed, "denoise", t))
        renoised = q_sample(z_base, t - 1, backend.schedule, derive_seed(spec.seed, "renoise", t))
        z = LatentGrid(fuse_regions(regions, d_full.values, d_plain.values, renoised.values))
        diff = z.values - z_base.values
        trajectories["synthesis"].append(_region_l2(diff, regions.synthesis))
        trajectories["removal"].append(_region_l2(diff, regions.removal))
        trajectories["preserve"].append(_region_l2(diff, regions.preserve))
        if progress is not None:
            progress(steps - t + 1, steps)

    return TryOnResult(
        image=backend.decode(z),
        final_latent=z,
        removed_latent=z_base,
        regions=regions,
        spec=spec,
        steps_run=steps,
        trajectories=trajectories,
        warnings=notes,
    )
