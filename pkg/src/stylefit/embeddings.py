"""Image prompts and content-subtractive style embeddings.

The style of an image prompt is isolated by subtracting the embedding of
a content proxy from the embedding of the image itself:

    e_style = phi(i) - phi(blur(lightness(i)))

The proxy keeps the prompt's spatial layout (its content) but discards
color and fine texture, so the residual carries mostly style. Any
encoder phi that maps an image to a fixed-length token sequence works;
a deterministic mock is provided for tests and the self-check suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InputError

# Rec. 709 luma weights (applied to nonlinear channels).
_LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

# Precise sRGB/D65 luminance row (applied to linearized channels).
_SRGB_Y_WEIGHTS = np.array([0.2126729, 0.7151522, 0.0721750])


@dataclass
class RgbImage:
    """An RGB raster with float values in [0, 1], shape (H, W, 3)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise InputError(f"image must have shape (H, W, 3), got {self.values.shape}")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise InputError("image must contain at least one pixel")
        if not np.isfinite(self.values).all():
            raise InputError("image contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise InputError("image values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    def copy(self) -> "RgbImage":
        return RgbImage(self.values.copy())


@dataclass
class PromptEmbedding:
    """A token sequence (n_tokens, dim) produced by an encoder.

    ``kind`` records how the embedding was produced ("image", "text",
    "style_residual") for diagnostics only; no operation branches on it.
    """

    tokens: np.ndarray
    kind: str = "image"

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise InputError(f"embedding tokens must be 2-D, got shape {self.tokens.shape}")
        if not np.isfinite(self.tokens).all():
            raise InputError("embedding contains non-finite values")

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])

    def pooled(self) -> np.ndarray:
        """Mean over tokens, shape (dim,)."""
        return self.tokens.mean(axis=0)

    def scaled(self, scale: float) -> "PromptEmbedding":
        return PromptEmbedding(self.tokens * float(scale), kind=self.kind)


class ImageEncoder(Protocol):
    def encode(self, image: RgbImage) -> PromptEmbedding: ...


class TextEncoder(Protocol):
    def encode(self, text: str) -> PromptEmbedding: ...


# --------------------------------------------------------------------------
# image I/O


def load_image(path: str | Path) -> RgbImage:
    """Read an 8-bit PNG (or any Pillow-readable raster) as RgbImage."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"image file not found: {p}")
    with Image.open(p) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return RgbImage(arr)


def save_image(image: RgbImage, path: str | Path) -> None:
    """Write an 8-bit RGB PNG. Writes are atomic (temp file + rename)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.rint(image.values * 255.0), 0, 255).astype(np.uint8)
    tmp = p.with_name(p.name + ".tmp")
    Image.fromarray(arr, mode="RGB").save(tmp, format="PNG")
    tmp.replace(p)


# --------------------------------------------------------------------------
# lightness and blur


def extract_lightness(image: RgbImage, space: str = "cielab") -> np.ndarray:
    """Per-pixel lightness in [0, 1], shape (H, W).

    "cielab" is CIE L* under D65, rescaled from [0, 100]; "luma" is the
    Rec. 709 weighted sum of the nonlinear channels.
    """
    rgb = image.values
    if space == "luma":
        return rgb @ _LUMA_WEIGHTS
    if space != "cielab":
        raise InputError(f"unknown lightness space: {space!r}")
    # sRGB electro-optical transfer, then Y, then the L* cube-root law.
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    y = linear @ _SRGB_Y_WEIGHTS
    delta = 6.0 / 29.0
    fy = np.where(y > delta**3, np.cbrt(y), y / (3 * delta**2) + 4.0 / 29.0)
    lstar = 116.0 * fy - 16.0
    return np.clip(lstar / 100.0, 0.0, 1.0)


def blur_lightness(lightness: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with reflective boundary handling.

    Reflection keeps the blur mean-preserving: a symmetric extension
    convolved with a symmetric kernel leaves the per-image mean intact
    up to float rounding.
    """
    lightness = np.asarray(lightness, dtype=np.float64)
    if lightness.ndim != 2:
        raise InputError(f"lightness map must be 2-D, got shape {lightness.shape}")
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    if sigma == 0:
        return lightness.copy()
    return ndimage.gaussian_filter(lightness, sigma=sigma, mode="reflect")


def content_proxy(
    image: RgbImage,
    sigma: float | None = None,
    sigma_frac: float = 0.05,
    lightness_space: str = "cielab",
) -> RgbImage:
    """The blurred-lightness stand-in whose embedding is subtracted.

    When ``sigma`` is not given it defaults to sigma_frac * min(H, W).
    The single blurred channel is replicated to RGB so the proxy can go
    through the same encoder as the prompt itself.
    """
    if sigma is None:
        sigma = sigma_frac * min(image.height, image.width)
    gray = blur_lightness(extract_lightness(image, lightness_space), sigma)
    gray = np.clip(gray, 0.0, 1.0)
    return RgbImage(np.repeat(gray[:, :, None], 3, axis=2))


def compute_style_embedding(
    image: RgbImage,
    encoder: ImageEncoder,
    sigma: float | None = None,
    sigma_frac: float = 0.05,
    lightness_space: str = "cielab",
) -> PromptEmbedding:
    """Token-wise residual embedding phi(image) - phi(proxy)."""
    proxy = content_proxy(image, sigma=sigma, sigma_frac=sigma_frac, lightness_space=lightness_space)
    a = encoder.encode(image)
    b = encoder.encode(proxy)
    if a.tokens.shape != b.tokens.shape:
        raise InputError(
            f"encoder produced mismatched token shapes {a.tokens.shape} vs {b.tokens.shape}"
        )
    return PromptEmbedding(a.tokens - b.tokens, kind="style_residual")


def encode_image_prompt(image: RgbImage, encoder: ImageEncoder) -> PromptEmbedding:
    """Full (content-bearing) embedding of an image prompt."""
    emb = encoder.encode(image)
    return PromptEmbedding(emb.tokens, kind="image")


# --------------------------------------------------------------------------
# deterministic mock encoders


def _region_slices(h: int, w: int) -> list[tuple[slice, slice]]:
    hy, wx = max(1, h // 2), max(1, w // 2)
    return [
        (slice(0, h), slice(0, w)),      # global
        (slice(0, hy), slice(0, wx)),    # top-left
        (slice(0, hy), slice(wx, w) if wx < w else slice(0, w)),
        (slice(hy, h) if hy < h else slice(0, h), slice(0, wx)),
        (slice(hy, h) if hy < h else slice(0, h), slice(wx, w) if wx < w else slice(0, w)),
    ]


@dataclass
class MockImageEncoder:
    """Tokens are per-region channel means: one global token plus one per
    quadrant, each of dimension 3. Linear in the pixel values, so tests
    can derive expected embeddings by hand."""

    def encode(self, image: RgbImage) -> PromptEmbedding:
        tokens = [image.values[ys, xs].reshape(-1, 3).mean(axis=0) for ys, xs in _region_slices(image.height, image.width)]
        return PromptEmbedding(np.stack(tokens), kind="image")


def _stable_seed(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class MockTextEncoder:
    """Maps text to a fixed pseudo-random token grid, stable across runs
    and processes (seeded from a content hash, not the builtin hash)."""

    n_tokens: int = 4
    dim: int = 3

    def encode(self, text: str) -> PromptEmbedding:
        rng = np.random.default_rng(_stable_seed("text", text))
        return PromptEmbedding(rng.standard_normal((self.n_tokens, self.dim)), kind="text")
