"""Garment removal by latent orthogonal projection.

A garment's latent signature is the difference between encoding the
garment composited onto a white canvas and encoding the canvas alone:

    v = encode(garment_on_white) - encode(white),   u = v / ||v||

Removal then subtracts the person latent's component along u:

    z_removed = z - alpha * (z . u) u

so alpha = 0 is a no-op, alpha = 1 leaves the latent orthogonal to the
garment direction, and the projection coefficient shrinks exactly by
(1 - alpha) in between. Several directions are removed at once by first
orthonormalizing the set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend import Backend, LatentGrid
from .embeddings import RgbImage
from .errors import DegenerateInputError, InputError
from .masks import GrayMask

#: Norms below this make a direction unusable.
DEGENERATE_NORM = 1e-8

#: Directions this parallel to the span of earlier ones are dropped.
DUPLICATE_COSINE = 0.999

_MAGIC = b"SFRD"
_VERSION = 1


@dataclass
class RemovalDirection:
    """A unit direction in latent space plus the norm of the raw
    difference vector it came from (kept for diagnostics)."""

    unit: np.ndarray
    source_norm: float

    def __post_init__(self) -> None:
        self.unit = np.asarray(self.unit, dtype=np.float64)
        if self.unit.ndim != 3:
            raise InputError(f"direction must be 3-D (C, h, w), got shape {self.unit.shape}")
        if not np.isfinite(self.unit).all():
            raise InputError("direction contains non-finite values")
        norm = float(np.linalg.norm(self.unit))
        if abs(norm - 1.0) > 1e-9:
            raise InputError(f"direction must be unit-norm, got {norm}")
        if self.source_norm < DEGENERATE_NORM:
            raise DegenerateInputError(f"source norm {self.source_norm} is degenerate")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.unit.shape)  # type: ignore[return-value]


def compute_direction(garment_on_white: LatentGrid, white_reference: LatentGrid) -> RemovalDirection:
    """Normalized latent difference between the dressed canvas and the
    empty one. Raises DegenerateInputError when the difference vanishes
    (e.g. the garment mask was empty)."""
    if garment_on_white.shape != white_reference.shape:
        raise InputError(
            f"latent shapes disagree: {garment_on_white.shape} vs {white_reference.shape}"
        )
    v = garment_on_white.values - white_reference.values
    norm = float(np.linalg.norm(v))
    if norm < DEGENERATE_NORM:
        raise DegenerateInputError(
            f"garment direction norm {norm:.3e} below {DEGENERATE_NORM}; nothing to remove"
        )
    return RemovalDirection(unit=v / norm, source_norm=norm)


def garment_on_white(person: RgbImage, garment_mask: GrayMask) -> RgbImage:
    """Composite the masked garment pixels onto a white canvas."""
    if garment_mask.values.shape != person.values.shape[:2]:
        raise InputError(
            f"mask shape {garment_mask.values.shape} does not match image {person.values.shape[:2]}"
        )
    keep = garment_mask.to_bool()[:, :, None]
    return RgbImage(np.where(keep, person.values, 1.0))


def direction_from_garment(person: RgbImage, garment_mask: GrayMask, backend: Backend) -> RemovalDirection:
    """Build the removal direction for the garment a person is wearing."""
    composite = garment_on_white(person, garment_mask)
    white = RgbImage(np.ones_like(person.values))
    return compute_direction(backend.encode(composite), backend.encode(white))


def _check_alpha(alpha: float) -> float:
    if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    return float(alpha)


def remove_item(
    z: LatentGrid,
    direction: RemovalDirection,
    alpha: float = 1.0,
    mode: str = "global",
) -> LatentGrid:
    """Project the garment component out of a latent.

    "global" treats the whole latent as one vector; "per_channel"
    renormalizes and projects each channel plane independently (channels
    where the direction vanishes are left alone).
    """
    alpha = _check_alpha(alpha)
    if z.shape != direction.shape:
        raise InputError(f"latent shape {z.shape} does not match direction {direction.shape}")
    if alpha == 0.0:
        return z.copy()
    if mode == "global":
        u = direction.unit
        coeff = float(np.tensordot(z.values, u, axes=3))
        return LatentGrid(z.values - alpha * coeff * u)
    if mode == "per_channel":
        out = z.values.copy()
        for c in range(z.channels):
            plane = direction.unit[c]
            norm = float(np.linalg.norm(plane))
            if norm < DEGENERATE_NORM:
                continue
            u_c = plane / norm
            coeff = float(np.sum(out[c] * u_c))
            out[c] = out[c] - alpha * coeff * u_c
        return LatentGrid(out)
    raise InputError(f"unknown removal mode: {mode!r}")


def orthonormalize(directions: Sequence[RemovalDirection]) -> list[np.ndarray]:
    """Gram-Schmidt over the flattened directions, dropping any whose
    cosine against the span of the kept ones exceeds DUPLICATE_COSINE."""
    basis: list[np.ndarray] = []
    for d in directions:
        r = d.unit.copy()
        for b in basis:
            r -= float(np.tensordot(d.unit, b, axes=3)) * b
        residual = float(np.linalg.norm(r))
        cosine = min(1.0, np.sqrt(max(0.0, 1.0 - residual * residual)))
        if cosine > DUPLICATE_COSINE:
            continue
        basis.append(r / residual)
    return basis


def remove_items(
    z: LatentGrid,
    directions: Sequence[RemovalDirection],
    alpha: float = 1.0,
    mode: str = "global",
) -> LatentGrid:
    """Remove several garments at once.

    The direction set is orthonormalized first so overlapping garments
    are not double-subtracted; near-duplicates are dropped, which makes
    passing the same direction twice equal to passing it once.
    """
    alpha = _check_alpha(alpha)
    if mode != "global":
        raise InputError("multi-direction removal is defined for the global mode")
    for d in directions:
        if d.shape != z.shape:
            raise InputError(f"direction shape {d.shape} does not match latent {z.shape}")
    if alpha == 0.0 or not directions:
        return z.copy()
    out = z.values.copy()
    for b in orthonormalize(directions):
        coeff = float(np.tensordot(out, b, axes=3))
        out -= alpha * coeff * b
    return LatentGrid(out)


# --------------------------------------------------------------------------
# sidecar serialization


def save_direction(direction: RemovalDirection, path: str | Path) -> None:
    """Write a direction sidecar: fixed header (magic, version, shape),
    the source norm, then the unit vector as little-endian float32."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    c, h, w = direction.shape
    header = struct.pack("<4sHHIII", _MAGIC, _VERSION, 0, c, h, w)
    payload = direction.unit.astype("<f4").tobytes()
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_bytes(header + struct.pack("<f", direction.source_norm) + payload)
    tmp.replace(p)


def load_direction(path: str | Path) -> RemovalDirection:
    """Read a direction sidecar. The float32 payload is renormalized on
    load so the unit-norm invariant holds at float64 precision."""
    p = Path(path)
    if not p.is_file():
        raise InputError(f"direction file not found: {p}")
    blob = p.read_bytes()
    head_size = struct.calcsize("<4sHHIII")
    if len(blob) < head_size + 4:
        raise InputError(f"direction file too short: {p}")
    magic, version, _, c, h, w = struct.unpack_from("<4sHHIII", blob)
    if magic != _MAGIC:
        raise InputError(f"not a direction sidecar: {p}")
    if version != _VERSION:
        raise InputError(f"unsupported direction version {version}")
    (norm,) = struct.unpack_from("<f", blob, head_size)
    payload = np.frombuffer(blob, dtype="<f4", offset=head_size + 4)
    if payload.size != c * h * w:
        raise InputError(f"direction payload has {payload.size} values, expected {c * h * w}")
    unit = payload.astype(np.float64).reshape(c, h, w)
    unit_norm = float(np.linalg.norm(unit))
    if unit_norm < DEGENERATE_NORM:
        raise DegenerateInputError("stored direction has vanishing norm")
    return RemovalDirection(unit=unit / unit_norm, source_norm=float(norm))
