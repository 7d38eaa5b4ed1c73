"""Training-free fashion editing and virtual try-on toolkit.

The package separates four concerns:

- prompt handling: style/content embeddings that survive garment swaps
  (:mod:`stylefit.embeddings`, :mod:`stylefit.injection`),
- latent-space garment removal by orthogonal projection
  (:mod:`stylefit.removal`),
- region-aware sampling that only re-paints where the user asked
  (:mod:`stylefit.masks`, :mod:`stylefit.sampler`),
- evaluation: geometric/embedding metrics plus an Elo tournament
  (:mod:`stylefit.evalsuite`, :mod:`stylefit.reports`).

Everything runs against a deterministic closed-form mock backend by
default; a real diffusion backend can be plugged in through
:func:`stylefit.backend.load_external_backend`.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .backend import (
    Backend,
    DenoiserConditioning,
    LatentGrid,
    MockBackend,
    NoiseSchedule,
    cosine_schedule,
    derive_seed,
    load_external_backend,
    q_sample,
)
from .config import load_config
from .embeddings import (
    MockImageEncoder,
    MockTextEncoder,
    PromptEmbedding,
    RgbImage,
    compute_style_embedding,
    content_proxy,
    extract_lightness,
    load_image,
    save_image,
)
from .errors import (
    BackendError,
    ConfigError,
    DegenerateInputError,
    InputError,
    JobCancelled,
    OracleError,
    StylefitError,
)
from .evalsuite import (
    EloState,
    MatchOutcome,
    MockJointEncoder,
    StubOracle,
    TournamentReport,
    chamfer_distance,
    content_score,
    elo_update,
    run_tournament,
    sketch_score,
    style_score,
    text_score,
)
from .injection import (
    BlockSensitivityReport,
    InjectionConfig,
    analyze_block_sensitivity,
    build_injection_map,
)
from .masks import GrayMask, RegionSet, compose_region_masks, sketch_to_mask
from .removal import (
    RemovalDirection,
    compute_direction,
    direction_from_garment,
    load_direction,
    orthonormalize,
    remove_item,
    remove_items,
    save_direction,
)
from .sampler import TryOnJobSpec, TryOnResult, run_edit, run_tryon

__all__ = [
    "__version__",
    "Backend",
    "BackendError",
    "BlockSensitivityReport",
    "ConfigError",
    "DegenerateInputError",
    "DenoiserConditioning",
    "EloState",
    "GrayMask",
    "InjectionConfig",
    "InputError",
    "JobCancelled",
    "LatentGrid",
    "MatchOutcome",
    "MockBackend",
    "MockImageEncoder",
    "MockJointEncoder",
    "MockTextEncoder",
    "NoiseSchedule",
    "OracleError",
    "PromptEmbedding",
    "RegionSet",
    "RemovalDirection",
    "RgbImage",
    "StubOracle",
    "StylefitError",
    "TournamentReport",
    "TryOnJobSpec",
    "TryOnResult",
    "analyze_block_sensitivity",
    "build_injection_map",
    "chamfer_distance",
    "compose_region_masks",
    "compute_direction",
    "compute_style_embedding",
    "content_proxy",
    "content_score",
    "cosine_schedule",
    "derive_seed",
    "direction_from_garment",
    "elo_update",
    "extract_lightness",
    "load_config",
    "load_direction",
    "load_external_backend",
    "load_image",
    "orthonormalize",
    "q_sample",
    "remove_item",
    "remove_items",
    "run_edit",
    "run_tournament",
    "run_tryon",
    "save_direction",
    "save_image",
    "sketch_score",
    "sketch_to_mask",
    "style_score",
    "text_score",
]
