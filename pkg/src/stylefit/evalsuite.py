"""Evaluation metrics, judge oracles, and Elo tournaments.

Geometry: a symmetric Chamfer distance between the sketch strokes and
the edge map of the generated region says how well strokes were
followed. Embedding cosines score style fidelity (against the prompt's
style residual) and text fidelity (against a joint image-text encoder).
Pairwise judgments, from an HTTP vision-language judge or a
deterministic stub, feed an Elo ladder replayed over several match
orderings so the reported ratings carry an order-sensitivity spread.
"""

from __future__ import annotations

import base64
import itertools
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .embeddings import (
    ImageEncoder,
    MockImageEncoder,
    RgbImage,
    compute_style_embedding,
    extract_lightness,
)
from .errors import InputError, OracleError
from .masks import GrayMask

DEFAULT_CRITERIA = ("multimodal faithfulness", "identity preservation", "visual realism")

_ZERO_NORM = 1e-12


def _as_points(points: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"{name} must have shape (n, 2), got {arr.shape}")
    if arr.shape[0] == 0:
        raise InputError(f"{name} must contain at least one point")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains non-finite coordinates")
    return arr


def _min_dists_brute(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff**2).sum(axis=2)).min(axis=1)


def _min_dists_tree(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dists, _ = cKDTree(b).query(a, k=1)
    return np.asarray(dists, dtype=np.float64)


def _chamfer(a: np.ndarray, b: np.ndarray, min_dists) -> float:
    return 0.5 * (float(min_dists(a, b).mean()) + float(min_dists(b, a).mean()))


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean Chamfer distance between two 2-D point sets:

        0.5 * [ mean_a min_b ||a-b||  +  mean_b min_a ||b-a|| ]

    Nearest neighbors come from a k-d tree; ``chamfer_distance_bruteforce``
    is the quadratic reference the tree path must agree with exactly.
    """
    a = _as_points(a, "point set a")
    b = _as_points(b, "point set b")
    return _chamfer(a, b, _min_dists_tree)


def chamfer_distance_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    """O(|a|*|b|) reference implementation of ``chamfer_distance``."""
    a = _as_points(a, "point set a")
    b = _as_points(b, "point set b")
    return _chamfer(a, b, _min_dists_brute)


# --------------------------------------------------------------------------
# image-derived point sets


def extract_edge_points(
    image: RgbImage,
    region: GrayMask | None = None,
    percentile: float = 90.0,
) -> np.ndarray:
    """(row, col) coordinates of strong edges inside ``region``.

    Edge strength is the Sobel gradient magnitude of luma; the threshold
    is the given percentile of strengths within the region, so "strong"
    adapts to however much texture the region holds.
    """
    if not 0 <= percentile <= 100:
        raise InputError("percentile must be in [0, 100]")
    luma = extract_lightness(image, "luma")
    gy = ndimage.sobel(luma, axis=0, mode="reflect")
    gx = ndimage.sobel(luma, axis=1, mode="reflect")
    magnitude = np.hypot(gy, gx)
    if region is not None:
        if region.values.shape != luma.shape:
            raise InputError("region mask shape must match the image")
        inside = region.to_bool()
    else:
        inside = np.ones_like(luma, dtype=bool)
    if not inside.any():
        return np.zeros((0, 2), dtype=np.float64)
    threshold = np.percentile(magnitude[inside], percentile)
    return np.argwhere((magnitude >= threshold) & inside).astype(np.float64)


def extract_stroke_points(sketch: RgbImage, stroke_threshold: float = 0.5) -> np.ndarray:
    """(row, col) coordinates of sketch stroke pixels (luma below threshold)."""
    luma = extract_lightness(sketch, "luma")
    return np.argwhere(luma < stroke_threshold).astype(np.float64)


def sketch_score(
    generated: RgbImage,
    sketch: RgbImage,
    region: GrayMask | None = None,
    percentile: float = 90.0,
    stroke_threshold: float = 0.5,
) -> float | None:
    """Chamfer distance between sketch strokes and generated edges
    (lower is better). None when either point set is empty; the caller
    decides what an undefined score means for its report."""
    strokes = extract_stroke_points(sketch, stroke_threshold)
    edges = extract_edge_points(generated, region, percentile)
    if strokes.shape[0] == 0 or edges.shape[0] == 0:
        warnings.warn("sketch_score undefined: empty stroke or edge set", stacklevel=2)
        return None
    return chamfer_distance(strokes, edges)


def _cosine(u: np.ndarray, v: np.ndarray) -> float | None:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu < _ZERO_NORM or nv < _ZERO_NORM:
        return None
    return float(np.dot(u, v) / (nu * nv))


def style_score(
    generated: RgbImage,
    prompt: RgbImage,
    region: GrayMask | None = None,
    encoder: ImageEncoder | None = None,
    sigma_frac: float = 0.05,
    lightness_space: str = "cielab",
) -> float | None:
    """Cosine between pooled style residuals of the generated region and
    the prompt. The region is composited onto white before encoding so
    surrounding content cannot leak into the comparison. None when a
    residual has no norm (e.g. a grayscale region has no style signal).
    """
    encoder = encoder if encoder is not None else MockImageEncoder()
    target = generated
    if region is not None:
        if region.values.shape != generated.values.shape[:2]:
            raise InputError("region mask shape must match the generated image")
        keep = region.to_bool()[:, :, None]
        target = RgbImage(np.where(keep, generated.values, 1.0))
    e_gen = compute_style_embedding(
        target, encoder, sigma_frac=sigma_frac, lightness_space=lightness_space
    )
    e_prompt = compute_style_embedding(
        prompt, encoder, sigma_frac=sigma_frac, lightness_space=lightness_space
    )
    score = _cosine(e_gen.pooled(), e_prompt.pooled())
    if score is None:
        warnings.warn("style_score undefined: a style residual has zero norm", stacklevel=2)
    return score


class JointEncoder(Protocol):
    def embed_image(self, image: RgbImage) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def text_score(image: RgbImage, text: str, joint: JointEncoder) -> float | None:
    """Image-text cosine similarity scaled by 100."""
    if not text.strip():
        raise InputError("text must be non-empty")
    score = _cosine(joint.embed_image(image), joint.embed_text(text))
    if score is None:
        warnings.warn("text_score undefined: zero-norm embedding", stacklevel=2)
        return None
    return 100.0 * score


def content_score(image: RgbImage, words: Sequence[str], joint: JointEncoder) -> float | None:
    """Mean text score over the prompt's content words."""
    if not words:
        raise InputError("words must be non-empty")
    scores = [text_score(image, w, joint) for w in words]
    if any(s is None for s in scores):
        return None
    return float(np.mean([s for s in scores if s is not None]))


@dataclass
class MockJointEncoder:
    """Deterministic joint space for tests: image features are chroma
    means, luminance spread, and mean luminance; text maps to a stable
    pseudo-random vector unless a direction was registered for it."""

    registered: dict[str, np.ndarray] = field(default_factory=dict)

    FEATURES = ("chroma_r", "chroma_g", "chroma_b", "lum_spread", "lum_mean")

    @property
    def dim(self) -> int:
        return len(self.FEATURES)

    def register(self, text: str, vector: np.ndarray) -> None:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dim,):
            raise InputError(f"registered vector must have shape ({self.dim},)")
        self.registered[text] = v

    def embed_image(self, image: RgbImage) -> np.ndarray:
        channel_means = image.values.reshape(-1, 3).mean(axis=0)
        chroma = channel_means - channel_means.mean()
        lum = extract_lightness(image, "luma")
        return np.array([*chroma, float(lum.std()), float(lum.mean()) - 0.5])

    def embed_text(self, text: str) -> np.ndarray:
        if text in self.registered:
            return self.registered[text].copy()
        from .embeddings import _stable_seed

        rng = np.random.default_rng(_stable_seed("joint-text", text))
        return rng.standard_normal(self.dim)


# --------------------------------------------------------------------------
# Elo ladder


@dataclass(frozen=True)
class MatchOutcome:
    """One judged comparison. ``result`` is "a", "b", or "tie"."""

    method_a: str
    method_b: str
    result: str
    criterion: str = ""
    example: str = ""

    def __post_init__(self) -> None:
        if self.result not in ("a", "b", "tie"):
            raise InputError(f"result must be 'a', 'b', or 'tie', got {self.result!r}")
        if self.method_a == self.method_b:
            raise InputError("a match needs two distinct methods")


@dataclass(frozen=True)
class EloState:
    """Immutable ratings snapshot; updates return a new state."""

    ratings: Mapping[str, float]
    k_factor: float = 32.0
    initial_rating: float = 1000.0
    n_updates: int = 0

    @classmethod
    def fresh(
        cls, methods: Iterable[str], k_factor: float = 32.0, initial_rating: float = 1000.0
    ) -> "EloState":
        return cls(
            ratings={m: float(initial_rating) for m in methods},
            k_factor=float(k_factor),
            initial_rating=float(initial_rating),
        )

    def rating(self, method: str) -> float:
        return float(self.ratings.get(method, self.initial_rating))

    def expected(self, method_a: str, method_b: str) -> float:
        """Probability-like expected score of a against b."""
        ra, rb = self.rating(method_a), self.rating(method_b)
        return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


def elo_update(state: EloState, outcome: MatchOutcome) -> EloState:
    """Apply one match. A single shared delta moves both ratings, so the
    rating sum is conserved to float rounding no matter the history."""
    scores = {"a": 1.0, "b": 0.0, "tie": 0.5}
    s_a = scores[outcome.result]
    e_a = state.expected(outcome.method_a, outcome.method_b)
    delta = state.k_factor * (s_a - e_a)
    ratings = dict(state.ratings)
    ratings[outcome.method_a] = state.rating(outcome.method_a) + delta
    ratings[outcome.method_b] = state.rating(outcome.method_b) - delta
    return EloState(
        ratings=ratings,
        k_factor=state.k_factor,
        initial_rating=state.initial_rating,
        n_updates=state.n_updates + 1,
    )


# --------------------------------------------------------------------------
# judge oracles

DEFAULT_JUDGE_TEMPLATE = """You are comparing two candidate edits of the same source image.
Criterion: {criterion}.
Answer with exactly one word: "a" if the first image is better,
"b" if the second is better, or "tie" if neither is clearly better."""


class JudgeOracle(Protocol):
    def judge(self, image_a: Path, image_b: Path, criterion: str) -> str: ...


@dataclass
class StubOracle:
    """Deterministic judge for tests and offline runs.

    mode "first" always prefers the first image, "tie" never decides,
    "coin" flips a seeded 50/50 coin per call.
    """

    mode: str = "coin"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("first", "tie", "coin"):
            raise InputError(f"unknown stub mode {self.mode!r}")
        self._rng = np.random.default_rng(self.seed)

    def judge(self, image_a: Path, image_b: Path, criterion: str) -> str:
        if self.mode == "first":
            return "a"
        if self.mode == "tie":
            return "tie"
        return "a" if self._rng.integers(0, 2) == 0 else "b"


@dataclass
class HttpJudgeOracle:
    """Client for a vision-language judge service.

    Sends the meta-prompt plus both images (base64 PNG) as JSON and
    expects {"verdict": "a" | "b" | "tie"}. Transient failures retry
    with exponential backoff; a still-failing match raises OracleError
    so the tournament can record the skip instead of inventing data.
    """

    endpoint: str
    template: str = DEFAULT_JUDGE_TEMPLATE
    model: str | None = None
    api_key: str | None = None
    retries: int = 3
    backoff_seconds: float = 0.5
    timeout_seconds: float = 60.0

    @classmethod
    def from_config(cls, section: Mapping[str, Any]) -> "HttpJudgeOracle":
        import os

        endpoint = section.get("endpoint")
        if not endpoint:
            raise InputError("oracle.endpoint is not configured")
        template = DEFAULT_JUDGE_TEMPLATE
        if section.get("template_path"):
            template = Path(section["template_path"]).read_text()
        api_key = None
        if section.get("api_key_env"):
            api_key = os.environ.get(str(section["api_key_env"]))
        return cls(
            endpoint=str(endpoint),
            template=template,
            model=section.get("model"),
            api_key=api_key,
            retries=int(section.get("retries", 3)),
            backoff_seconds=float(section.get("backoff_seconds", 0.5)),
            timeout_seconds=float(section.get("timeout_seconds", 60.0)),
        )

    def judge(self, image_a: Path, image_b: Path, criterion: str) -> str:
        import requests

        payload = {
            "model": self.model,
            "prompt": self.template.format(criterion=criterion),
            "criterion": criterion,
            "image_a": base64.b64encode(Path(image_a).read_bytes()).decode("ascii"),
            "image_b": base64.b64encode(Path(image_b).read_bytes()).decode("ascii"),
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout_seconds
                )
                response.raise_for_status()
                verdict = str(response.json().get("verdict", "")).strip().lower()
                if verdict in ("a", "b", "tie"):
                    return verdict
                last_error = OracleError(f"judge returned malformed verdict {verdict!r}")
            except Exception as exc:  # noqa: BLE001 - every failure is retryable here
                last_error = exc
            if attempt < self.retries:
                time.sleep(self.backoff_seconds * (2.0**attempt))
        raise OracleError(f"judge failed after {self.retries + 1} attempts: {last_error}")


# --------------------------------------------------------------------------
# tournaments


@dataclass
class TournamentReport:
    """Round-robin results: final ratings averaged over several replay
    orders of the same outcome multiset, with per-method spread."""

    mean_ratings: dict[str, float]
    std_ratings: dict[str, float]
    outcomes: list[MatchOutcome]
    skipped: list[dict[str, str]]
    n_shuffles: int
    k_factor: float
    initial_rating: float

    def state(self) -> EloState:
        return EloState(
            ratings=dict(self.mean_ratings),
            k_factor=self.k_factor,
            initial_rating=self.initial_rating,
            n_updates=len(self.outcomes),
        )


def _aligned_examples(methods: Mapping[str, Path]) -> list[str]:
    common: set[str] | None = None
    for name, directory in methods.items():
        d = Path(directory)
        if not d.is_dir():
            raise InputError(f"method {name!r} directory not found: {d}")
        files = {p.name for p in d.glob("*.png")}
        common = files if common is None else (common & files)
    if not common:
        raise InputError("method directories share no example images")
    return sorted(common)


def run_tournament(
    methods: Mapping[str, str | Path],
    oracle: JudgeOracle,
    criteria: Sequence[str] = DEFAULT_CRITERIA,
    n_shuffles: int = 8,
    seed: int = 0,
    k_factor: float = 32.0,
    initial_rating: float = 1000.0,
) -> TournamentReport:
    """Judge every method pair on every shared example and criterion,
    then replay the outcome multiset in ``n_shuffles`` seeded orders.

    Elo is order-sensitive; averaging over orderings (and reporting the
    spread) keeps a lucky early winning streak from looking like skill.
    """
    if len(methods) < 2:
        raise InputError("a tournament needs at least two methods")
    if n_shuffles < 1:
        raise InputError("n_shuffles must be >= 1")
    dirs = {name: Path(p) for name, p in methods.items()}
    examples = _aligned_examples(dirs)

    outcomes: list[MatchOutcome] = []
    skipped: list[dict[str, str]] = []
    for example in examples:
        for name_a, name_b in itertools.combinations(sorted(dirs), 2):
            for criterion in criteria:
                try:
                    verdict = oracle.judge(dirs[name_a] / example, dirs[name_b] / example, criterion)
                except OracleError as exc:
                    skipped.append(
                        {
                            "example": example,
                            "method_a": name_a,
                            "method_b": name_b,
                            "criterion": criterion,
                            "reason": str(exc),
                        }
                    )
                    continue
                outcomes.append(
                    MatchOutcome(
                        method_a=name_a,
                        method_b=name_b,
                        result=verdict,
                        criterion=criterion,
                        example=example,
                    )
                )

    finals = {name: np.zeros(n_shuffles) for name in dirs}
    for s in range(n_shuffles):
        rng = np.random.default_rng([seed, 7919 + s])
        state = EloState.fresh(sorted(dirs), k_factor=k_factor, initial_rating=initial_rating)
        for idx in rng.permutation(len(outcomes)):
            state = elo_update(state, outcomes[idx])
        for name in dirs:
            finals[name][s] = state.rating(name)

    return TournamentReport(
        mean_ratings={name: float(vals.mean()) for name, vals in finals.items()},
        std_ratings={name: float(vals.std()) for name, vals in finals.items()},
        outcomes=outcomes,
        skipped=skipped,
        n_shuffles=n_shuffles,
        k_factor=k_factor,
        initial_rating=initial_rating,
    )


# --------------------------------------------------------------------------
# results manifest


def write_manifest(rows: Iterable[Mapping[str, Any]], path: str | Path) -> None:
    """Append-friendly JSONL: one metrics record per line."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(dict(row), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[dict[str, Any]]:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"manifest not found: {p}")
    rows = []
    for i, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise InputError(f"manifest line {i} is not valid JSON: {exc}") from exc
    return rows


def aggregate_manifest(rows: Sequence[Mapping[str, Any]]) -> dict[str, dict[str, float]]:
    """Per-method means of every numeric metric column; null metrics
    (undefined scores) are excluded from their mean, not zeroed."""
    buckets: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        method = str(row.get("method", "unknown"))
        bucket = buckets.setdefault(method, {})
        for key, value in row.items():
            if key in ("method", "example") or value is None:
                continue
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                bucket.setdefault(key, []).append(float(value))
    return {
        method: {metric: float(np.mean(vals)) for metric, vals in metrics.items() if vals}
        for method, metrics in buckets.items()
    }
