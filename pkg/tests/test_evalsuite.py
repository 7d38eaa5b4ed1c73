"""Metrics and tournaments: Chamfer, scores, Elo, oracles, manifests."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from stylefit.embeddings import RgbImage
from stylefit.errors import InputError, OracleError
from stylefit.evalsuite import (
    EloState,
    HttpJudgeOracle,
    MatchOutcome,
    MockJointEncoder,
    StubOracle,
    aggregate_manifest,
    chamfer_distance,
    chamfer_distance_bruteforce,
    content_score,
    elo_update,
    extract_edge_points,
    extract_stroke_points,
    read_manifest,
    run_tournament,
    sketch_score,
    style_score,
    text_score,
    write_manifest,
)
from stylefit.masks import GrayMask

from conftest import outline_sketch, quadrant_image


# --------------------------------------------------------------------------
# Chamfer distance


def test_chamfer_identical_sets_is_zero() -> None:
    pts = np.array([[0.0, 0.0], [2.0, 3.0], [5.0, 1.0]])
    assert chamfer_distance(pts, pts) == 0.0
    assert chamfer_distance_bruteforce(pts, pts) == 0.0


def test_chamfer_single_pair_fixture() -> None:
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    assert chamfer_distance(a, b) == 5.0
    assert chamfer_distance_bruteforce(a, b) == 5.0


def test_chamfer_two_to_one_fixture() -> None:
    a = np.array([[0.0, 0.0], [10.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    expected = 0.5 * ((1.0 + np.sqrt(101.0)) / 2.0 + 1.0)
    got = chamfer_distance(a, b)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(3.2624, abs=1e-4)
    assert got == chamfer_distance_bruteforce(a, b)


def test_chamfer_is_symmetric() -> None:
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 50, size=(17, 2))
    b = rng.uniform(0, 50, size=(9, 2))
    assert chamfer_distance(a, b) == chamfer_distance(b, a)


def test_tree_path_matches_brute_force_exactly() -> None:
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = rng.uniform(0, 100, size=(int(rng.integers(1, 201)), 2))
        b = rng.uniform(0, 100, size=(int(rng.integers(1, 201)), 2))
        assert chamfer_distance(a, b) == chamfer_distance_bruteforce(a, b)


def test_chamfer_input_validation() -> None:
    good = np.array([[0.0, 0.0]])
    with pytest.raises(InputError):
        chamfer_distance(np.zeros((0, 2)), good)
    with pytest.raises(InputError):
        chamfer_distance(good, np.zeros((3, 3)))
    with pytest.raises(InputError):
        chamfer_distance(np.array([[np.nan, 0.0]]), good)


# --------------------------------------------------------------------------
# point extraction and the sketch score


def dotted_sketch(coords: list[tuple[int, int]], size: int = 64) -> RgbImage:
    canvas = np.ones((size, size, 3))
    for r, c in coords:
        canvas[r, c, :] = 0.0
    return RgbImage(canvas)


def mask_at(coords: list[tuple[int, int]], size: int = 64) -> GrayMask:
    m = np.zeros((size, size), dtype=np.uint8)
    for r, c in coords:
        m[r, c] = 1
    return GrayMask(m)


def test_stroke_points_are_the_dark_pixels() -> None:
    coords = [(10, 10), (10, 40), (40, 10)]
    pts = extract_stroke_points(dotted_sketch(coords))
    assert sorted(map(tuple, pts.tolist())) == sorted((float(r), float(c)) for r, c in coords)


def test_edge_points_respect_the_region() -> None:
    region = mask_at([(10, 10), (20, 20)])
    pts = extract_edge_points(quadrant_image(), region=region, percentile=0.0)
    assert sorted(map(tuple, pts.tolist())) == [(10.0, 10.0), (20.0, 20.0)]
    empty = extract_edge_points(quadrant_image(), region=GrayMask.empty((64, 64)))
    assert empty.shape == (0, 2)


def test_edge_points_validation() -> None:
    with pytest.raises(InputError):
        extract_edge_points(quadrant_image(), percentile=101.0)
    with pytest.raises(InputError):
        extract_edge_points(quadrant_image(), region=GrayMask.empty((8, 8)))


def test_edge_points_find_a_step_boundary() -> None:
    img = np.ones((16, 16, 3))
    img[:, :8, :] = 0.0
    pts = extract_edge_points(RgbImage(img), percentile=90.0)
    assert pts.shape[0] > 0
    cols = {c for _, c in map(tuple, pts.tolist())}
    assert cols <= {7.0, 8.0}


def test_sketch_score_zero_when_edges_equal_strokes() -> None:
    """Restricting edge extraction to exactly the stroke pixels (percentile
    0 accepts everything inside the region) makes both point sets equal."""
    coords = [(10, 10), (10, 40), (40, 10)]
    sketch = dotted_sketch(coords)
    score = sketch_score(sketch, sketch, region=mask_at(coords), percentile=0.0)
    assert score == 0.0


def test_sketch_score_translated_isolated_points() -> None:
    coords = [(10, 10), (10, 40), (40, 10)]
    shifted = [(r + 3, c + 4) for r, c in coords]
    score = sketch_score(
        dotted_sketch(coords), dotted_sketch(coords), region=mask_at(shifted), percentile=0.0
    )
    assert score == pytest.approx(5.0, abs=1e-12)


def test_sketch_score_undefined_cases_warn_and_return_none() -> None:
    blank = RgbImage(np.ones((32, 32, 3)))
    with pytest.warns(UserWarning, match="undefined"):
        assert sketch_score(quadrant_image(32), blank) is None
    with pytest.warns(UserWarning, match="undefined"):
        assert (
            sketch_score(
                quadrant_image(32),
                dotted_sketch([(5, 5)], size=32),
                region=GrayMask.empty((32, 32)),
            )
            is None
        )


# --------------------------------------------------------------------------
# style score


def test_style_score_self_similarity_is_one() -> None:
    img = quadrant_image()
    assert style_score(img, img) == pytest.approx(1.0, abs=1e-12)


def test_style_score_styleless_region_is_undefined() -> None:
    # White is a fixed point of the content proxy in every lightness
    # space, so a pure-white candidate has a zero style residual.
    white = RgbImage(np.ones((32, 32, 3)))
    with pytest.warns(UserWarning, match="undefined"):
        assert style_score(white, quadrant_image(32)) is None
    # In luma space any uniform gray is styleless too.
    gray = RgbImage(np.full((32, 32, 3), 0.5))
    with pytest.warns(UserWarning, match="undefined"):
        assert style_score(gray, quadrant_image(32), lightness_space="luma") is None


def test_style_score_region_composites_onto_white() -> None:
    rng = np.random.default_rng(2)
    prompt = quadrant_image(32)
    inside = np.zeros((32, 32), dtype=np.uint8)
    inside[8:24, 8:24] = 1
    keep = inside.astype(bool)[:, :, None]
    generated = RgbImage(np.where(keep, prompt.values, rng.uniform(0, 1, (32, 32, 3))))
    masked = style_score(generated, prompt, region=GrayMask(inside))
    manual = RgbImage(np.where(keep, prompt.values, 1.0))
    assert masked == style_score(manual, prompt)


def test_style_score_region_shape_mismatch() -> None:
    with pytest.raises(InputError):
        style_score(quadrant_image(32), quadrant_image(32), region=GrayMask.empty((8, 8)))


# --------------------------------------------------------------------------
# text and content scores


def test_text_score_registered_alignment() -> None:
    joint = MockJointEncoder()
    img = quadrant_image()
    joint.register("exactly this look", joint.embed_image(img))
    assert text_score(img, "exactly this look", joint) == pytest.approx(100.0, abs=1e-9)


def test_text_score_requires_text() -> None:
    with pytest.raises(InputError):
        text_score(quadrant_image(), "   ", MockJointEncoder())


def test_text_score_zero_norm_is_undefined() -> None:
    flat = RgbImage(np.full((16, 16, 3), 0.5))
    with pytest.warns(UserWarning, match="undefined"):
        assert text_score(flat, "anything", MockJointEncoder()) is None


def test_content_score_means_word_scores() -> None:
    joint = MockJointEncoder()
    img = quadrant_image()
    words = ["first cue", "second cue"]
    joint.register(words[0], joint.embed_image(img))
    joint.register(words[1], -joint.embed_image(img))
    s0 = text_score(img, words[0], joint)
    s1 = text_score(img, words[1], joint)
    assert content_score(img, words, joint) == pytest.approx((s0 + s1) / 2.0, abs=1e-12)


def test_content_score_propagates_undefined() -> None:
    joint = MockJointEncoder()
    joint.register("void", np.zeros(joint.dim))
    with pytest.warns(UserWarning):
        assert content_score(quadrant_image(), ["void"], joint) is None
    with pytest.raises(InputError):
        content_score(quadrant_image(), [], joint)


def test_mock_joint_encoder_features() -> None:
    joint = MockJointEncoder()
    vec = joint.embed_image(quadrant_image())
    assert vec.shape == (joint.dim,)
    # Chroma components sum to zero by construction.
    assert abs(vec[:3].sum()) <= 1e-12
    with pytest.raises(InputError):
        joint.register("bad", np.zeros(3))
    # Unregistered text is stable across instances.
    assert np.array_equal(
        joint.embed_text("novel phrase"), MockJointEncoder().embed_text("novel phrase")
    )


# --------------------------------------------------------------------------
# Elo ladder


def test_match_outcome_validation() -> None:
    with pytest.raises(InputError):
        MatchOutcome(method_a="x", method_b="y", result="win")
    with pytest.raises(InputError):
        MatchOutcome(method_a="x", method_b="x", result="a")


def test_expected_scores_are_complementary() -> None:
    state = EloState(ratings={"x": 1100.0, "y": 900.0})
    assert state.expected("x", "y") + state.expected("y", "x") == pytest.approx(1.0, abs=1e-12)
    even = EloState.fresh(["x", "y"])
    assert even.expected("x", "y") == 0.5


def test_elo_single_win_fixture() -> None:
    state = EloState.fresh(["alpha", "beta"], k_factor=32.0, initial_rating=1000.0)
    state = elo_update(state, MatchOutcome(method_a="alpha", method_b="beta", result="a"))
    assert state.rating("alpha") == 1016.0
    assert state.rating("beta") == 984.0
    assert state.n_updates == 1


def test_elo_tie_between_equals_changes_nothing() -> None:
    state = EloState.fresh(["alpha", "beta"])
    state = elo_update(state, MatchOutcome(method_a="alpha", method_b="beta", result="tie"))
    assert state.rating("alpha") == 1000.0
    assert state.rating("beta") == 1000.0


def test_rating_sum_is_conserved() -> None:
    rng = np.random.default_rng(3)
    methods = ["m1", "m2", "m3", "m4"]
    state = EloState.fresh(methods)
    results = ("a", "b", "tie")
    for _ in range(10_000):
        i, j = rng.choice(4, size=2, replace=False)
        outcome = MatchOutcome(
            method_a=methods[i], method_b=methods[j], result=results[rng.integers(0, 3)]
        )
        state = elo_update(state, outcome)
    assert abs(sum(state.ratings.values()) - 4000.0) <= 1e-9


def test_coin_flip_drift_stays_bounded() -> None:
    """1000 seeded 50/50 matches at K=32 leave both ratings within 60 of
    the start: noise alone must not look like a ranking."""
    oracle = StubOracle(mode="coin", seed=0)
    state = EloState.fresh(["left", "right"], k_factor=32.0, initial_rating=1000.0)
    for _ in range(1000):
        verdict = oracle.judge(Path("a.png"), Path("b.png"), "any")
        state = elo_update(state, MatchOutcome(method_a="left", method_b="right", result=verdict))
    assert abs(state.rating("left") - 1000.0) < 60.0
    assert abs(state.rating("right") - 1000.0) < 60.0


# --------------------------------------------------------------------------
# oracles


def test_stub_oracle_modes() -> None:
    a, b = Path("a.png"), Path("b.png")
    assert StubOracle(mode="first").judge(a, b, "x") == "a"
    assert StubOracle(mode="tie").judge(a, b, "x") == "tie"
    coin1 = StubOracle(mode="coin", seed=9)
    coin2 = StubOracle(mode="coin", seed=9)
    seq1 = [coin1.judge(a, b, "x") for _ in range(32)]
    seq2 = [coin2.judge(a, b, "x") for _ in range(32)]
    assert seq1 == seq2
    assert set(seq1) == {"a", "b"}
    with pytest.raises(InputError):
        StubOracle(mode="random")


class FakeResponse:
    def __init__(self, payload: dict, status: int = 200) -> None:
        self.payload = payload
        self.status = status

    def raise_for_status(self) -> None:
        if self.status >= 400:
            raise RuntimeError(f"HTTP {self.status}")

    def json(self) -> dict:
        return self.payload


def test_http_oracle_happy_path(monkeypatch, tmp_path) -> None:
    img_a = tmp_path / "a.png"
    img_b = tmp_path / "b.png"
    img_a.write_bytes(b"A")
    img_b.write_bytes(b"B")
    seen: dict = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(url=url, json=json, headers=headers, timeout=timeout)
        return FakeResponse({"verdict": " A "})

    monkeypatch.setattr("requests.post", fake_post)
    oracle = HttpJudgeOracle(endpoint="http://judge.local/v1", api_key="sekret")
    assert oracle.judge(img_a, img_b, "realism") == "a"
    assert seen["url"] == "http://judge.local/v1"
    assert seen["headers"]["Authorization"] == "Bearer sekret"
    assert "realism" in seen["json"]["prompt"]
    assert seen["json"]["image_a"] == "QQ=="  # base64 of b"A"


def test_http_oracle_retries_with_backoff(monkeypatch, tmp_path) -> None:
    img = tmp_path / "x.png"
    img.write_bytes(b"x")
    calls = {"n": 0}
    naps: list[float] = []

    def flaky_post(url, json=None, headers=None, timeout=None):
        calls["n"] += 1
        if calls["n"] < 3:
            raise ConnectionError("refused")
        return FakeResponse({"verdict": "b"})

    monkeypatch.setattr("requests.post", flaky_post)
    monkeypatch.setattr(time, "sleep", naps.append)
    oracle = HttpJudgeOracle(endpoint="http://judge.local", retries=3, backoff_seconds=0.5)
    assert oracle.judge(img, img, "c") == "b"
    assert calls["n"] == 3
    assert naps == [0.5, 1.0]  # exponential: 0.5 * 2^attempt


def test_http_oracle_gives_up_after_retries(monkeypatch, tmp_path) -> None:
    img = tmp_path / "x.png"
    img.write_bytes(b"x")

    def broken_post(url, json=None, headers=None, timeout=None):
        return FakeResponse({"verdict": "maybe"})

    monkeypatch.setattr("requests.post", broken_post)
    monkeypatch.setattr(time, "sleep", lambda _s: None)
    oracle = HttpJudgeOracle(endpoint="http://judge.local", retries=2)
    with pytest.raises(OracleError, match="after 3 attempts"):
        oracle.judge(img, img, "c")


def test_http_oracle_from_config(tmp_path, monkeypatch) -> None:
    with pytest.raises(InputError, match="endpoint"):
        HttpJudgeOracle.from_config({})
    template = tmp_path / "prompt.txt"
    template.write_text("criterion={criterion}")
    monkeypatch.setenv("JUDGE_KEY", "k-123")
    oracle = HttpJudgeOracle.from_config(
        {
            "endpoint": "http://j",
            "template_path": str(template),
            "api_key_env": "JUDGE_KEY",
            "retries": 5,
        }
    )
    assert oracle.template == "criterion={criterion}"
    assert oracle.api_key == "k-123"
    assert oracle.retries == 5


# --------------------------------------------------------------------------
# tournaments


def method_dirs(tmp_path: Path, names: list[str], examples: list[str]) -> dict[str, Path]:
    dirs = {}
    for name in names:
        d = tmp_path / name
        d.mkdir()
        for ex in examples:
            (d / ex).write_bytes(b"png")
        dirs[name] = d
    return dirs


def test_tournament_dominance_with_first_oracle(tmp_path) -> None:
    dirs = method_dirs(tmp_path, ["alpha", "beta"], ["e1.png", "e2.png", "e3.png"])
    report = run_tournament(dirs, StubOracle(mode="first"), n_shuffles=8, seed=0)
    assert report.mean_ratings["alpha"] > 1000.0 > report.mean_ratings["beta"]
    # Identical outcomes in every order: replay spread is exactly zero.
    assert report.std_ratings["alpha"] == 0.0
    assert report.std_ratings["beta"] == 0.0
    assert len(report.outcomes) == 3 * 3  # examples x criteria
    assert report.skipped == []
    assert report.state().rating("alpha") == report.mean_ratings["alpha"]


def test_tournament_all_ties_keeps_initial_ratings(tmp_path) -> None:
    dirs = method_dirs(tmp_path, ["alpha", "beta", "gamma"], ["e1.png"])
    report = run_tournament(dirs, StubOracle(mode="tie"), seed=0)
    for name in dirs:
        assert report.mean_ratings[name] == 1000.0
        assert report.std_ratings[name] == 0.0


def test_tournament_is_deterministic(tmp_path) -> None:
    dirs = method_dirs(tmp_path, ["alpha", "beta"], ["e1.png", "e2.png"])
    r1 = run_tournament(dirs, StubOracle(mode="coin", seed=5), seed=3)
    r2 = run_tournament(dirs, StubOracle(mode="coin", seed=5), seed=3)
    assert r1.mean_ratings == r2.mean_ratings
    assert r1.std_ratings == r2.std_ratings


def test_tournament_records_skipped_matches(tmp_path) -> None:
    dirs = method_dirs(tmp_path, ["alpha", "beta"], ["e1.png"])

    class Flaky:
        def judge(self, image_a: Path, image_b: Path, criterion: str) -> str:
            if criterion == "visual realism":
                raise OracleError("offline")
            return "a"

    report = run_tournament(dirs, Flaky(), seed=0)
    assert len(report.skipped) == 1
    assert report.skipped[0]["criterion"] == "visual realism"
    assert report.skipped[0]["reason"] == "offline"
    assert len(report.outcomes) == 2


def test_tournament_aligns_on_shared_examples(tmp_path) -> None:
    dirs = method_dirs(tmp_path, ["alpha", "beta"], ["common.png"])
    (dirs["alpha"] / "extra.png").write_bytes(b"png")
    report = run_tournament(dirs, StubOracle(mode="tie"), seed=0)
    assert {o.example for o in report.outcomes} == {"common.png"}


def test_tournament_validation(tmp_path) -> None:
    only = method_dirs(tmp_path, ["alpha"], ["e1.png"])
    with pytest.raises(InputError, match="at least two"):
        run_tournament(only, StubOracle(mode="tie"))
    with pytest.raises(InputError, match="not found"):
        run_tournament({"alpha": tmp_path / "alpha", "beta": tmp_path / "nope"}, StubOracle())
    empty_a = tmp_path / "ea"
    empty_b = tmp_path / "eb"
    empty_a.mkdir()
    empty_b.mkdir()
    with pytest.raises(InputError, match="share no example"):
        run_tournament({"a": empty_a, "b": empty_b}, StubOracle())
    two = method_dirs(tmp_path, ["g1", "g2"], ["e.png"])
    with pytest.raises(InputError, match="n_shuffles"):
        run_tournament(two, StubOracle(mode="tie"), n_shuffles=0)


# --------------------------------------------------------------------------
# manifests


def test_manifest_round_trip(tmp_path) -> None:
    rows = [
        {"method": "ours", "example": "e1", "sketch_cd": 2.5, "style": 0.9},
        {"method": "ours", "example": "e2", "sketch_cd": None, "style": 0.7},
        {"method": "base", "example": "e1", "sketch_cd": 4.0, "style": 0.5, "flag": True},
    ]
    path = tmp_path / "runs" / "manifest.jsonl"
    write_manifest(rows, path)
    assert read_manifest(path) == rows


def test_manifest_read_errors(tmp_path) -> None:
    with pytest.raises(InputError, match="not found"):
        read_manifest(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"ok": 1}\n{broken\n')
    with pytest.raises(InputError, match="line 2"):
        read_manifest(bad)


def test_manifest_blank_lines_are_skipped(tmp_path) -> None:
    p = tmp_path / "m.jsonl"
    p.write_text('{"method": "x", "v": 1.0}\n\n{"method": "x", "v": 3.0}\n')
    assert len(read_manifest(p)) == 2


def test_aggregate_excludes_null_and_non_numeric() -> None:
    rows = [
        {"method": "ours", "example": "e1", "cd": 2.0, "style": 0.8, "note": "hi"},
        {"method": "ours", "example": "e2", "cd": None, "style": 0.6, "flag": True},
        {"method": "base", "example": "e1", "cd": 10.0},
    ]
    agg = aggregate_manifest(rows)
    # The None cd is excluded from the mean, not counted as zero.
    assert agg["ours"]["cd"] == 2.0
    assert agg["ours"]["style"] == pytest.approx(0.7)
    assert "note" not in agg["ours"] and "flag" not in agg["ours"]
    assert "example" not in agg["ours"] and "method" not in agg["ours"]
    assert agg["base"]["cd"] == 10.0
