"""Configuration resolution: defaults, file, environment, overrides."""

from __future__ import annotations

import json

import pytest

from stylefit.config import DEFAULTS, config_to_json, load_config
from stylefit.errors import ConfigError


def test_defaults_are_returned_untouched() -> None:
    cfg = load_config(environ={})
    assert cfg == DEFAULTS
    assert cfg is not DEFAULTS
    cfg["backend"]["steps"] = 1
    assert DEFAULTS["backend"]["steps"] == 50


def test_default_values_of_record() -> None:
    cfg = load_config(environ={})
    assert cfg["backend"]["steps"] == 50
    assert cfg["backend"]["guidance_scale"] == 7.5
    assert cfg["injection"]["style_scale"] == 0.5
    assert cfg["injection"]["content_scale"] == 0.5
    assert cfg["injection"]["sketch_scale"] == 0.7
    assert cfg["injection"]["text_scale"] == 0.5
    assert cfg["injection"]["style_blocks"] == [7]
    assert cfg["injection"]["content_blocks"] == [3, 4, 6]
    assert cfg["removal"]["alpha"] == 1.0
    assert cfg["elo"]["k_factor"] == 32.0
    assert cfg["elo"]["initial_rating"] == 1000.0


def test_file_overrides_defaults(tmp_path) -> None:
    doc = tmp_path / "cfg.yaml"
    doc.write_text("backend:\n  steps: 12\ncspe:\n  lightness_space: luma\n")
    cfg = load_config(doc, environ={})
    assert cfg["backend"]["steps"] == 12
    assert cfg["cspe"]["lightness_space"] == "luma"
    # Untouched siblings keep their defaults.
    assert cfg["backend"]["guidance_scale"] == 7.5


def test_json_config_files_work_too(tmp_path) -> None:
    doc = tmp_path / "cfg.json"
    doc.write_text(json.dumps({"backend": {"steps": 9}}))
    assert load_config(doc, environ={})["backend"]["steps"] == 9


def test_env_beats_file(tmp_path) -> None:
    doc = tmp_path / "cfg.yaml"
    doc.write_text("backend:\n  steps: 12\n")
    cfg = load_config(doc, environ={"STYLEFIT_BACKEND__STEPS": "25"})
    assert cfg["backend"]["steps"] == 25


def test_overrides_beat_env(tmp_path) -> None:
    cfg = load_config(
        overrides={"backend": {"steps": 7}},
        environ={"STYLEFIT_BACKEND__STEPS": "25"},
    )
    assert cfg["backend"]["steps"] == 7


def test_env_values_are_yaml_coerced() -> None:
    cfg = load_config(
        environ={
            "STYLEFIT_BACKEND__STEPS": "30",
            "STYLEFIT_BACKEND__GUIDANCE_SCALE": "3.5",
            "STYLEFIT_BACKEND__EXCLUSIVE": "true",
            "STYLEFIT_ORACLE__ENDPOINT": "http://judge",
            "STYLEFIT_INJECTION__CONTENT_BLOCKS": "[1, 2]",
        }
    )
    assert cfg["backend"]["steps"] == 30
    assert cfg["backend"]["guidance_scale"] == 3.5
    assert cfg["backend"]["exclusive"] is True
    assert cfg["oracle"]["endpoint"] == "http://judge"
    assert cfg["injection"]["content_blocks"] == [1, 2]


def test_unrelated_env_vars_are_ignored() -> None:
    cfg = load_config(environ={"PATH": "/bin", "STYLEFITX": "nope"})
    assert cfg == DEFAULTS


def test_unknown_sections_are_preserved(tmp_path) -> None:
    doc = tmp_path / "cfg.yaml"
    doc.write_text("myadapter:\n  weights: /models/w.ckpt\n")
    cfg = load_config(doc, environ={})
    assert cfg["myadapter"]["weights"] == "/models/w.ckpt"


def test_missing_file_is_an_error(tmp_path) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml", environ={})


def test_malformed_file_is_an_error(tmp_path) -> None:
    doc = tmp_path / "cfg.yaml"
    doc.write_text("backend: [unclosed\n")
    with pytest.raises(ConfigError, match="parse"):
        load_config(doc, environ={})
    doc.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(doc, environ={})


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"backend": {"steps": 0}}, "backend.steps"),
        ({"backend": {"guidance_scale": -1}}, "guidance_scale"),
        ({"backend": {"spatial_factor": 0}}, "spatial_factor"),
        ({"cspe": {"sigma_frac": 0}}, "sigma_frac"),
        ({"cspe": {"lightness_space": "hsv"}}, "lightness_space"),
        ({"mask": {"stroke_threshold": 0}}, "stroke_threshold"),
        ({"mask": {"close_radius": -2}}, "close_radius"),
        ({"removal": {"mode": "both"}}, "removal.mode"),
        ({"injection": {"style_blocks": [99]}}, "style_blocks"),
        ({"injection": {"style_blocks": [3]}}, "disjoint"),
        ({"edges": {"percentile": 150}}, "percentile"),
    ],
)
def test_validation_rejects_bad_values(overrides, fragment) -> None:
    with pytest.raises(ConfigError, match=fragment):
        load_config(overrides=overrides, environ={})


def test_config_to_json_is_stable() -> None:
    cfg = load_config(environ={})
    text = config_to_json(cfg)
    assert json.loads(text) == cfg
    assert text == config_to_json(load_config(environ={}))
