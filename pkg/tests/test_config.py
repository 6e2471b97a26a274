"""Layered run configuration: defaults, presets, config files, flags."""

import json

import pytest

from rigidsplat.config import (
    DEFAULTS,
    PRESETS,
    echo_config,
    load_config_file,
    resolve_config,
    to_optimize_config,
)
from rigidsplat.errors import SchemaError


def test_defaults_resolve_standalone():
    cfg = resolve_config()
    assert cfg["preset"] == "large-scene"
    assert cfg["lr_q"] == 0.05
    assert cfg["iterations"] == 2000
    assert cfg["weight_group"] == 1.0
    # unset growth radius tracks the refinement radius
    assert cfg["r_grow"] == 2.0 * cfg["r_refinement"] == 0.02
    assert set(cfg) == set(DEFAULTS)


def test_explicit_r_grow_is_kept():
    cfg = resolve_config(flags={"r_grow": 0.5})
    assert cfg["r_grow"] == 0.5


def test_preset_layers_over_defaults():
    cfg = resolve_config(flags={"preset": "desk-demo"})
    assert cfg["weight_group"] == 50.0
    assert cfg["s_voxel"] == 0.12
    assert cfg["r_grow"] == 0.12
    assert cfg["iterations"] == 800
    # untouched keys fall through to the defaults
    assert cfg["lr_q"] == DEFAULTS["lr_q"]
    assert cfg["grid_cols"] == 16


def test_file_layers_over_preset(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("preset: desk-demo\niterations: 12\n")
    cfg = resolve_config(file_path=p)
    assert cfg["preset"] == "desk-demo"
    assert cfg["iterations"] == 12
    assert cfg["weight_group"] == 50.0


def test_flags_beat_file_and_preset(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("preset: desk-demo\niterations: 12\nlr_t: 0.5\n")
    cfg = resolve_config(file_path=p, flags={"iterations": 3, "seed": 9})
    assert cfg["iterations"] == 3
    assert cfg["seed"] == 9
    assert cfg["lr_t"] == 0.5


def test_flag_preset_beats_file_preset(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("preset: desk-demo\n")
    cfg = resolve_config(file_path=p, flags={"preset": "animal-scene"})
    assert cfg["preset"] == "animal-scene"
    assert cfg["lr_q"] == 0.03
    assert cfg["s_voxel"] == 0.02


def test_json_config_file_accepted(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"k_anchor": 4}))
    assert load_config_file(p) == {"k_anchor": 4}


def test_unknown_key_in_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("learning_rate: 0.1\n")
    with pytest.raises(SchemaError) as exc:
        load_config_file(p)
    assert "unknown config key 'learning_rate'" in str(exc.value)


def test_unknown_flag():
    with pytest.raises(SchemaError) as exc:
        resolve_config(flags={"lr": 1.0})
    assert "unknown config key 'lr'" in str(exc.value)


def test_unknown_preset_lists_choices():
    with pytest.raises(SchemaError) as exc:
        resolve_config(flags={"preset": "office"})
    msg = str(exc.value)
    assert "unknown preset 'office'" in msg
    for name in PRESETS:
        assert name in msg


def test_bad_config_documents(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("- just\n- a\n- list\n")
    with pytest.raises(SchemaError) as exc:
        load_config_file(p)
    assert "must be a mapping" in str(exc.value)

    p.write_text("a: [unclosed\n")
    with pytest.raises(SchemaError) as exc:
        load_config_file(p)
    assert "unparsable config" in str(exc.value)

    p.write_text("")
    assert load_config_file(p) == {}


def test_to_optimize_config_mapping():
    cfg = resolve_config(flags={"preset": "desk-demo", "iterations": 5,
                                "pair_budget": 128})
    oc = to_optimize_config(cfg)
    assert oc.iterations == 5
    assert oc.pair_budget == 128
    assert oc.weights.group == 50.0
    assert oc.weights.arap == 5.0
    assert oc.weights.rgb == 0.0
    assert oc.s_voxel == 0.12
    assert oc.k_anchor == 8
    assert oc.r_refinement == 0.06
    assert oc.seed == 0


def test_echo_config_is_sorted_json():
    cfg = resolve_config()
    line = echo_config(cfg)
    doc = json.loads(line)
    assert doc == {"config": cfg}
    assert line == json.dumps({"config": cfg}, sort_keys=True)
    assert "\n" not in line
