"""Test run configuration, value coercion and the shipped config files."""
from pathlib import Path

import pytest

from sdlalab.config import (
    DEFAULTS,
    ConfigError,
    build_run_config,
    coerce,
    describe_defaults,
    load_config_file,
    parse_int_list,
    parse_override,
    parse_sites,
    parse_window,
)
from sdlalab.lattice import BoxRegion, Site

SPECS_DIR = Path(__file__).parent.parent / "specs"


class TestCoerce:
    """Test conversion to the kind of each key's default."""

    def test_integer_from_text(self):
        assert coerce("n", "12") == 12

    def test_float_accepts_integer(self):
        value = coerce("T", "2")
        assert value == 2.0 and isinstance(value, float)

    def test_boolean(self):
        assert coerce("limit", "true") is True
        with pytest.raises(ConfigError):
            coerce("limit", 1)

    def test_integer_rejects_words(self):
        with pytest.raises(ConfigError):
            coerce("n", "eight")

    def test_string_keys_keep_text(self):
        assert coerce("n_list", "4,8") == "4,8"
        assert coerce("aggregate", None) == ""

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            coerce("colour", "red")
        assert "colour" in str(exc.value)


class TestBuildRunConfig:
    """Test merging defaults, file values and overrides."""

    def test_defaults(self):
        cfg = build_run_config("dla", master_seed=0, replicas=1, workers=1, out_dir="out")
        assert cfg["n"] == DEFAULTS["n"].default
        assert cfg["engine"] == "thinned"

    def test_override_beats_file(self):
        cfg = build_run_config(
            "dla",
            master_seed=1,
            replicas=2,
            workers=1,
            out_dir="out",
            file_values={"n": 4, "T": 0.5},
            overrides={"n": 6},
        )
        assert cfg["n"] == 6
        assert cfg["T"] == 0.5

    def test_unknown_lookup(self):
        cfg = build_run_config("dla", master_seed=0, replicas=1, workers=1, out_dir="out")
        with pytest.raises(ConfigError):
            cfg["colour"]

    @pytest.mark.parametrize("kwargs", [
        {"master_seed": -1, "replicas": 1, "workers": 1},
        {"master_seed": 1 << 64, "replicas": 1, "workers": 1},
        {"master_seed": 0, "replicas": 0, "workers": 1},
        {"master_seed": 0, "replicas": 1, "workers": 0},
    ])
    def test_bad_run_settings(self, kwargs):
        with pytest.raises(ConfigError):
            build_run_config("dla", out_dir="out", **kwargs)

    def test_echo(self, make_cfg):
        cfg = make_cfg("couple", replicas=3, n=4)
        echo = cfg.echo()
        assert echo["command"] == "couple"
        assert echo["replicas"] == 3
        assert echo["params"]["n"] == 4


class TestConfigFiles:
    """Test YAML config files."""

    def test_shipped_configs_load(self):
        values = load_config_file(SPECS_DIR / "locality.yaml")
        assert values["n_list"] == "4,8,16,32"
        assert values["harmonic_tol"] == pytest.approx(1e-8)
        assert load_config_file(SPECS_DIR / "mixing.yaml")["copy_replicas"] == 200

    def test_nested_values_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("n: [1, 2]\n")
        with pytest.raises(ConfigError):
            load_config_file(path)

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("colour: red\n")
        with pytest.raises(ConfigError):
            load_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "nope.yaml")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config_file(path) == {}


class TestValueParsers:
    """Test list, window, site and override parsing."""

    def test_override(self):
        assert parse_override("c_dom=3") == ("c_dom", 3.0)
        with pytest.raises(ConfigError):
            parse_override("c_dom")

    def test_int_list(self):
        assert parse_int_list("4, 8,16", "n_list") == [4, 8, 16]
        assert parse_int_list("", "n_list") == []
        with pytest.raises(ConfigError):
            parse_int_list("4,x", "n_list")

    def test_window(self):
        assert parse_window("-2,2,0,2") == BoxRegion(-2, 2, 0, 2)
        with pytest.raises(ConfigError):
            parse_window("1,2")

    def test_sites(self):
        assert parse_sites("0,1; 2,3") == [Site(0, 1), Site(2, 3)]
        with pytest.raises(ConfigError):
            parse_sites("0,-1")
        with pytest.raises(ConfigError):
            parse_sites("1,2,3")

    def test_describe_defaults_lists_every_key(self):
        text = describe_defaults()
        assert len(text.splitlines()) == len(DEFAULTS)
        assert "stabilization_replicas" in text
