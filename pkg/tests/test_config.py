import pytest

from polcap.config import ConfigError, KEYS, default_config_text, load_config, parse_config_text


class TestConfig:
    def test_defaults(self):
        cfg = load_config(environ={})
        assert cfg["trials_per_point"] == 100_000
        assert cfg.analyzer().routing_efficiency == pytest.approx(1 / 16)
        assert cfg.channel().regime == "exact-twirl"

    def test_file_and_comments(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\ntrials_per_point = 1e6  # scientific notation\nregime = monte-carlo\n\n")
        cfg = load_config(p, environ={})
        assert cfg["trials_per_point"] == 1_000_000
        assert cfg.channel().regime == "monte-carlo"

    def test_unknown_key_named(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("trials_per_point = 10\nfilter_width = 3\n")
        with pytest.raises(ConfigError, match="c.cfg:2: unknown configuration key 'filter_width'"):
            load_config(p, environ={})

    def test_env_override(self):
        cfg = load_config(environ={"POLCAP_SEED": "42", "POLCAP_INDISTINGUISHABILITY_MAX": "0.8", "HOME": "/x"})
        assert cfg["seed"] == 42
        assert cfg.analyzer().indistinguishability_max == 0.8

    def test_env_unknown(self):
        with pytest.raises(ConfigError, match="nonsense"):
            load_config(environ={"POLCAP_NONSENSE": "1"})

    @pytest.mark.parametrize(
        "line, match",
        [
            ("trials_per_point = 2.5", "cannot parse"),
            ("detector_efficiency = 1.5", r"\[0, 1\]"),
            ("delay_points = 3", "delay_points"),
            ("regime = adiabatic", "regime"),
            ("just words", "key = value"),
        ],
    )
    def test_invalid(self, tmp_path, line, match):
        p = tmp_path / "c.cfg"
        p.write_text(line + "\n")
        with pytest.raises(ConfigError, match=match):
            load_config(p, environ={})

    def test_digest_tracks_values(self):
        a = load_config(environ={})
        assert a.digest() == load_config(environ={}).digest()
        assert a.digest() != a.with_overrides(seed=1).digest()

    def test_default_text_roundtrip(self):
        vals = parse_config_text(default_config_text())
        assert set(vals) == set(KEYS)
