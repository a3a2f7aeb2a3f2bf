"""Run configuration: a flat ``key = value`` file with units in the key names.

Lines starting with ``#`` are comments.  Any key may be overridden by an
environment variable ``POLCAP_<KEY>`` (upper case), e.g.
``POLCAP_TRIALS_PER_POINT=1000000``.  Unknown keys are rejected.

Detector dead time, dark counts and afterpulsing are not modeled and have
no keys.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .analyzer import AnalyzerConfigError, AnalyzerModel
from .channel import ChannelConfigError, ChannelModel

ENV_PREFIX = "POLCAP_"


class ConfigError(ValueError):
    pass


# key -> (type, default)
KEYS = {
    # channel
    "regime": (str, "exact-twirl"),
    "coherence_time_s": (float, 1e-3),
    "pulse_separation_s": (float, 6e-9),
    "decorrelation_angle_std_rad": (float, 0.0),
    "mc_samples": (int, 100_000),
    # analyzer
    "detector_efficiency": (float, 1.0),
    "routing_efficiency": (float, 1.0 / 16.0),
    "indistinguishability_max": (float, 0.95),
    "filter_fwhm_m": (float, 10.5e-9),
    "center_wavelength_m": (float, 780e-9),
    "coincidence_window_s": (float, 3e-9),
    "accidental_rate": (float, 0.0),
    # scans
    "trials_per_point": (int, 100_000),
    "delay_points": (int, 61),
    "delay_span_fwhm": (float, 3.0),
    # run
    "seed": (int, None),
    "output_dir": (str, "polcap-out"),
    "target_separable_bits": (float, 0.30),
    "target_entangled_bits": (float, 0.82),
    "ideal_tolerance_bits": (float, 0.01),
    "experimental_tolerance_bits": (float, 0.02),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[k] = _coerce(k, v)
        return validate(vals)

    def channel(self) -> ChannelModel:
        v = self.values
        return ChannelModel(
            regime=v["regime"],
            coherence_time=v["coherence_time_s"],
            pulse_separation=v["pulse_separation_s"],
            decorrelation_angle_std=v["decorrelation_angle_std_rad"],
            mc_samples=v["mc_samples"],
            rng_seed=v["seed"] or 0,
        )

    def analyzer(self) -> AnalyzerModel:
        v = self.values
        return AnalyzerModel(
            detector_efficiency=v["detector_efficiency"],
            routing_efficiency=v["routing_efficiency"],
            indistinguishability_max=v["indistinguishability_max"],
            filter_fwhm_wavelength=v["filter_fwhm_m"],
            center_wavelength=v["center_wavelength_m"],
            coincidence_window=v["coincidence_window_s"],
            accidental_rate=v["accidental_rate"],
        )

    def digest(self) -> str:
        """Short hash of the resolved configuration, for file provenance."""
        text = "\n".join(f"{k}={self.values[k]!r}" for k in sorted(self.values))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _coerce(key, raw):
    if key not in KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ, _ = KEYS[key]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        return None
    try:
        if typ is int:
            f = float(raw)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return typ(raw)
    except (TypeError, ValueError, OverflowError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def validate(values: dict) -> RunConfig:
    for k in values:
        if k not in KEYS:
            raise ConfigError(f"unknown configuration key {k!r}")
    cfg = RunConfig(dict(values))
    try:
        cfg.channel()
        cfg.analyzer()
    except (ChannelConfigError, AnalyzerConfigError) as exc:
        raise ConfigError(str(exc)) from None
    if values["trials_per_point"] < 1:
        raise ConfigError("trials_per_point must be >= 1")
    if values["delay_points"] < 6:
        raise ConfigError("delay_points must be >= 6")
    if not values["delay_span_fwhm"] > 0:
        raise ConfigError("delay_span_fwhm must be > 0")
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        k, v = (p.strip() for p in s.split("=", 1))
        if k not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key {k!r}")
        out[k] = _coerce(k, v)
    return out


def load_config(path=None, environ=None) -> RunConfig:
    values = {k: d for k, (_, d) in KEYS.items()}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(p)))
    env = os.environ if environ is None else environ
    for name, raw in env.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key {key!r} (from {name})")
            values[key] = _coerce(key, raw)
    return validate(values)


def default_config_text() -> str:
    lines = ["# polcap run configuration; units are part of the key names"]
    for k, (_, d) in KEYS.items():
        lines.append(f"{k} = {'' if d is None else d}")
    return "\n".join(lines) + "\n"
