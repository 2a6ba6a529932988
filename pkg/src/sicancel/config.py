"""Flat key=value configuration for dataset generation.

One key per line, ``#`` starts a comment.  Values are parsed as int, float or
complex (in that order); unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import inspect

from .errors import ConfigurationError
from .signals import OfdmConfig, SiChainModel, default_chain

def _as_builtin(value):
    # signature defaults may be numpy scalars; keep config values plain
    if isinstance(value, int):
        return int(value)
    if isinstance(value, float):
        return float(value)
    return complex(value)


# The chain builder owns the default channel numbers; read them off its
# signature so the printed config and the builder never drift apart.
_chain_defaults = {
    name: _as_builtin(param.default)
    for name, param in inspect.signature(default_chain).parameters.items()
}

# Insertion order is the order --print-config emits.
DEFAULTS = {
    "seed": 1,
    "ofdm.fft_size": 64,
    "ofdm.used_subcarriers": 52,
    "ofdm.cp_length": 16,
    "ofdm.oversample": 2,
    "ofdm.num_symbols": 96,
    "ofdm.sample_rate_hz": 20e6,
    **{f"chain.{name}": value for name, value in _chain_defaults.items()},
}
del _chain_defaults

_INT_KEYS = {
    "seed",
    "ofdm.fft_size",
    "ofdm.used_subcarriers",
    "ofdm.cp_length",
    "ofdm.oversample",
    "ofdm.num_symbols",
    "chain.num_taps",
}


def _parse_value(key: str, text: str):
    text = text.strip()
    if key in _INT_KEYS:
        try:
            return int(text)
        except ValueError as e:
            raise ConfigurationError(f"{key}: expected an integer, got {text!r}") from e
    for cast in (float, complex):
        try:
            return cast(text)
        except ValueError:
            continue
    raise ConfigurationError(f"{key}: cannot parse value {text!r}")


def parse_config_text(text: str) -> dict:
    """Parse flat key=value text into a full config dict over the defaults."""
    cfg = dict(DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _parse_value(key, value)
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def format_value(v) -> str:
    if isinstance(v, complex):
        return repr(v)
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg: dict) -> str:
    lines = [f"{key} = {format_value(cfg[key])}" for key in DEFAULTS]
    return "\n".join(lines) + "\n"


def ofdm_from_config(cfg: dict) -> OfdmConfig:
    return OfdmConfig(
        fft_size=cfg["ofdm.fft_size"],
        used_subcarriers=cfg["ofdm.used_subcarriers"],
        cp_length=cfg["ofdm.cp_length"],
        oversample=cfg["ofdm.oversample"],
        num_symbols=cfg["ofdm.num_symbols"],
        sample_rate_hz=float(cfg["ofdm.sample_rate_hz"]),
    )


def chain_from_config(cfg: dict) -> SiChainModel:
    return default_chain(
        num_taps=cfg["chain.num_taps"],
        tap_decay=float(cfg["chain.tap_decay"]),
        tap_phase_step=float(cfg["chain.tap_phase_step"]),
        iq_gain=complex(cfg["chain.iq_gain"]),
        iq_image=complex(cfg["chain.iq_image"]),
        pa_a1=complex(cfg["chain.pa_a1"]),
        pa_a3=complex(cfg["chain.pa_a3"]),
        pa_a5=complex(cfg["chain.pa_a5"]),
        pa_a7=complex(cfg["chain.pa_a7"]),
        noise_power=float(cfg["chain.noise_power"]),
    )


# Fraction of a dataset used for fitting; the rest is held out for evaluation.
TRAIN_FRACTION = 0.7


def split_bounds(n: int):
    """(train_end, eval_start) sample indices for a buffer of length n."""
    train_end = int(n * TRAIN_FRACTION)
    return train_end, train_end
