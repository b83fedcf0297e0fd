"""Run configuration: flat dotted keys with defaults < JSON file < flags."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .channel import ChannelConfig, canonical_profile
from .errors import ConfigError
from .models import ArchitectureSpec
from .train import TrainConfig

_CHANNEL = ChannelConfig()
_TRAIN = TrainConfig()

DEFAULTS: dict[str, object] = {
    "channel.profile": "CDL-C",
    "channel.samples": 2048,
    "channel.seed": 1,
    "channel.full_scale": False,
    "channel.num_rx_antennas": _CHANNEL.num_rx_antennas,
    "channel.antenna_spacing": _CHANNEL.antenna_spacing,
    "channel.carrier_hz": _CHANNEL.carrier_hz,
    "channel.subcarrier_spacing_hz": _CHANNEL.subcarrier_spacing_hz,
    "channel.num_subcarriers": _CHANNEL.num_subcarriers,
    "channel.num_symbols": _CHANNEL.num_symbols,
    "channel.delay_spread_s": _CHANNEL.delay_spread_s,
    "channel.max_doppler_hz": _CHANNEL.max_doppler_hz,
    "channel.observed": list(_CHANNEL.observed),
    "channel.predicted": list(_CHANNEL.predicted),
    "train.lr": _TRAIN.lr,
    "train.batch_size": _TRAIN.batch_size,
    "train.epochs": _TRAIN.epochs,
    "train.kl_weight": _TRAIN.kl_weight,
    "train.commit_beta": _TRAIN.commit_beta,
    "train.seed": _TRAIN.seed,
    "train.noise_aware": None,
    "arch.codebook_size": 512,
    "link.snr": "-10,-5,0,5,10,20,30,off",
    "link.seed": 0,
    "ood.profiles": "a,b,d",
    "ood.samples": 200,
    "ood.seed": 0,
    "ood.snr": "30,off",
    "bench.iters": 100,
    "bench.warmup": 10,
    "bench.train_samples": 256,
}


def _check_type(key: str, value):
    default = DEFAULTS[key]
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{key}: null is not allowed")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        return str(value)
    if isinstance(default, list) or key == "train.noise_aware":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return list(value)
    return value


class RunConfig:
    """Effective settings for one CLI invocation."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        if values:
            self.update(values)

    def update(self, values: dict) -> None:
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for key, value in values.items():
            self.values[key] = _check_type(key, value)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            text = Path(path).read_text()
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
            if not isinstance(doc, dict):
                raise ConfigError(f"{path}: top level must be an object of dotted keys")
            cfg.update(doc)
        if overrides:
            cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    def digest(self) -> str:
        text = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def channel(self) -> ChannelConfig:
        fields = {k.split(".", 1)[1]: v for k, v in self.values.items()
                  if k.startswith("channel.") and k not in
                  ("channel.profile", "channel.samples", "channel.seed", "channel.full_scale")}
        fields["observed"] = tuple(int(i) for i in fields["observed"])
        fields["predicted"] = tuple(int(i) for i in fields["predicted"])
        if self["channel.full_scale"]:
            overrides = {k: v for k, v in fields.items()
                         if k not in ("num_rx_antennas", "num_subcarriers", "num_symbols")}
            return ChannelConfig.full_scale(**overrides)
        return ChannelConfig(**fields)

    def profile(self) -> str:
        return canonical_profile(self["channel.profile"])

    def train(self) -> TrainConfig:
        noise = self["train.noise_aware"]
        cfg = TrainConfig(lr=self["train.lr"], batch_size=self["train.batch_size"],
                          epochs=self["train.epochs"], kl_weight=self["train.kl_weight"],
                          commit_beta=self["train.commit_beta"], seed=self["train.seed"],
                          noise_aware=None if noise is None else tuple(noise))
        cfg.validate()
        return cfg

    def arch(self, in_channels: int, out_channels: int, height: int, width: int) -> ArchitectureSpec:
        return ArchitectureSpec.for_grid(in_channels, out_channels, height, width,
                                         codebook_size=self["arch.codebook_size"])
