"""CDL-style channel synthesis, datasets and the cross-antenna split.

Each profile is a fixed set of clusters (delay, power, arrival angle,
Doppler angle).  The frequency response of antenna ``k`` at subcarrier
``n_f`` and OFDM symbol ``n_t`` is::

    h = sum_p sqrt(P_p) exp(j phi_p)
              exp(-j 2 pi spacing k sin(theta_p))
              exp( j 2 pi nu_max cos(alpha_p) n_t T_sym)
              exp(-j 2 pi n_f df tau_p)

with ``T_sym = 1 / df`` (no cyclic prefix).  Only the cluster phases
``phi_p`` are random per sample; the geometry is fixed per profile.

The cluster tables below are a compact stand-in for the 3GPP TR 38.901
tables: A, B and C are NLOS with increasing angular spread, D has a dominant
line-of-sight ray (K-factor 13 dB).  Delays are given in normalized units
and rescaled so the RMS delay spread equals the configured value.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng
from .autodiff import Tensor
from .errors import ConfigError, FormatError

PROFILE_IDS = {"CDL-A": 0, "CDL-B": 1, "CDL-C": 2, "CDL-D": 3}

# name -> (normalized delays, powers [dB], arrival angles [deg], Doppler angles [deg])
# Power-weighted RMS arrival-angle spreads: A 0.42, B 1.01, C 1.42, D 0.27 degrees.
_TABLES = {
    "CDL-A": (
        [0.0, 0.38, 0.61, 1.05, 1.52, 2.10, 2.85],
        [0.0, -1.5, -3.0, -4.6, -6.0, -8.2, -10.0],
        [0.0, 0.45, -0.3, 0.75, -0.6, 0.15, -0.9],
        [10.0, 95.0, 160.0, 230.0, 300.0, 45.0, 200.0],
    ),
    "CDL-B": (
        [0.0, 0.21, 0.47, 0.80, 1.13, 1.60, 2.22, 3.05],
        [0.0, -1.0, -2.2, -3.5, -4.6, -6.0, -8.2, -10.0],
        [0.0, -0.96, 0.78, -1.53, 1.35, -0.39, 1.92, -2.1],
        [120.0, 15.0, 250.0, 330.0, 75.0, 185.0, 290.0, 40.0],
    ),
    "CDL-C": (
        [0.0, 0.17, 0.40, 0.62, 0.95, 1.33, 1.90, 2.60, 3.40],
        [0.0, -1.0, -2.0, -3.0, -4.0, -5.2, -7.0, -10.0, -12.0],
        [0.0, -1.35, 1.05, -2.1, 1.8, -0.6, 2.55, -3.0, 1.5],
        [60.0, 140.0, 275.0, 20.0, 210.0, 320.0, 100.0, 170.0, 250.0],
    ),
    # First entry is the LOS ray; its power is set by the K-factor.
    "CDL-D": (
        [0.0, 0.35, 0.90, 1.40, 2.10, 2.90],
        [0.0, -2.0, -3.5, -5.0, -7.5, -10.0],
        [0.0, -0.9, 1.2, -1.8, 1.5, -0.45],
        [0.0, 110.0, 200.0, 280.0, 35.0, 150.0],
    ),
}
_LOS_K_FACTOR_DB = 13.0


@dataclass(frozen=True)
class ClusterProfile:
    name: str
    delays: np.ndarray  # seconds
    powers: np.ndarray  # linear, sums to 1
    aoa: np.ndarray  # radians
    doppler_angle: np.ndarray  # radians
    los: bool = False
    k_factor_db: float | None = None

    @property
    def num_clusters(self) -> int:
        return len(self.delays)

    def rms_delay_spread(self) -> float:
        mean = np.sum(self.powers * self.delays)
        return float(np.sqrt(np.sum(self.powers * self.delays ** 2) - mean ** 2))


def make_profile(name: str, delay_spread_s: float = 30e-9) -> ClusterProfile:
    """Built-in cluster set, powers normalized and delays scaled to ``delay_spread_s``."""
    key = canonical_profile(name)
    delays, power_db, aoa, dop = (np.asarray(v, dtype=np.float64) for v in _TABLES[key])
    powers = 10.0 ** (power_db / 10.0)
    los = key == "CDL-D"
    if los:
        k = 10.0 ** (_LOS_K_FACTOR_DB / 10.0)
        nlos = powers[1:] / powers[1:].sum()
        powers = np.concatenate([[k / (k + 1.0)], nlos / (k + 1.0)])
    powers = powers / powers.sum()
    mean = np.sum(powers * delays)
    unit_spread = np.sqrt(np.sum(powers * delays ** 2) - mean ** 2)
    return ClusterProfile(
        name=key,
        delays=delays * (delay_spread_s / unit_spread),
        powers=powers,
        aoa=np.deg2rad(aoa),
        doppler_angle=np.deg2rad(dop),
        los=los,
        k_factor_db=_LOS_K_FACTOR_DB if los else None,
    )


def canonical_profile(name: str) -> str:
    """Accept ``"CDL-C"``, ``"cdl-c"``, ``"c"``; return ``"CDL-C"``."""
    token = str(name).strip().upper()
    if not token.startswith("CDL-"):
        token = "CDL-" + token
    if token not in PROFILE_IDS:
        raise ConfigError(f"unknown profile {name!r}; expected one of CDL-A..CDL-D")
    return token


@dataclass(frozen=True)
class ChannelConfig:
    num_rx_antennas: int = 4
    antenna_spacing: float = 0.5  # wavelengths
    carrier_hz: float = 40e9
    subcarrier_spacing_hz: float = 15e3
    num_subcarriers: int = 64
    num_symbols: int = 16
    delay_spread_s: float = 30e-9
    max_doppler_hz: float = 30.0
    observed: tuple[int, ...] = (0, 1)
    predicted: tuple[int, ...] = (2, 3)

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(int(i) for i in self.observed))
        object.__setattr__(self, "predicted", tuple(int(i) for i in self.predicted))
        self.validate()

    @property
    def m_s(self) -> int:
        return len(self.observed)

    @property
    def m_r(self) -> int:
        return len(self.predicted)

    @property
    def symbol_time_s(self) -> float:
        return 1.0 / self.subcarrier_spacing_hz

    def validate(self) -> None:
        if self.num_rx_antennas < 1 or self.num_subcarriers < 1 or self.num_symbols < 1:
            raise ConfigError("antenna, subcarrier and symbol counts must be >= 1")
        if self.subcarrier_spacing_hz <= 0 or self.delay_spread_s <= 0 or self.max_doppler_hz < 0:
            raise ConfigError("subcarrier spacing and delay spread must be positive, Doppler non-negative")
        if not self.observed or not self.predicted:
            raise ConfigError("observed and predicted antenna sets must be non-empty")
        if set(self.observed) & set(self.predicted):
            raise ConfigError(f"antenna sets overlap: {self.observed} and {self.predicted}")
        if len(set(self.observed)) != self.m_s or len(set(self.predicted)) != self.m_r:
            raise ConfigError("antenna sets contain duplicates")
        if self.m_s + self.m_r > self.num_rx_antennas:
            raise ConfigError("m_s + m_r exceeds the number of antennas")
        if any(not 0 <= i < self.num_rx_antennas for i in self.observed + self.predicted):
            raise ConfigError("antenna index out of range")

    @classmethod
    def full_scale(cls, **overrides) -> "ChannelConfig":
        """Grid of the original experiment: 16 receive antennas, 624 x 140."""
        base = dict(num_rx_antennas=16, num_subcarriers=624, num_symbols=140)
        base.update(overrides)
        return cls(**base)


@dataclass
class ChannelSample:
    h: np.ndarray  # complex128 [K, F, T]
    scale: float = 1.0  # factor applied to reach unit mean power

    @property
    def re(self) -> np.ndarray:
        return self.h.real

    @property
    def im(self) -> np.ndarray:
        return self.h.imag


def channel_response(profile: ClusterProfile, config: ChannelConfig, phases: np.ndarray) -> np.ndarray:
    """Un-normalized sum-of-clusters response for given cluster phases."""
    k = np.arange(config.num_rx_antennas)[:, None]
    f = (np.arange(config.num_subcarriers) * config.subcarrier_spacing_hz)[:, None]
    t = (np.arange(config.num_symbols) * config.symbol_time_s)[:, None]
    gain = np.sqrt(profile.powers) * np.exp(1j * phases)
    steer = np.exp(-2j * np.pi * config.antenna_spacing * k * np.sin(profile.aoa))
    freq = np.exp(-2j * np.pi * f * profile.delays)
    dop = np.exp(2j * np.pi * config.max_doppler_hz * np.cos(profile.doppler_angle) * t)
    return np.einsum("p,kp,fp,tp->kft", gain, steer, freq, dop)


def synthesize_channel(profile: ClusterProfile, config: ChannelConfig, seed: int,
                       phases: np.ndarray | None = None) -> ChannelSample:
    """One channel realization, normalized to unit mean power.

    ``phases`` overrides the random cluster phases (used by closed-form tests).
    """
    if phases is None:
        phases = rng.uniform(rng.generator(seed), profile.num_clusters, 0.0, 2.0 * np.pi)
    h = channel_response(profile, config, np.asarray(phases, dtype=np.float64))
    power = float(np.mean(np.abs(h) ** 2))
    scale = 1.0 / np.sqrt(power) if power > 0 else 1.0
    return ChannelSample(h=h * scale, scale=scale)


def sample_seed(seed: int, index: int) -> int:
    return rng.derive_seed(seed, "sample", index)


@dataclass
class Dataset:
    profile: str
    config: ChannelConfig
    h: np.ndarray  # complex128 [n, K, F, T]
    seed: int | None = None
    scales: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.h.shape[0]

    @property
    def samples(self) -> list[ChannelSample]:
        scales = self.scales if self.scales is not None else np.ones(len(self))
        return [ChannelSample(h=self.h[i], scale=float(scales[i])) for i in range(len(self))]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.profile == other.profile and self.h.shape == other.h.shape
                and np.array_equal(self.h.view(np.float64), other.h.view(np.float64)))

    def subset(self, index) -> "Dataset":
        scales = None if self.scales is None else self.scales[index]
        return replace(self, h=self.h[index], scales=scales)


def generate_dataset(profile: ClusterProfile | str, config: ChannelConfig, n: int, seed: int) -> Dataset:
    """``n`` samples; sample ``i`` uses seed ``derive_seed(seed, "sample", i)``."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    if isinstance(profile, str):
        profile = make_profile(profile, config.delay_spread_s)
    h = np.empty((n, config.num_rx_antennas, config.num_subcarriers, config.num_symbols), np.complex128)
    scales = np.empty(n)
    for i in range(n):
        s = synthesize_channel(profile, config, sample_seed(seed, i))
        h[i] = s.h
        scales[i] = s.scale
    return Dataset(profile=profile.name, config=config, h=h, seed=seed, scales=scales)


# -- cross-antenna split -------------------------------------------------------

def _stack(h: np.ndarray, antennas: tuple[int, ...]) -> np.ndarray:
    """[..., K, F, T] complex -> [..., 2m, F, T] real, channels (re a0, im a0, re a1, ...)."""
    sel = h[..., list(antennas), :, :]
    out = np.stack([sel.real, sel.imag], axis=-3)  # [..., m, 2, F, T]
    return np.ascontiguousarray(out.reshape(out.shape[:-4] + (2 * len(antennas),) + out.shape[-2:]))


def _unstack(x: np.ndarray) -> np.ndarray:
    m = x.shape[-3] // 2
    pairs = x.reshape(x.shape[:-3] + (m, 2) + x.shape[-2:])
    return pairs[..., 0, :, :] + 1j * pairs[..., 1, :, :]


def split_arrays(h: np.ndarray, config: ChannelConfig) -> tuple[np.ndarray, np.ndarray]:
    config.validate()
    return _stack(h, config.observed), _stack(h, config.predicted)


def split_antennas(sample: ChannelSample, config: ChannelConfig) -> tuple[Tensor, Tensor]:
    """Observed block ``H_s`` [2 m_s, F, T] and target block ``H_r`` [2 m_r, F, T]."""
    hs, hr = split_arrays(sample.h, config)
    return Tensor(hs), Tensor(hr)


def reassemble(h_s, h_r, config: ChannelConfig) -> np.ndarray:
    """Complex [K, F, T] grid with the selected antennas filled in, zeros elsewhere."""
    hs = h_s.data if isinstance(h_s, Tensor) else np.asarray(h_s)
    hr = h_r.data if isinstance(h_r, Tensor) else np.asarray(h_r)
    out = np.zeros((config.num_rx_antennas,) + hs.shape[-2:], np.complex128)
    out[list(config.observed)] = _unstack(hs)
    out[list(config.predicted)] = _unstack(hr)
    return out


# -- MCHD files ----------------------------------------------------------------

MAGIC = b"MCHD"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIB7x")
HEADER_SIZE = _HEADER.size  # 32


def save_dataset(dataset: Dataset, path) -> None:
    n, k, f, t = dataset.h.shape
    header = _HEADER.pack(MAGIC, VERSION, 0, n, k, f, t, PROFILE_IDS[dataset.profile])
    payload = np.ascontiguousarray(dataset.h, dtype="<c16").tobytes()
    Path(path).write_bytes(header + payload)


def load_dataset(path, config: ChannelConfig | None = None) -> Dataset:
    """Read an MCHD file.  Grid extents come from the header; the remaining
    config fields come from ``config`` (defaults when omitted)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"header truncated: {len(raw)} of {HEADER_SIZE} bytes")
    magic, version, flags, n, k, f, t, pid = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise FormatError(f"version: expected {VERSION}, found {version}")
    if flags != 0:
        raise FormatError(f"flags: expected 0, found {flags}")
    names = {v: key for key, v in PROFILE_IDS.items()}
    if pid not in names:
        raise FormatError(f"profile_id: unknown value {pid}")
    expected = HEADER_SIZE + n * k * f * t * 16
    if len(raw) != expected:
        raise FormatError(f"payload: expected {expected} bytes in total, found {len(raw)}")
    h = np.frombuffer(raw, dtype="<c16", offset=HEADER_SIZE).reshape(n, k, f, t).astype(np.complex128)
    base = config or ChannelConfig()
    try:
        cfg = replace(base, num_rx_antennas=k, num_subcarriers=f, num_symbols=t)
    except ConfigError as exc:
        raise FormatError(f"num_antennas: {exc}") from exc
    return Dataset(profile=names[pid], config=cfg, h=h)
