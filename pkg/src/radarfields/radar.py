"""FMCW sensor constants and closed-form signal math.

Powers are linear, non-negative magnitudes. Range bins follow the discrete tone
convention: bin ``b`` holds the IF tone ``b / T_s`` and therefore sits at
range ``b * c / (4 * delta_f)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .errors import BinOutOfRange, ConfigError, OffsetOutOfFov, RangeOutOfSweep, ZeroRange

SPEED_OF_LIGHT = 299_792_458.0
FOUR_PI_CUBED = (4.0 * math.pi) ** 3
MIN_RANGE = 1e-9

_LN2x4 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class RadiationPattern:
    """Antenna gain versus angular offset from boresight (peak 1 at offset 0)."""

    kind: str = "gaussian"
    half_power_beamwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ConfigError(f"unknown radiation pattern kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.half_power_beamwidth is None or not self.half_power_beamwidth > 0:
                raise ConfigError("gaussian pattern needs half_power_beamwidth > 0")

    def __call__(self, offset):
        return pattern_gain(self, offset)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RadiationPattern":
        return cls(kind=d.get("kind", "gaussian"), half_power_beamwidth=d.get("half_power_beamwidth"))


def pattern_gain(pattern: RadiationPattern, offset, half_fov: float | None = None):
    """Gain of ``pattern`` at angular ``offset`` (rad); scalar or array.

    When ``half_fov`` is given, offsets beyond it raise OffsetOutOfFov.
    """
    off = np.asarray(offset, dtype=float)
    if half_fov is not None and np.any(np.abs(off) > half_fov * (1 + 1e-12)):
        raise OffsetOutOfFov(f"offset beyond half-FOV {half_fov}")
    if pattern.kind == "uniform":
        g = np.ones_like(off)
    else:
        hpbw = pattern.half_power_beamwidth
        g = np.exp(-_LN2x4 * off * off / (hpbw * hpbw))
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class RadarConfig:
    omega: float = 77e9
    delta_f: float = 500e6
    t_sweep: float = 1e-3
    n_bins: int = 256
    n_azimuth: int = 180
    p_transmit: float = 1.0
    gain: float = 1408.0
    half_fov_azimuth: float = math.radians(1.0)
    half_fov_elevation: float = 0.2
    azimuth_pattern: RadiationPattern = field(
        default_factory=lambda: RadiationPattern("gaussian", math.radians(2.0)))
    elevation_pattern: RadiationPattern = field(
        default_factory=lambda: RadiationPattern("gaussian", 0.4))
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not (self.delta_f > 0 and self.t_sweep > 0):
            raise ConfigError("delta_f and t_sweep must be positive")
        if self.n_bins < 2 or self.n_azimuth < 1:
            raise ConfigError("need n_bins >= 2 and n_azimuth >= 1")
        if not 0 < self.half_fov_azimuth < math.pi / 2:
            raise ConfigError("half_fov_azimuth must lie in (0, pi/2)")
        if not 0 < self.half_fov_elevation < math.pi / 2:
            raise ConfigError("half_fov_elevation must lie in (0, pi/2)")
        if not (self.p_transmit > 0 and self.gain > 0):
            raise ConfigError("p_transmit and gain must be positive")

    @property
    def range_resolution(self) -> float:
        """Bin spacing in metres, c / (4 delta_f)."""
        return self.c / (4.0 * self.delta_f)

    @property
    def max_range(self) -> float:
        return (self.n_bins - 1) * self.range_resolution

    @property
    def power_constant(self) -> float:
        """P_t G^2 / (4 pi)^3, the range-independent factor of the forward model."""
        return self.p_transmit * self.gain ** 2 / FOUR_PI_CUBED

    def bin_ranges(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.range_resolution

    def beam_azimuths(self) -> np.ndarray:
        """Sensor-frame beam centre azimuths, uniformly spaced over a full turn."""
        return np.arange(self.n_azimuth) * (2.0 * math.pi / self.n_azimuth)

    def replace(self, **changes) -> "RadarConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return RadarConfig(**d)

    def to_dict(self) -> dict[str, Any]:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["azimuth_pattern"] = self.azimuth_pattern.to_dict()
        d["elevation_pattern"] = self.elevation_pattern.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RadarConfig":
        d = dict(d)
        for key in ("azimuth_pattern", "elevation_pattern"):
            if key in d and isinstance(d[key], dict):
                d[key] = RadiationPattern.from_dict(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown radar config keys: {sorted(unknown)}")
        return cls(**d)


def sawtooth_phase(t, cfg: RadarConfig):
    """Instantaneous frequency offset 2*delta_f*mod(t/T_s, 1) of the chirp, Hz."""
    tt = np.asarray(t, dtype=float)
    out = 2.0 * cfg.delta_f * np.mod(tt / cfg.t_sweep, 1.0)
    return float(out) if out.ndim == 0 else out


def if_frequency(range_m, cfg: RadarConfig):
    """Beat tone of a stationary target, range * 4 delta_f / (c T_s)."""
    r = np.asarray(range_m, dtype=float)
    if np.any(r < 0) or np.any(r >= cfg.c * cfg.t_sweep / 2.0):
        raise RangeOutOfSweep("range must satisfy 0 <= R < c*T_s/2")
    out = r * 4.0 * cfg.delta_f / (cfg.c * cfg.t_sweep)
    return float(out) if out.ndim == 0 else out


def bin_to_range(b, cfg: RadarConfig):
    """Range in metres of FFT bin ``b`` (fractional bins allowed)."""
    bb = np.asarray(b, dtype=float)
    if np.any(bb < 0) or np.any(bb >= cfg.n_bins):
        raise BinOutOfRange(f"bin index outside [0, {cfg.n_bins})")
    f_if = bb / cfg.t_sweep
    out = f_if * cfg.c * cfg.t_sweep / (4.0 * cfg.delta_f)
    return float(out) if out.ndim == 0 else out


def range_to_bin(range_m, cfg: RadarConfig):
    """Fractional bin index of a range (inverse of bin_to_range)."""
    return np.asarray(range_m, dtype=float) / cfg.range_resolution


def received_power(sigma, range_m, cfg: RadarConfig):
    """Two-way radar equation P_t G^2 sigma / ((4 pi)^3 R^4)."""
    s = np.asarray(sigma, dtype=float)
    r = np.asarray(range_m, dtype=float)
    if np.any(s < 0):
        raise ValueError("sigma must be non-negative")
    if np.any(r <= MIN_RANGE):
        raise ZeroRange("range must exceed the minimum-range epsilon")
    out = cfg.power_constant * s / r ** 4
    return float(out) if out.ndim == 0 else out


@dataclass
class RadarFrame:
    """One raw measurement: world-from-sensor pose and an (N_phi, N_b) power image."""

    pose: np.ndarray
    azimuths: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        self.azimuths = np.asarray(self.azimuths, dtype=np.float64)
        self.power = np.asarray(self.power, dtype=np.float32)
        if self.pose.shape != (4, 4):
            raise ValueError("pose must be 4x4")
        if self.power.ndim != 2 or self.power.shape[0] != self.azimuths.shape[0]:
            raise ValueError("power must be (n_azimuth, n_bins) matching azimuths")

    @property
    def origin(self) -> np.ndarray:
        return self.pose[:3, 3]

    def __eq__(self, other):
        if not isinstance(other, RadarFrame):
            return NotImplemented
        return (np.array_equal(self.pose, other.pose) and np.array_equal(self.azimuths, other.azimuths)
                and np.array_equal(self.power, other.power))
