"""Synthetic two-sensor MOS recordings for H2 / CO / H2+CO exposures.

Each sensor follows a power-law steady-state sensitivity with first-order rise
and recovery kinetics:

    r(t) = baseline + S(h2, co) * g(t) + drift * t/dt + noise
    S(h2, co) = a_h2 * h2**e_h2 + a_co * co**e_co

where ``g`` rises as ``1 - exp(-(t - t_on)/tau_rise)`` during exposure and decays
exponentially with ``tau_decay`` after it. The two default sensors have
different exponent pairs, so a mixture is not a linear blend of pure traces.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .config import from_dict
from .dataset import DT, MANIFEST, MANIFEST_HEADER, N_NODES, Dataset, DatasetError, GasLabel, Sample

DURATION = N_NODES * DT
_MIN_READING = 1e-6


@dataclass(frozen=True)
class SensorModel:
    name: str
    baseline: float
    amplitude_h2: float
    amplitude_co: float
    exponent_h2: float
    exponent_co: float
    tau_rise: float = 15.0
    tau_decay: float = 40.0
    noise_sigma: float = 0.01
    drift_per_sample: float = 1e-5

    def __post_init__(self):
        if self.baseline <= 0:
            raise ValueError(f"{self.name}: baseline must be > 0")
        if self.tau_rise <= 0 or self.tau_decay <= 0:
            raise ValueError(f"{self.name}: time constants must be > 0")
        if self.noise_sigma < 0:
            raise ValueError(f"{self.name}: noise_sigma must be >= 0")
        for e in (self.exponent_h2, self.exponent_co):
            if not 0 < e < 1:
                raise ValueError(f"{self.name}: exponents must lie in (0, 1), got {e}")

    def sensitivity(self, h2: float, co: float) -> float:
        return self.amplitude_h2 * h2**self.exponent_h2 + self.amplitude_co * co**self.exponent_co


def default_sensors() -> tuple[SensorModel, ...]:
    # TGS813 leans to H2; TGS2611 weighs CO more heavily. Toy values, not a calibration.
    return (
        SensorModel("TGS813", baseline=1.0, amplitude_h2=0.40, amplitude_co=0.08, exponent_h2=0.55, exponent_co=0.50),
        SensorModel("TGS2611", baseline=0.8, amplitude_h2=0.10, amplitude_co=0.30, exponent_h2=0.45, exponent_co=0.55),
    )


@dataclass(frozen=True)
class GenConfig:
    n_pure_h2: int = 150
    n_pure_co: int = 150
    n_mix: int = 300
    ppm_min: float = 10.0
    ppm_max: float = 1000.0
    mix_co_sigma: float = 100.0
    exposure_start: float = 10.0
    exposure_end: float = 150.0
    seed: int = 0
    adc_bits: int = 0  # 0 disables quantisation
    adc_full_scale: float = 40.0
    sensors: tuple[SensorModel, ...] = field(default_factory=default_sensors)

    def __post_init__(self):
        if min(self.n_pure_h2, self.n_pure_co, self.n_mix) < 0:
            raise ValueError("class counts must be >= 0")
        if not 0 < self.ppm_min < self.ppm_max:
            raise ValueError(f"need 0 < ppm_min < ppm_max, got {self.ppm_min}, {self.ppm_max}")
        if not 0 <= self.exposure_start < self.exposure_end <= DURATION:
            raise ValueError(f"need 0 <= exposure_start < exposure_end <= {DURATION:g}")
        if self.mix_co_sigma < 0:
            raise ValueError("mix_co_sigma must be >= 0")
        if not self.sensors or len(self.sensors) > 2:
            raise ValueError("one or two sensors are supported")
        if self.adc_bits < 0 or self.adc_full_scale <= 0:
            raise ValueError("invalid ADC settings")
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        if "sensors" in d:
            d["sensors"] = tuple(from_dict(SensorModel, s, "generate.sensors") for s in d["sensors"])
        return from_dict(cls, d, "generate")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.sensors)


def draw_concentrations(cfg: GenConfig, label: GasLabel, rng: np.random.Generator) -> tuple[float, float]:
    lo, hi = cfg.ppm_min, cfg.ppm_max
    label = GasLabel(label)
    if label == GasLabel.H2:
        return float(rng.uniform(lo, hi)), 0.0
    if label == GasLabel.CO:
        return 0.0, float(rng.uniform(lo, hi))
    h2 = float(rng.uniform(lo, hi))
    co = float(np.clip(rng.normal(h2, cfg.mix_co_sigma), lo, hi))
    return h2, co


def exposure_profile(cfg: GenConfig, sensor: SensorModel, t: np.ndarray) -> np.ndarray:
    """Unit-plateau kinetic profile g(t) for one sensor."""
    t_on, t_off = cfg.exposure_start, cfg.exposure_end
    g = np.zeros_like(t, dtype=np.float64)
    on = (t >= t_on) & (t <= t_off)
    g[on] = -np.expm1(-(t[on] - t_on) / sensor.tau_rise)
    peak = -np.expm1(-(t_off - t_on) / sensor.tau_rise)
    after = t > t_off
    g[after] = peak * np.exp(-(t[after] - t_off) / sensor.tau_decay)
    return g


def synthesize_sample(
    cfg: GenConfig,
    label: GasLabel,
    h2: float,
    co: float,
    rng: np.random.Generator,
    sample_id: str = "s0",
) -> Sample:
    t = np.arange(N_NODES) * DT
    cols = []
    for sensor in cfg.sensors:
        r = sensor.baseline + sensor.sensitivity(h2, co) * exposure_profile(cfg, sensor, t)
        r = r + sensor.drift_per_sample * np.arange(N_NODES)
        if sensor.noise_sigma > 0:
            r = r + rng.normal(0.0, sensor.noise_sigma, N_NODES)
        if cfg.adc_bits:
            levels = 2**cfg.adc_bits - 1
            r = np.round(np.clip(r, 0, cfg.adc_full_scale) / cfg.adc_full_scale * levels) / levels * cfg.adc_full_scale
        cols.append(np.maximum(r, _MIN_READING))
    return Sample(sample_id, GasLabel(label), float(h2), float(co), np.column_stack(cols), DT, cfg.channel_names)


def _labels(cfg: GenConfig) -> list[GasLabel]:
    return [GasLabel.H2] * cfg.n_pure_h2 + [GasLabel.CO] * cfg.n_pure_co + [GasLabel.MIX] * cfg.n_mix


def generate_sample(cfg: GenConfig, index: int, label: GasLabel) -> Sample:
    # one stream per sample index: order-independent, so parallel == serial
    rng = make_rng(cfg.seed, 10, index)
    h2, co = draw_concentrations(cfg, label, rng)
    return synthesize_sample(cfg, label, h2, co, rng, f"s{index:04d}")


def generate_dataset(cfg: GenConfig = GenConfig()) -> Dataset:
    samples = tuple(generate_sample(cfg, i, lab) for i, lab in enumerate(_labels(cfg)))
    if not samples:
        raise ValueError("configuration produces no samples")
    return Dataset(samples, cfg.channel_names)


def sensitivity_matrix(cfg: GenConfig, h2: float = 100.0, co: float = 100.0) -> np.ndarray:
    """Jacobian of the plateau map (h2, co) -> (S_sensor0, S_sensor1) at a point."""
    return np.array(
        [
            [s.amplitude_h2 * s.exponent_h2 * h2 ** (s.exponent_h2 - 1), s.amplitude_co * s.exponent_co * co ** (s.exponent_co - 1)]
            for s in cfg.sensors
        ]
    )


def write_dataset(ds: Dataset, root_dir) -> Path:
    """Write ``manifest.csv`` plus ``samples/<id>.csv``; returns the manifest path."""
    root = Path(root_dir)
    try:
        (root / "samples").mkdir(parents=True, exist_ok=True)
        rows = [",".join(MANIFEST_HEADER)]
        header = ",".join(("t",) + ds.channel_names)
        dt = ds.samples[0].dt if ds.samples else DT
        t = [repr(round(i * dt, 6)) for i in range(N_NODES)]
        for s in ds.samples:
            rel = f"samples/{s.id}.csv"
            lines = [header]
            lines += [",".join([ti] + [repr(v) for v in row]) for ti, row in zip(t, s.readings.tolist())]
            (root / rel).write_text("\n".join(lines) + "\n")
            rows.append(f"{s.id},{s.label.name},{s.h2_ppm!r},{s.co_ppm!r},{rel}")
        manifest = root / MANIFEST
        manifest.write_text("\n".join(rows) + "\n")
    except OSError as e:
        raise DatasetError(f"{e.filename or root}: cannot write dataset ({e.strerror})") from None
    return manifest
