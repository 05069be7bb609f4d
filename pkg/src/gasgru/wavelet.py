"""One-level Daubechies-5 wavelet features.

The transform is a periodic, stride-2 orthonormal filter bank. Each sensor
channel of a sample is split into approximation and detail subbands, and the
subbands are stacked as channels of a half-length feature sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Sample

# Daubechies (1992) db5 scaling filter, orthonormal normalisation (sum = sqrt 2).
DB5_LOWPASS = (
    0.16010239797419293,
    0.6038292697971896,
    0.7243085284377729,
    0.13842814590132074,
    -0.24229488706638203,
    -0.032244869584638375,
    0.07757149384004572,
    -0.006241490212798274,
    -0.012580751999081999,
    0.0033357252854737712,
)

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class WaveletFilters:
    lowpass: np.ndarray
    highpass: np.ndarray

    @classmethod
    def from_lowpass(cls, lowpass) -> "WaveletFilters":
        lo = np.asarray(lowpass, dtype=np.float64)
        n = lo.size
        hi = np.array([(-1) ** k * lo[n - 1 - k] for k in range(n)])
        lo.setflags(write=False)
        hi.setflags(write=False)
        return cls(lo, hi)

    def __len__(self) -> int:
        return self.lowpass.size


DB5 = WaveletFilters.from_lowpass(DB5_LOWPASS)


def _check_length(n: int, filters: WaveletFilters) -> None:
    if n % 2:
        raise ValueError(f"signal length must be even, got {n}")
    if n < len(filters):
        raise ValueError(f"signal length {n} is shorter than the filter length {len(filters)}")


def dwt1(signal, filters: WaveletFilters = DB5) -> tuple[np.ndarray, np.ndarray]:
    """Single-level periodic DWT.

    ``approx[i] = sum_k lowpass[k] * signal[(2i + k) mod T]``, detail likewise
    with the highpass filter. Works along axis 0, so a ``T x C`` matrix is
    transformed column by column.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    _check_length(n, filters)
    base = 2 * np.arange(n // 2)
    approx = np.zeros((n // 2,) + x.shape[1:])
    detail = np.zeros_like(approx)
    # tap-by-tap accumulation keeps each column bit-identical to a 1-D call
    for k in range(len(filters)):
        window = x[(base + k) % n]
        approx += filters.lowpass[k] * window
        detail += filters.highpass[k] * window
    return approx, detail


def idwt1(approx, detail, filters: WaveletFilters = DB5) -> np.ndarray:
    """Inverse of :func:`dwt1` (the synthesis bank is the transpose)."""
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape:
        raise ValueError(f"subband shapes differ: {a.shape} vs {d.shape}")
    half = a.shape[0]
    n = 2 * half
    _check_length(n, filters)
    out = np.zeros((n,) + a.shape[1:])
    base = 2 * np.arange(half)
    for k in range(len(filters)):
        # (2i + k) mod n is injective in i for fixed k, so plain += is safe
        out[(base + k) % n] += filters.lowpass[k] * a + filters.highpass[k] * d
    return out


@dataclass(frozen=True)
class FeatureSequence:
    values: np.ndarray  # (T', C')
    sample_id: str = ""
    channels: tuple[str, ...] = field(default_factory=tuple)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def extract_features(sample: Sample, filters: WaveletFilters = DB5) -> FeatureSequence:
    approx, detail = dwt1(sample.readings, filters)
    t_half, n_ch = approx.shape
    values = np.empty((t_half, 2 * n_ch))
    values[:, 0::2] = approx
    values[:, 1::2] = detail
    names = []
    for ch in sample.channels or tuple(f"ch{i}" for i in range(n_ch)):
        names += [f"{ch}:approx", f"{ch}:detail"]
    return FeatureSequence(values, sample.id, tuple(names))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, fs: FeatureSequence) -> FeatureSequence:
        return apply_standardizer(self, fs)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        mean = np.asarray(d["mean"], dtype=np.float64)
        std = np.asarray(d["std"], dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError(f"standardizer shapes inconsistent: {mean.shape} vs {std.shape}")
        return cls(mean, std)


def fit_standardizer(features: list[FeatureSequence]) -> Standardizer:
    """Per-channel mean and (population) std over every time step of every sequence."""
    if not features:
        raise ValueError("cannot fit a standardizer on an empty list")
    stacked = np.concatenate([f.values for f in features], axis=0)
    mean = stacked.mean(axis=0)
    # summation rounding must not leak into constant channels
    const = stacked.min(axis=0) == stacked.max(axis=0)
    mean[const] = stacked[0, const]
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def apply_standardizer(std: Standardizer, fs: FeatureSequence) -> FeatureSequence:
    if fs.values.shape[1] != std.mean.size:
        raise ValueError(
            f"feature sequence has {fs.values.shape[1]} channels, standardizer expects {std.mean.size}"
        )
    return FeatureSequence((fs.values - std.mean) / std.std, fs.sample_id, fs.channels)
