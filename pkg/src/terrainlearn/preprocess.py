"""Preprocessing chain: per-kind filtering, decimation, min-max normalization.

EMG channels get a Butterworth bandpass, full-wave rectification, and a 5 Hz
envelope lowpass; goniometer and pressure channels get the 5 Hz lowpass only.
All filtering is causal (single pass) because the downstream system runs
online. Decimation keeps every k-th sample; normalization is per channel over
the whole session.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ValidationError
from .gait import ChannelKind, RawSession, SessionConfig

BANDPASS = "bandpass"
LOWPASS = "lowpass"


@dataclass
class FilterSpec:
    """A Butterworth filter request.

    For bandpass, ``order`` is the total order by default (2 poles per edge
    for order 4); set strict_order=False to get that order per edge instead.
    Lowpass uses high_cut_hz as its corner.
    """

    kind: str
    order: int
    sample_rate_hz: float
    low_cut_hz: float | None = None
    high_cut_hz: float | None = None

    def validate(self) -> None:
        if self.kind not in (BANDPASS, LOWPASS):
            raise ValidationError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise ValidationError("filter order must be >= 1")
        if self.sample_rate_hz <= 0:
            raise ValidationError("sample_rate_hz must be positive")
        nyquist = self.sample_rate_hz / 2.0
        if self.high_cut_hz is None or not 0 < self.high_cut_hz < nyquist:
            raise ValidationError(
                f"high_cut_hz must lie strictly below the Nyquist rate {nyquist} Hz"
            )
        if self.kind == BANDPASS:
            if self.low_cut_hz is None or not 0 < self.low_cut_hz < nyquist:
                raise ValidationError(
                    f"low_cut_hz must lie strictly below the Nyquist rate {nyquist} Hz"
                )
            if self.low_cut_hz >= self.high_cut_hz:
                raise ValidationError("bandpass needs low_cut_hz < high_cut_hz")


def design_butterworth(spec: FilterSpec, strict_order: bool = True) -> np.ndarray:
    """Second-order-section cascade for the requested Butterworth response.

    Bilinear transform with frequency prewarping (scipy's butter), so the
    magnitude is exactly 1/sqrt(2) at each design corner.
    """
    spec.validate()
    if spec.kind == LOWPASS:
        return sps.butter(
            spec.order, spec.high_cut_hz, btype="lowpass",
            fs=spec.sample_rate_hz, output="sos",
        )
    if strict_order:
        if spec.order % 2:
            raise ValidationError("a strict-order bandpass needs an even total order")
        n = spec.order // 2
    else:
        n = spec.order
    return sps.butter(
        n, [spec.low_cut_hz, spec.high_cut_hz], btype="bandpass",
        fs=spec.sample_rate_hz, output="sos",
    )


def filter_forward(sections: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Causal single-pass application (direct form II transposed, zero state)."""
    return sps.sosfilt(sections, x)


def magnitude_at(sections: np.ndarray, hz, sample_rate_hz: float) -> np.ndarray:
    """|H| of the cascade at the given frequencies."""
    _, response = sps.sosfreqz(sections, worN=np.atleast_1d(hz), fs=sample_rate_hz)
    return np.abs(response)


def pole_magnitudes(sections: np.ndarray) -> np.ndarray:
    """Magnitudes of all cascade poles (stability check: all < 1)."""
    mags = []
    for section in np.atleast_2d(sections):
        mags.extend(np.abs(np.roots(section[3:])))
    return np.asarray(mags)


@dataclass
class PrepConfig:
    """Filter layout for the preprocessing chain."""

    target_rate_hz: float = 33.0
    emg_band_hz: tuple[float, float] = (10.0, 450.0)
    emg_band_order: int = 4
    strict_order: bool = True
    envelope_cut_hz: float = 5.0
    envelope_order: int = 2
    smooth_cut_hz: float = 5.0
    smooth_order: int = 2


@dataclass
class ProcessedSession:
    """Normalized frames at the target rate; the canonical training input."""

    frames: np.ndarray  # (n_frames, n_channels), every value in [0, 1]
    labels: np.ndarray  # (n_frames,) int8 TerrainLabel values
    channel_kinds: list[ChannelKind]
    normalization_bounds: np.ndarray  # (n_channels, 2) per-channel (min, max)
    effective_rate_hz: float
    constant_channels: list[int] = field(default_factory=list)
    config: SessionConfig | None = None
    prep: PrepConfig | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_channels(self) -> int:
        return self.frames.shape[1]


def normalize_minmax(x: np.ndarray, bounds: tuple[float, float] | None = None):
    """Min-max scale a channel to [0, 1]; a constant channel maps to all 0.5."""
    lo, hi = bounds if bounds is not None else (x.min(), x.max())
    if hi == lo:
        return np.full_like(x, 0.5), (lo, hi), True
    return (x - lo) / (hi - lo), (lo, hi), False


def preprocess(raw: RawSession, prep: PrepConfig | None = None) -> ProcessedSession:
    """Filter per channel kind, decimate to the target rate, normalize to [0, 1]."""
    prep = prep or PrepConfig()
    fs = raw.config.raw_rate_hz
    k = int(round(fs / prep.target_rate_hz))
    if k < 1:
        raise ValidationError("target rate exceeds the raw rate")

    bandpass = design_butterworth(
        FilterSpec(BANDPASS, prep.emg_band_order, fs,
                   low_cut_hz=prep.emg_band_hz[0], high_cut_hz=prep.emg_band_hz[1]),
        strict_order=prep.strict_order,
    )
    envelope = design_butterworth(
        FilterSpec(LOWPASS, prep.envelope_order, fs, high_cut_hz=prep.envelope_cut_hz)
    )
    smooth = design_butterworth(
        FilterSpec(LOWPASS, prep.smooth_order, fs, high_cut_hz=prep.smooth_cut_hz)
    )

    n_ch = raw.channels.shape[0]
    n_frames = raw.n_samples // k
    frames = np.empty((n_frames, n_ch))
    bounds = np.empty((n_ch, 2))
    constant = []
    for ch in range(n_ch):
        x = raw.channels[ch]
        if raw.channel_kinds[ch] is ChannelKind.EMG:
            y = filter_forward(envelope, np.abs(filter_forward(bandpass, x)))
        else:
            y = filter_forward(smooth, x)
        y = y[::k][:n_frames]
        scaled, (lo, hi), is_const = normalize_minmax(y)
        frames[:, ch] = scaled
        bounds[ch] = (lo, hi)
        if is_const:
            constant.append(ch)

    labels = raw.labels[::k][:n_frames].astype(np.int8)
    return ProcessedSession(
        frames=frames,
        labels=labels,
        channel_kinds=list(raw.channel_kinds),
        normalization_bounds=bounds,
        effective_rate_hz=fs / k,
        constant_channels=constant,
        config=raw.config,
        prep=prep,
    )


class SignalPreprocessor:
    """Estimator-style wrapper over the preprocessing chain.

    fit learns the per-channel normalization bounds from a RawSession;
    transform reapplies the same chain and bounds. fit_transform on one
    session is identical to preprocess().
    """

    def __init__(self, prep: PrepConfig | None = None):
        self.prep = prep

    def fit(self, raw: RawSession, y=None):
        processed = preprocess(raw, self.prep)
        self.bounds_ = processed.normalization_bounds
        self.constant_channels_ = processed.constant_channels
        self._fitted = processed
        return self

    def fit_transform(self, raw: RawSession, y=None) -> ProcessedSession:
        self.fit(raw)
        return self._fitted

    def transform(self, raw: RawSession) -> ProcessedSession:
        if not hasattr(self, "bounds_"):
            raise ValidationError("SignalPreprocessor.transform called before fit")
        fresh = preprocess(raw, self.prep)
        frames = np.empty_like(fresh.frames)
        raw_values = self._denormalize(fresh)
        for ch in range(frames.shape[1]):
            scaled, _, _ = normalize_minmax(raw_values[:, ch], tuple(self.bounds_[ch]))
            frames[:, ch] = scaled
        fresh.frames = frames
        fresh.normalization_bounds = self.bounds_.copy()
        fresh.constant_channels = list(self.constant_channels_)
        return fresh

    @staticmethod
    def _denormalize(processed: ProcessedSession) -> np.ndarray:
        out = np.empty_like(processed.frames)
        for ch in range(processed.n_channels):
            lo, hi = processed.normalization_bounds[ch]
            if hi == lo:
                out[:, ch] = lo
            else:
                out[:, ch] = processed.frames[:, ch] * (hi - lo) + lo
        return out

    def get_params(self, deep=True):
        return {"prep": self.prep}

    def set_params(self, **params):
        for key, value in params.items():
            if key != "prep":
                raise ValidationError(f"unknown parameter {key!r}")
            self.prep = value
        return self
