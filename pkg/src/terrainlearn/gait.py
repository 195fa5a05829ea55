"""Seeded synthetic gait-signal sessions.

Stands in for wearable lower-limb recordings: 30 channels (EMG, goniometer,
pressure) sampled at a high raw rate, with contiguous terrain-labelled
segments. Signals are quasi-periodic (harmonics of the gait cadence) with
per-(terrain, channel) amplitude/phase/offset signatures, so terrains are
distinct but overlapping. Everything is a pure function of the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .errors import ValidationError


class TerrainLabel(IntEnum):
    """The 7 terrain categories, with stable integer encoding 0..6."""

    EVEN_GROUND = 0
    UNEVEN_GROUND = 1
    UP_STAIRS = 2
    DOWN_STAIRS = 3
    UP_RAMP = 4
    DOWN_RAMP = 5
    TURNS = 6


#: Canonical display names, index-aligned with TerrainLabel values.
TERRAIN_NAMES = (
    "EvenGround",
    "UnevenGround",
    "UpStairs",
    "DownStairs",
    "UpRamp",
    "DownRamp",
    "Turns",
)

N_TERRAINS = len(TERRAIN_NAMES)


class ChannelKind(str, Enum):
    EMG = "EMG"
    GONIOMETER = "Goniometer"
    PRESSURE = "Pressure"


def default_channel_kinds(n_channels: int) -> list[ChannelKind]:
    """14 EMG / 4 goniometer / 12 pressure for 30 channels; proportional otherwise."""
    if n_channels == 30:
        counts = (14, 4, 12)
    else:
        n_emg = max(1, round(14 / 30 * n_channels))
        n_gon = max(1, round(4 / 30 * n_channels))
        if n_emg + n_gon >= n_channels:
            n_emg, n_gon = max(1, n_channels - 2), min(1, n_channels - 1)
        counts = (n_emg, n_gon, n_channels - n_emg - n_gon)
    kinds = (
        [ChannelKind.EMG] * counts[0]
        + [ChannelKind.GONIOMETER] * counts[1]
        + [ChannelKind.PRESSURE] * counts[2]
    )
    return kinds[:n_channels]


# How strongly a terrain's signature departs from the even-ground baseline.
# Ramps/turns/uneven sit closer to even ground than stairs do, so the easy
# confusions land where they should.
_TERRAIN_DEVIATION = {
    TerrainLabel.EVEN_GROUND: 0.0,
    TerrainLabel.UNEVEN_GROUND: 0.45,
    TerrainLabel.UP_STAIRS: 1.0,
    TerrainLabel.DOWN_STAIRS: 1.0,
    TerrainLabel.UP_RAMP: 0.5,
    TerrainLabel.DOWN_RAMP: 0.5,
    TerrainLabel.TURNS: 0.5,
}

_MAX_HARMONICS = 5


@dataclass
class SessionConfig:
    """Knobs for one synthetic session.

    ``segment_steps`` bounds the per-terrain dwell time, in target-rate steps.
    """

    seed: int = 0
    raw_rate_hz: float = 1000.0
    target_rate_hz: float = 33.0
    n_channels: int = 30
    total_target_steps: int = 16500
    cycle_period_s: float = 1.0
    segment_steps: tuple[int, int] = (400, 1200)
    noise_std: float = 0.05

    @property
    def decimation_factor(self) -> int:
        return int(round(self.raw_rate_hz / self.target_rate_hz))

    @property
    def effective_rate_hz(self) -> float:
        return self.raw_rate_hz / self.decimation_factor

    @property
    def samples_per_cycle(self) -> int:
        return int(round(self.cycle_period_s * self.raw_rate_hz))

    def validate(self) -> None:
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        if self.raw_rate_hz <= 0 or self.target_rate_hz <= 0:
            raise ValidationError("sampling rates must be positive")
        if self.n_channels < 1:
            raise ValidationError("n_channels must be >= 1")
        if not 14000 <= self.total_target_steps <= 18000:
            raise ValidationError(
                f"total_target_steps must be in [14000, 18000], got {self.total_target_steps}"
            )
        if self.cycle_period_s <= 0:
            raise ValidationError("cycle_period_s must be positive")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be nonnegative")
        k = self.raw_rate_hz / self.target_rate_hz
        if round(k) < 1:
            raise ValidationError(
                "raw_rate_hz must be at least target_rate_hz (integer decimation)"
            )
        effective = self.raw_rate_hz / round(k)
        if abs(effective - self.target_rate_hz) / self.target_rate_hz > 0.05:
            raise ValidationError(
                f"raw rate {self.raw_rate_hz} is not an integer multiple of the "
                f"target rate {self.target_rate_hz} (effective {effective:.2f} Hz "
                "is off by more than 5%)"
            )
        highest_hz = _MAX_HARMONICS / self.cycle_period_s
        if self.raw_rate_hz <= 2 * highest_hz:
            raise ValidationError(
                f"raw_rate_hz must exceed twice the highest synthesized frequency "
                f"({highest_hz:.1f} Hz)"
            )
        spc = self.cycle_period_s * self.raw_rate_hz
        if abs(spc - round(spc)) > 1e-9 or round(spc) < 2:
            raise ValidationError(
                "cycle_period_s * raw_rate_hz must be an integer number of samples"
            )
        lo, hi = self.segment_steps
        if not (1 <= lo <= hi):
            raise ValidationError(f"segment_steps range {self.segment_steps} is invalid")
        if self.total_target_steps < 2 * N_TERRAINS * lo:
            raise ValidationError(
                "total_target_steps too small to fit two segments of every terrain"
            )


@dataclass
class RawSession:
    """One synthetic recording at the raw rate.

    channels is (n_channels, n_samples); labels is an aligned int8 vector of
    TerrainLabel values with contiguous runs per terrain segment.
    """

    channels: np.ndarray
    labels: np.ndarray
    channel_kinds: list[ChannelKind]
    config: SessionConfig = field(repr=False, default_factory=SessionConfig)

    def __post_init__(self):
        if any(len(c) != len(self.labels) for c in self.channels):
            raise ValidationError("channel and label sequences must have equal length")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


def _rngs(seed: int, *streams: str) -> list[np.random.Generator]:
    """Independent named child generators so streams don't perturb each other."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(streams))
    return [np.random.default_rng(c) for c in children]


def terrain_schedule(config: SessionConfig) -> list[tuple[TerrainLabel, int]]:
    """Seeded terrain order with every terrain >= 2 times.

    Segment lengths (target-rate steps) are drawn from config.segment_steps
    and sum exactly to total_target_steps.
    """
    config.validate()
    rng = _rngs(config.seed, "schedule", "profiles", "carrier", "noise")[0]
    lo, hi = config.segment_steps
    total = config.total_target_steps

    lengths = list(rng.integers(lo, hi + 1, size=2 * N_TERRAINS))
    terrains = [TerrainLabel(t) for t in range(N_TERRAINS)] * 2

    while True:
        rem = total - int(sum(lengths))
        if rem == 0:
            break
        if rem < 0:
            # The base draws overshot: shrink segments toward lo in seeded order.
            deficit = -rem
            order = rng.permutation(len(lengths))
            for i in order:
                cut = min(deficit, lengths[i] - lo)
                lengths[i] -= cut
                deficit -= cut
                if deficit == 0:
                    break
            if deficit > 0:
                raise ValidationError("cannot partition total_target_steps into segments")
        elif lo <= rem <= hi:
            lengths.append(rem)
            terrains.append(TerrainLabel(int(rng.integers(N_TERRAINS))))
        elif rem > hi:
            draw = int(rng.integers(lo, hi + 1))
            if 0 < rem - draw < lo and lo <= rem - lo <= hi:
                draw = rem - lo  # leave room for one final valid segment
            lengths.append(draw)
            terrains.append(TerrainLabel(int(rng.integers(N_TERRAINS))))
        else:
            # 0 < rem < lo: spread one step at a time over segments with slack.
            spread = False
            for i in rng.permutation(len(lengths)):
                if lengths[i] < hi:
                    add = min(rem, hi - lengths[i])
                    lengths[i] += add
                    rem -= add
                    spread = True
                if rem == 0:
                    break
            if not spread:
                raise ValidationError("cannot partition total_target_steps into segments")

    pairs = list(zip(terrains, [int(n) for n in lengths]))
    rng.shuffle(pairs)
    return pairs


def _draw_profiles(rng: np.random.Generator, n_channels: int):
    """Per-(terrain, channel) harmonic signatures.

    Every terrain is the even-ground baseline plus a deviation scaled by how
    far that terrain should sit from it.
    """
    H = _MAX_HARMONICS
    n_harm = rng.integers(3, H + 1, size=n_channels)
    decay = 1.0 / (1.0 + np.arange(H))
    base_amp = rng.uniform(0.25, 1.0, size=(n_channels, H)) * decay
    base_phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_channels, H))
    base_offset = rng.uniform(0.9, 1.6, size=n_channels)

    amps = np.empty((N_TERRAINS, n_channels, H))
    phases = np.empty((N_TERRAINS, n_channels, H))
    offsets = np.empty((N_TERRAINS, n_channels))
    for t in TerrainLabel:
        dev = _TERRAIN_DEVIATION[t]
        d_amp = rng.uniform(-0.4, 0.4, size=(n_channels, H))
        d_phase = rng.uniform(-1.3, 1.3, size=(n_channels, H))
        d_offset = rng.uniform(-0.45, 0.45, size=n_channels)
        amps[t] = np.clip(base_amp + dev * d_amp, 0.05, None)
        phases[t] = base_phase + dev * d_phase
        offsets[t] = base_offset + dev * d_offset

    harm_mask = (np.arange(H)[None, :] < n_harm[:, None]).astype(float)
    amps *= harm_mask[None, :, :]
    return amps, phases, offsets


def generate_session(config: SessionConfig) -> RawSession:
    """Deterministic synthetic recording for the given config.

    Channels are sums of 3-5 cadence harmonics with terrain-specific
    signatures plus Gaussian noise. EMG channels amplitude-modulate a
    cycle-periodic broadband carrier; pressure channels are rectified.
    """
    config.validate()
    rng_sched, rng_prof, rng_carrier, rng_noise = _rngs(
        config.seed, "schedule", "profiles", "carrier", "noise"
    )
    del rng_sched  # schedule uses its own identically-seeded stream below

    schedule = terrain_schedule(config)
    k = config.decimation_factor
    P = config.samples_per_cycle
    n_ch = config.n_channels
    n_raw = config.total_target_steps * k
    kinds = default_channel_kinds(n_ch)

    amps, phases, offsets = _draw_profiles(rng_prof, n_ch)

    # One gait cycle of each (terrain, channel) waveform; sessions tile it by
    # global sample index, which keeps channels exactly periodic.
    tau = np.arange(P) / config.raw_rate_hz
    h = 1.0 + np.arange(_MAX_HARMONICS)
    angle = 2.0 * np.pi * (h[:, None] / config.cycle_period_s) * tau[None, :]  # (H, P)
    waves = np.empty((N_TERRAINS, n_ch, P))
    for t in range(N_TERRAINS):
        for ch in range(n_ch):
            waves[t, ch] = offsets[t, ch] + (
                amps[t, ch][:, None] * np.sin(angle + phases[t, ch][:, None])
            ).sum(axis=0)

    # One carrier cycle per channel, tiled, so EMG stays cycle-periodic too.
    carrier = rng_carrier.standard_normal(size=(n_ch, P))

    labels = np.empty(n_raw, dtype=np.int8)
    channels = np.empty((n_ch, n_raw))
    pos = 0
    for terrain, steps in schedule:
        seg = steps * k
        idx = (np.arange(pos, pos + seg)) % P
        labels[pos : pos + seg] = int(terrain)
        for ch in range(n_ch):
            base = waves[terrain, ch][idx]
            if kinds[ch] is ChannelKind.EMG:
                channels[ch, pos : pos + seg] = np.maximum(base, 0.0) * carrier[ch][idx]
            else:
                channels[ch, pos : pos + seg] = base
        pos += seg

    if config.noise_std > 0:
        for ch in range(n_ch):
            channels[ch] += config.noise_std * rng_noise.standard_normal(n_raw)

    for ch in range(n_ch):
        if kinds[ch] is ChannelKind.PRESSURE:
            np.maximum(channels[ch], 0.0, out=channels[ch])

    return RawSession(channels=channels, labels=labels, channel_kinds=kinds, config=config)
