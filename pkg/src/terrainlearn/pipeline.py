"""Online experiment loop: encode, predict, classify, train, measure.

Per step t the stream does: encode frame t -> classify it with the current
net (scored before the net ever trains on it) -> push the sample -> assemble
a 50-50 batch -> train -> advance the GVF bank on the t -> t+1 transition.
The GVF bank never sees labels and the nets never influence the bank, so the
bank's prediction trace is computed once per session and shared by all
variants; the per-step semantics are unchanged.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gait import N_TERRAINS
from .gvf import GvfBank, PREDICTION_CLAMP, default_alpha
from .kanerva import SelectiveKanervaCoder
from .policy import (
    BATCH_NEW,
    CONTROL,
    VARIANTS,
    PolicyNet,
    ReplayBuffer,
    assemble_batch,
)
from .preprocess import ProcessedSession


def child_seed(seed: int, *key: int) -> int:
    """Stable derived seed for a named substream."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


@dataclass
class CoderConfig:
    n_prototypes: int = 5000
    resolutions: tuple[int, ...] = (500, 100, 25)
    seed: int = 0

    def build(self) -> SelectiveKanervaCoder:
        return SelectiveKanervaCoder(
            n_prototypes=self.n_prototypes,
            resolutions=self.resolutions,
            random_state=self.seed,
        )


@dataclass
class GvfConfig:
    gamma: float = 0.94
    lam: float = 0.5
    alpha: float | None = None  # None -> 0.1 / active-bit count

    def build(self, n_channels: int, coder: SelectiveKanervaCoder) -> GvfBank:
        alpha = self.alpha if self.alpha is not None else default_alpha(coder.n_active)
        return GvfBank(
            n_channels=n_channels,
            n_features=coder.feature_length,
            gamma=self.gamma,
            lam=self.lam,
            alpha=alpha,
        )


@dataclass
class PolicyConfig:
    encoder_sizes: tuple[int, ...] = (24, 16)
    head_sizes: tuple[int, ...] = (32, 16)
    learning_rate: float = 0.001
    optimizer: str = "adam"
    buffer_capacity: int = 1000
    train_start: int = BATCH_NEW  # samples that must exist before training
    train_delay: int = 0  # optional extra burn-in steps with no training


@dataclass
class RunConfig:
    variants: tuple[str, ...] = VARIANTS
    window: int = 500
    end_fraction: float = 0.1
    gvf_error_window: int = 200
    coder: CoderConfig = field(default_factory=CoderConfig)
    gvf: GvfConfig = field(default_factory=GvfConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def validate(self) -> None:
        if not self.variants:
            raise ValidationError("at least one variant must be selected")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValidationError(f"unknown variant {v!r}")
        if self.window < 1:
            raise ValidationError("window must be >= 1")
        if not 0.0 < self.end_fraction <= 1.0:
            raise ValidationError("end_fraction must be in (0, 1]")


@dataclass
class GvfTrace:
    """Per-step GVF outputs; row t is what is available when scoring frame t."""

    v: np.ndarray  # (n_frames, n_channels) raw predictions
    normalized: np.ndarray  # scaled by (1 - gamma) and clamped
    gamma: float


@dataclass
class VariantResult:
    variant: str
    seed: int
    curve: np.ndarray  # windowed prequential accuracy
    window: int
    accuracy_overall: float  # prequential, all frames
    accuracy_end: float  # mean over the final fraction of frames
    per_terrain: np.ndarray  # (7,) diagonal / row sum, nan for absent terrains
    confusion: np.ndarray  # (7, 7) counts, rows = correct
    losses: np.ndarray  # per-training-step mean batch loss


@dataclass
class RunMetrics:
    results: list[VariantResult]
    gvf_error: np.ndarray  # per-channel mean squared return error
    n_frames: int

    def result(self, variant: str) -> VariantResult:
        for r in self.results:
            if r.variant == variant:
                return r
        raise KeyError(variant)


def compute_gvf_trace(frames: np.ndarray, active: np.ndarray, bank: GvfBank) -> GvfTrace:
    """Stream the bank over the session, recording post-update predictions.

    Row 0 is zero: nothing has been learned when the first frame arrives.
    """
    n = frames.shape[0]
    v = np.zeros((n, bank.n_channels))
    for t in range(n - 1):
        v[t + 1] = bank.step(active[t], active[t + 1], frames[t + 1])
    lo, hi = PREDICTION_CLAMP
    return GvfTrace(v=v, normalized=np.clip(v * (1.0 - bank.gamma), lo, hi),
                    gamma=bank.gamma)


def gvf_return_error(frames: np.ndarray, trace: GvfTrace, window: int = 200) -> np.ndarray:
    """Mean squared error of (1-gamma)-scaled predictions against the
    brute-force truncated discounted average over the next `window` steps.

    Steps without enough trailing frames are excluded.
    """
    n, n_channels = frames.shape
    n_valid = n - window
    if n_valid < 1:
        raise ValidationError("session too short for the return-error window")
    gamma = trace.gamma
    kernel = (1.0 - gamma) * gamma ** np.arange(window)
    errors = np.empty(n_channels)
    for ch in range(n_channels):
        target = np.correlate(frames[1:, ch], kernel, mode="valid")
        predicted = trace.v[:n_valid, ch] * (1.0 - gamma)
        errors[ch] = np.mean((predicted - target) ** 2)
    return errors


def run_policy_stream(
    frames: np.ndarray,
    labels: np.ndarray,
    predictions: np.ndarray,
    variant: str,
    seed: int,
    policy: PolicyConfig,
    window: int = 500,
    end_fraction: float = 0.1,
) -> VariantResult:
    """Prequential test-then-train pass of one net over one session."""
    n = frames.shape[0]
    uses_predictions = variant != CONTROL
    net = PolicyNet(
        variant=variant,
        encoder_sizes=policy.encoder_sizes,
        head_sizes=policy.head_sizes,
        learning_rate=policy.learning_rate,
        optimizer=policy.optimizer,
        init_seed=child_seed(seed, VARIANTS.index(variant), 0),
        n_actual=frames.shape[1],
        n_predictions=predictions.shape[1],
    ).build()
    replay_rng = np.random.default_rng(child_seed(seed, VARIANTS.index(variant), 1))
    recent = deque(maxlen=BATCH_NEW)
    buffer = ReplayBuffer(policy.buffer_capacity)

    confusion = np.zeros((N_TERRAINS, N_TERRAINS), dtype=np.int64)
    correct = np.empty(n, dtype=bool)
    losses = []
    for t in range(n):
        _, probs = net.forward(frames[t], predictions[t] if uses_predictions else None)
        guess = int(np.argmax(probs))
        confusion[labels[t], guess] += 1
        correct[t] = guess == labels[t]

        sample = (frames[t], predictions[t], int(labels[t]))
        recent.append(sample)
        buffer.push(sample)
        if t + 1 >= max(policy.train_start, 1) and t >= policy.train_delay:
            batch = assemble_batch(recent, buffer, replay_rng)
            acts = np.stack([s[0] for s in batch])
            preds = np.stack([s[1] for s in batch]) if uses_predictions else None
            ys = np.array([s[2] for s in batch])
            losses.append(net.train_batch(acts, preds, ys))

    n_windows = n // window
    curve = correct[: n_windows * window].reshape(n_windows, window).mean(axis=1)
    n_end = max(1, int(round(end_fraction * n)))
    row_sums = confusion.sum(axis=1)
    per_terrain = np.divide(
        np.diag(confusion), row_sums,
        out=np.full(N_TERRAINS, np.nan), where=row_sums > 0,
    )
    return VariantResult(
        variant=variant,
        seed=seed,
        curve=curve,
        window=window,
        accuracy_overall=float(correct.mean()),
        accuracy_end=float(correct[-n_end:].mean()),
        per_terrain=per_terrain,
        confusion=confusion,
        losses=np.asarray(losses),
    )


def run_online(
    session: ProcessedSession,
    config: RunConfig | None = None,
    seed: int = 0,
    coder: SelectiveKanervaCoder | None = None,
) -> RunMetrics:
    """Full online pass: SKC encoding, GVF trace, one policy stream per variant."""
    config = config or RunConfig()
    config.validate()
    frames, labels = session.frames, session.labels
    if labels.min() < 0 or labels.max() >= N_TERRAINS:
        raise ValidationError("session labels out of range 0..6")

    if coder is None:
        coder = config.coder.build()
    if not hasattr(coder, "prototypes_"):
        coder.fit(frames)
    if coder.n_features_in_ != frames.shape[1]:
        raise ValidationError(
            f"coder expects {coder.n_features_in_}-dimensional states, "
            f"session has {frames.shape[1]} channels"
        )
    active = coder.encode_batch(frames)

    bank = config.gvf.build(frames.shape[1], coder)
    trace = compute_gvf_trace(frames, active, bank)

    results = [
        run_policy_stream(
            frames, labels, trace.normalized, variant, seed, config.policy,
            window=config.window, end_fraction=config.end_fraction,
        )
        for variant in config.variants
    ]
    gvf_err = gvf_return_error(frames, trace, window=config.gvf_error_window)
    return RunMetrics(results=results, gvf_error=gvf_err, n_frames=frames.shape[0])


def _run_one_session(args):
    session, config, seed = args
    return run_online(session, config, seed=seed)


@dataclass
class ComparisonResult:
    """Per-session metrics for every variant, ready for the stats module."""

    metrics: list[RunMetrics]
    seeds: list[int]
    variants: tuple[str, ...]

    def end_accuracies(self, variant: str) -> np.ndarray:
        return np.array([m.result(variant).accuracy_end for m in self.metrics])

    def overall_accuracies(self, variant: str) -> np.ndarray:
        return np.array([m.result(variant).accuracy_overall for m in self.metrics])

    def per_terrain(self, variant: str) -> np.ndarray:
        """(n_runs, 7) per-terrain accuracies."""
        return np.stack([m.result(variant).per_terrain for m in self.metrics])

    def aggregate_confusion(self, variant: str) -> np.ndarray:
        return np.sum([m.result(variant).confusion for m in self.metrics], axis=0)


def compare_variants(
    sessions: list[ProcessedSession],
    config: RunConfig | None = None,
    seeds: list[int] | None = None,
    jobs: int = 1,
) -> ComparisonResult:
    """Run every configured variant over each session.

    Sessions are independent, so they may run in parallel processes; results
    are collected in session order either way.
    """
    config = config or RunConfig()
    config.validate()
    if not sessions:
        raise ValidationError("at least one session is required")
    if seeds is None:
        seeds = [
            s.config.seed if s.config is not None else i
            for i, s in enumerate(sessions)
        ]
    if len(seeds) != len(sessions):
        raise ValidationError("seeds must pair one-to-one with sessions")

    tasks = [(session, config, seed) for session, seed in zip(sessions, seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            metrics = list(pool.map(_run_one_session, tasks))
    else:
        metrics = [_run_one_session(t) for t in tasks]
    return ComparisonResult(metrics=metrics, seeds=list(seeds), variants=config.variants)
