"""Continually-trained terrain classifiers and the replay machinery.

Three wirings of the same feed-forward skeleton:

  control     30 actual signals -> encoder -> head -> 7 logits
  input-gvf   60 inputs (actuals ++ predictions) -> encoder -> head -> 7
  latent-gvf  30 actuals -> encoder; predictions appended to the encoder
              output before the head

Training follows the 50-50 new/replay scheme: batches of 32 built from the
16 most recent samples plus 16 uniform draws (with replacement) from a
1000-sample ring buffer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ValidationError
from .gait import N_TERRAINS

CONTROL = "control"
INPUT_GVF = "input-gvf"
LATENT_GVF = "latent-gvf"
VARIANTS = (CONTROL, INPUT_GVF, LATENT_GVF)

BATCH_NEW = 16
BATCH_REPLAY = 16


class ReplayBuffer:
    """Bounded sample store; at capacity the oldest entry is overwritten."""

    def __init__(self, capacity: int = 1000):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = capacity
        self._storage = []
        self._write = 0

    def push(self, sample) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(sample)
        else:
            self._storage[self._write] = sample
        self._write = (self._write + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list:
        """n uniform draws with replacement."""
        if not self._storage:
            return []
        idx = rng.integers(len(self._storage), size=n)
        return [self._storage[i] for i in idx]

    def __len__(self) -> int:
        return len(self._storage)

    def __getitem__(self, i):
        # Index 0 is the oldest surviving sample.
        if len(self._storage) < self.capacity:
            return self._storage[i]
        return self._storage[(self._write + i) % self.capacity]


def _cycle_recent(recent, n: int) -> list:
    """n samples drawn newest-first, cycling, from the recent window."""
    m = len(recent)
    return [recent[-1 - (i % m)] for i in range(n)]


def assemble_batch(recent, buffer: ReplayBuffer, rng: np.random.Generator,
                   new_half: int = BATCH_NEW, replay_half: int = BATCH_REPLAY) -> list:
    """Build one 50-50 new/replay training batch.

    The new half is the most recent samples (cycled if fewer than new_half
    exist); the replay half is uniform-with-replacement draws from the
    buffer, with any shortfall below replay_half filled from the recent
    window again.
    """
    if len(recent) < 1:
        raise ValidationError("assemble_batch needs at least one recent sample")
    batch = list(recent)[-new_half:]
    if len(batch) < new_half:
        batch.extend(_cycle_recent(recent, new_half - len(batch)))
    n_replay = min(replay_half, len(buffer))
    batch.extend(buffer.sample(n_replay, rng))
    if n_replay < replay_half:
        batch.extend(_cycle_recent(recent, replay_half - n_replay))
    return batch


def _relu(z):
    return np.maximum(z, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class PolicyNet(BaseEstimator, ClassifierMixin):
    """Feed-forward softmax classifier in one of the three wirings.

    sklearn surface: predict/predict_proba consume stacked rows (30 columns
    for control, 60 for the GVF variants: actuals then predictions);
    partial_fit runs one optimizer step on a batch. forward/train_batch are
    the explicit two-argument equivalents used by the online pipeline.
    """

    def __init__(self, variant=CONTROL, encoder_sizes=(24, 16), head_sizes=(32, 16),
                 learning_rate=0.001, optimizer="adam", beta1=0.9, beta2=0.999,
                 epsilon=1e-8, init_seed=0, n_actual=30, n_predictions=30,
                 n_classes=N_TERRAINS):
        self.variant = variant
        self.encoder_sizes = encoder_sizes
        self.head_sizes = head_sizes
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.init_seed = init_seed
        self.n_actual = n_actual
        self.n_predictions = n_predictions
        self.n_classes = n_classes

    # -- construction ------------------------------------------------------

    def build(self):
        """Materialize weights; called lazily by the other methods."""
        if hasattr(self, "weights_"):
            return self
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        enc = tuple(int(s) for s in self.encoder_sizes)
        head = tuple(int(s) for s in self.head_sizes)
        if not enc:
            raise ValidationError("encoder_sizes must name at least one layer")
        if any(a <= b for a, b in zip(enc, enc[1:])):
            raise ValidationError(
                f"encoder sizes must be strictly decreasing, got {enc}"
            )
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

        n_in = self.n_actual + (self.n_predictions if self.variant == INPUT_GVF else 0)
        enc_dims = [n_in, *enc]
        merge = enc[-1] + (self.n_predictions if self.variant == LATENT_GVF else 0)
        head_dims = [merge, *head, self.n_classes]

        rng = np.random.default_rng(self.init_seed)
        self.weights_, self.biases_ = [], []
        for dims in (enc_dims, head_dims):
            for fan_in, fan_out in zip(dims, dims[1:]):
                limit = np.sqrt(6.0 / fan_in)
                self.weights_.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                self.biases_.append(np.zeros(fan_out))
        self.n_encoder_layers_ = len(enc)
        self.classes_ = np.arange(self.n_classes)
        self.step_count_ = 0
        self._m = [np.zeros_like(w) for w in self.weights_]
        self._v = [np.zeros_like(w) for w in self.weights_]
        self._mb = [np.zeros_like(b) for b in self.biases_]
        self._vb = [np.zeros_like(b) for b in self.biases_]
        return self

    @property
    def param_count(self) -> int:
        self.build()
        return sum(w.size for w in self.weights_) + sum(b.size for b in self.biases_)

    # -- forward / backward ------------------------------------------------

    def _stack_input(self, actuals, predictions):
        actuals = np.atleast_2d(np.asarray(actuals, dtype=np.float64))
        if actuals.shape[1] != self.n_actual:
            raise ValidationError(
                f"expected {self.n_actual} actual signals, got {actuals.shape[1]}"
            )
        if self.variant == CONTROL:
            return actuals, None
        if predictions is None:
            raise ValidationError(f"variant {self.variant!r} requires predictions")
        predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
        if predictions.shape != (actuals.shape[0], self.n_predictions):
            raise ValidationError(
                f"predictions shape {predictions.shape} does not match "
                f"({actuals.shape[0]}, {self.n_predictions})"
            )
        return actuals, predictions

    def _forward_full(self, actuals, predictions):
        """Returns (logits, probs, per-layer pre/post activations)."""
        self.build()
        actuals, predictions = self._stack_input(actuals, predictions)
        x = actuals if self.variant != INPUT_GVF else np.hstack([actuals, predictions])
        zs, acts = [], [x]
        h = x
        n_layers = len(self.weights_)
        for i in range(n_layers):
            if i == self.n_encoder_layers_ and self.variant == LATENT_GVF:
                h = np.hstack([h, predictions])
                acts[-1] = h
            z = h @ self.weights_[i] + self.biases_[i]
            zs.append(z)
            h = z if i == n_layers - 1 else _relu(z)
            acts.append(h)
        logits = zs[-1]
        return logits, softmax(logits), zs, acts

    def forward(self, actuals, predictions=None):
        """(logits, probabilities) for a batch or a single sample."""
        squeeze = np.ndim(actuals) == 1
        logits, probs, _, _ = self._forward_full(actuals, predictions)
        if squeeze:
            return logits[0], probs[0]
        return logits, probs

    def train_batch(self, actuals, predictions, labels) -> float:
        """Cross-entropy backprop plus one optimizer step; returns the
        pre-step mean loss."""
        labels = np.atleast_1d(np.asarray(labels))
        if labels.size == 0:
            raise ValidationError("train_batch needs a nonempty batch")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValidationError(
                f"labels must be in 0..{self.n_classes - 1}, got {sorted(set(labels))}"
            )
        logits, probs, zs, acts = self._forward_full(actuals, predictions)
        n = logits.shape[0]
        if labels.shape[0] != n:
            raise ValidationError("labels length does not match batch size")

        # loss via log-sum-exp for numerical honesty
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_probs[np.arange(n), labels].mean())

        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        grad /= n

        g_w = [None] * len(self.weights_)
        g_b = [None] * len(self.biases_)
        for i in reversed(range(len(self.weights_))):
            g_w[i] = acts[i].T @ grad
            g_b[i] = grad.sum(axis=0)
            if i == 0:
                break
            grad = grad @ self.weights_[i].T
            if i == self.n_encoder_layers_ and self.variant == LATENT_GVF:
                grad = grad[:, : -self.n_predictions]  # predictions are inputs
            grad = grad * (zs[i - 1] > 0)

        self._apply_gradients(g_w, g_b)
        return loss

    def _apply_gradients(self, g_w, g_b):
        lr = self.learning_rate
        if self.optimizer == "sgd":
            for i in range(len(self.weights_)):
                self.weights_[i] -= lr * g_w[i]
                self.biases_[i] -= lr * g_b[i]
            self.step_count_ += 1
            return
        self.step_count_ += 1
        t = self.step_count_
        b1, b2, eps = self.beta1, self.beta2, self.epsilon
        for i in range(len(self.weights_)):
            for g, w, m, v in (
                (g_w[i], self.weights_[i], self._m[i], self._v[i]),
                (g_b[i], self.biases_[i], self._mb[i], self._vb[i]),
            ):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                m_hat = m / (1 - b1 ** t)
                v_hat = v / (1 - b2 ** t)
                w -= lr * m_hat / (np.sqrt(v_hat) + eps)

    # -- sklearn surface -----------------------------------------------------

    def _split_columns(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.variant == CONTROL:
            return X[:, : self.n_actual], None
        expected = self.n_actual + self.n_predictions
        if X.shape[1] != expected:
            raise ValidationError(
                f"variant {self.variant!r} expects {expected} columns "
                f"(actuals then predictions), got {X.shape[1]}"
            )
        return X[:, : self.n_actual], X[:, self.n_actual :]

    def fit(self, X, y):
        self.build()
        return self.partial_fit(X, y)

    def partial_fit(self, X, y, classes=None):
        actuals, predictions = self._split_columns(X)
        self.train_batch(actuals, predictions, y)
        return self

    def predict_proba(self, X):
        self.build()
        actuals, predictions = self._split_columns(X)
        _, probs = self.forward(actuals, predictions)
        return np.atleast_2d(probs)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)
