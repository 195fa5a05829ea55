"""General value functions learned with true-online TD(lambda).

Each learner predicts the discounted future sum of one sensor channel (its
cumulant) over the shared sparse binary feature vector. The update is the
true-online variant with dutch traces:

    V      = w.x        V' = w.x'
    delta  = z' + gamma V' - V
    e     <- gamma lambda e + x - alpha gamma lambda (e.x) x
    w     <- w + alpha (delta + V - V_old) e - alpha (V - V_old) x
    V_old <- V'

whose weight sequence exactly matches the online forward-view lambda-return
algorithm. The cumulant z' is the channel value observed on the transition
into the next state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ValidationError

#: Step-size scale when alpha is left unset: 0.1 divided by active-bit count.
ALPHA_SCALE = 0.1

#: Normalized predictions are clamped to this range before reaching a net.
PREDICTION_CLAMP = (0.0, 1.5)


def horizon(gamma: float) -> float:
    """Expected lookahead, in timesteps, of a gamma-discounted prediction."""
    if not 0.0 <= gamma < 1.0:
        raise ValidationError(f"gamma must be in [0, 1), got {gamma}")
    return 1.0 / (1.0 - gamma)


def default_alpha(n_active: int) -> float:
    return ALPHA_SCALE / n_active


class TotdLearner:
    """Single-channel true-online TD(lambda) over sparse binary features."""

    def __init__(self, n_features: int, gamma: float = 0.94, lam: float = 0.5,
                 alpha: float = 0.1 / 625):
        if not 0.0 <= gamma < 1.0:
            raise ValidationError(f"gamma must be in [0, 1), got {gamma}")
        if not 0.0 <= lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {lam}")
        if alpha <= 0.0:
            raise ValidationError("alpha must be positive")
        self.n_features = n_features
        self.gamma = gamma
        self.lam = lam
        self.alpha = alpha
        self.w = np.zeros(n_features)
        self.e = np.zeros(n_features)
        self.v_old = 0.0

    def predict(self, active: np.ndarray) -> float:
        """w.x as a sparse dot product over the active indices."""
        return float(self.w[active].sum())

    def step(self, active: np.ndarray, active_next: np.ndarray, z_next: float) -> float:
        """One transition update; returns the post-update prediction for the
        next state (the freshest value, which is what downstream consumers
        see). The internal V_old bookkeeping keeps the pre-update V' required
        for forward-view equivalence.
        """
        g, l, a = self.gamma, self.lam, self.alpha
        v = self.w[active].sum()
        v_next = self.w[active_next].sum()
        delta = z_next + g * v_next - v
        e_dot_x = self.e[active].sum()
        self.e *= g * l
        self.e[active] += 1.0 - a * g * l * e_dot_x
        self.w += a * (delta + v - self.v_old) * self.e
        self.w[active] -= a * (v - self.v_old)
        self.v_old = v_next
        return float(self.w[active_next].sum())


class GvfBank(BaseEstimator):
    """30 per-channel learners sharing one feature vector per step.

    Row c of the weight and trace matrices is channel c's learner; the math
    is identical to stepping 30 TotdLearners with the same features, just
    vectorized. Never sees terrain labels.
    """

    def __init__(self, n_channels=30, n_features=15000, gamma=0.94, lam=0.5,
                 alpha=0.1 / 625):
        self.n_channels = n_channels
        self.n_features = n_features
        self.gamma = gamma
        self.lam = lam
        self.alpha = alpha

    def _ensure_state(self):
        if not hasattr(self, "W_"):
            if not 0.0 <= self.gamma < 1.0:
                raise ValidationError(f"gamma must be in [0, 1), got {self.gamma}")
            if not 0.0 <= self.lam <= 1.0:
                raise ValidationError(f"lambda must be in [0, 1], got {self.lam}")
            self.W_ = np.zeros((self.n_channels, self.n_features))
            self.E_ = np.zeros((self.n_channels, self.n_features))
            self.v_old_ = np.zeros(self.n_channels)
            self.predictions_ = np.zeros(self.n_channels)
            self.steps_ = 0

    def predict_active(self, active: np.ndarray) -> np.ndarray:
        """Current per-channel predictions for a feature vector."""
        self._ensure_state()
        return self.W_[:, active].sum(axis=1)

    def step(self, active: np.ndarray, active_next: np.ndarray,
             cumulants: np.ndarray) -> np.ndarray:
        """Advance every channel one transition.

        cumulants holds the next frame's 30 channel values. Returns (and
        stores) the post-update predictions for the next state.
        """
        self._ensure_state()
        z = np.asarray(cumulants, dtype=np.float64)
        if z.shape != (self.n_channels,):
            raise ValidationError(
                f"cumulants shape {z.shape} != ({self.n_channels},)"
            )
        g, l, a = self.gamma, self.lam, self.alpha
        v = self.W_[:, active].sum(axis=1)
        v_next = self.W_[:, active_next].sum(axis=1)
        delta = z + g * v_next - v
        e_dot_x = self.E_[:, active].sum(axis=1)
        self.E_ *= g * l
        self.E_[:, active] += (1.0 - a * g * l * e_dot_x)[:, None]
        self.W_ += (a * (delta + v - self.v_old_))[:, None] * self.E_
        self.W_[:, active] -= (a * (v - self.v_old_))[:, None]
        self.v_old_ = v_next
        self.steps_ += 1
        self.predictions_ = self.W_[:, active_next].sum(axis=1)
        return self.predictions_

    def normalized_predictions(self) -> np.ndarray:
        """Predictions rescaled by (1 - gamma) to signal units, clamped."""
        self._ensure_state()
        lo, hi = PREDICTION_CLAMP
        return np.clip(self.predictions_ * (1.0 - self.gamma), lo, hi)


def save_bank(path, bank: GvfBank) -> None:
    bank._ensure_state()
    np.savez_compressed(
        path,
        format_version=1,
        W=bank.W_,
        E=bank.E_,
        v_old=bank.v_old_,
        predictions=bank.predictions_,
        steps=bank.steps_,
        params=np.array([bank.n_channels, bank.n_features], dtype=np.int64),
        hyper=np.array([bank.gamma, bank.lam, bank.alpha]),
    )


def load_bank(path) -> GvfBank:
    with np.load(path) as data:
        n_channels, n_features = (int(v) for v in data["params"])
        gamma, lam, alpha = (float(v) for v in data["hyper"])
        bank = GvfBank(n_channels=n_channels, n_features=n_features,
                       gamma=gamma, lam=lam, alpha=alpha)
        bank.W_ = data["W"]
        bank.E_ = data["E"]
        bank.v_old_ = data["v_old"]
        bank.predictions_ = data["predictions"]
        bank.steps_ = int(data["steps"])
    return bank
