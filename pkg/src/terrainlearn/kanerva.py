"""Selective Kanerva coding: sparse binary features from fixed random prototypes.

A state in [0,1]^n activates the c1 > c2 > c3 closest of K prototypes at
three resolutions; block m occupies feature indices [(m-1)K, mK). One
distance scan serves all three blocks, whose active sets are nested
prefixes of the same ordering. Ties in distance break toward the lower
prototype index, consistent with a stable full sort.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import ValidationError


def init_prototypes(n_prototypes: int, n_features: int, seed: int) -> np.ndarray:
    """K prototype coordinates drawn i.i.d. uniform over [0,1]^n."""
    if n_prototypes < 1 or n_features < 1:
        raise ValidationError("n_prototypes and n_features must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.random((n_prototypes, n_features))


def quickselect_indices(distances: np.ndarray, c: int) -> np.ndarray:
    """Indices of the c smallest distances, ascending by index.

    Expected-linear partial selection (introselect) with the boundary fixed so
    that equal distances prefer the lower index: the result always equals the
    first c entries of a stable full sort.
    """
    d = np.asarray(distances)
    if not 0 <= c <= d.shape[0]:
        raise ValidationError(f"c={c} out of range for {d.shape[0]} distances")
    if c == 0:
        return np.empty(0, dtype=np.int64)
    if c == d.shape[0]:
        return np.arange(c, dtype=np.int64)
    part = np.argpartition(d, c - 1)[:c]
    threshold = d[part].max()
    strict = np.flatnonzero(d < threshold)
    tied = np.flatnonzero(d == threshold)[: c - strict.size]
    return np.sort(np.concatenate([strict, tied]))


class SelectiveKanervaCoder(BaseEstimator, TransformerMixin):
    """Multi-resolution Kanerva coder with an sklearn transformer surface.

    fit draws the prototype set (seeded, then held constant); transform maps
    rows of X to sparse binary vectors of length 3K with exactly
    sum(resolutions) active bits each.
    """

    def __init__(self, n_prototypes=5000, resolutions=(500, 100, 25), random_state=0):
        self.n_prototypes = n_prototypes
        self.resolutions = resolutions
        self.random_state = random_state

    def _validate_resolutions(self):
        res = tuple(int(c) for c in self.resolutions)
        if any(a <= b for a, b in zip(res, res[1:])) or any(c < 1 for c in res):
            raise ValidationError(f"resolutions must be strictly decreasing, got {res}")
        if res[0] > self.n_prototypes:
            raise ValidationError(
                f"largest resolution {res[0]} exceeds n_prototypes {self.n_prototypes}"
            )
        return res

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self._res = self._validate_resolutions()
        self.n_features_in_ = X.shape[1]
        self.prototypes_ = init_prototypes(
            self.n_prototypes, self.n_features_in_, self.random_state
        )
        return self

    @property
    def n_blocks(self) -> int:
        return len(tuple(self.resolutions))

    @property
    def feature_length(self) -> int:
        return self.n_blocks * self.n_prototypes

    @property
    def n_active(self) -> int:
        return int(sum(self.resolutions))

    def encode(self, state: np.ndarray) -> np.ndarray:
        """Active feature indices (sorted) for one state vector."""
        check_is_fitted(self, "prototypes_")
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.n_features_in_,):
            raise ValidationError(
                f"state has shape {state.shape}, expected ({self.n_features_in_},)"
            )
        distances = np.sqrt(((self.prototypes_ - state) ** 2).sum(axis=1))
        return self._activate(distances)

    def _activate(self, distances: np.ndarray) -> np.ndarray:
        res = self._res
        K = self.n_prototypes
        coarse = quickselect_indices(distances, res[0])
        # Stable sort of the coarse candidates by distance; coarse is already
        # ascending by index, so ties resolve toward the lower index.
        ranked = coarse[np.argsort(distances[coarse], kind="stable")]
        blocks = [coarse]
        for c in res[1:]:
            blocks.append(np.sort(ranked[:c]))
        return np.concatenate([b + m * K for m, b in enumerate(blocks)])

    def encode_batch(self, X: np.ndarray) -> np.ndarray:
        """(n_samples, n_active) matrix of active indices, one row per state."""
        check_is_fitted(self, "prototypes_")
        X = check_array(X, dtype=np.float64)
        out = np.empty((X.shape[0], self.n_active), dtype=np.int64)
        for i in range(X.shape[0]):
            out[i] = self.encode(X[i])
        return out

    def transform(self, X) -> sparse.csr_matrix:
        """Sparse binary feature matrix of shape (n_samples, 3K)."""
        active = self.encode_batch(X)
        n, a = active.shape
        data = np.ones(n * a, dtype=np.float64)
        indptr = np.arange(0, n * a + 1, a)
        return sparse.csr_matrix(
            (data, active.ravel(), indptr), shape=(n, self.feature_length)
        )


def save_coder(path, coder: SelectiveKanervaCoder) -> None:
    """Persist the prototype set so feature spaces reproduce across processes."""
    check_is_fitted(coder, "prototypes_")
    np.savez_compressed(
        path,
        format_version=1,
        prototypes=coder.prototypes_,
        resolutions=np.asarray(coder.resolutions, dtype=np.int64),
        random_state=coder.random_state,
        n_features=coder.n_features_in_,
    )


def load_coder(path) -> SelectiveKanervaCoder:
    with np.load(path) as data:
        coder = SelectiveKanervaCoder(
            n_prototypes=int(data["prototypes"].shape[0]),
            resolutions=tuple(int(c) for c in data["resolutions"]),
            random_state=int(data["random_state"]),
        )
        coder.prototypes_ = data["prototypes"]
        coder.n_features_in_ = int(data["n_features"])
        coder._res = coder._validate_resolutions()
    return coder
