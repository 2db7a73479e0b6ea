"""k-nearest-neighbor classifier with exact deterministic tie handling.

Score of a query is the mean label of its k nearest training rows by squared
Euclidean distance.  Equal distances are broken by ascending training-row
index; a zero score predicts benign.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

_QUERY_BLOCK = 256


class KNNModel:
    variant = "knn"

    def __init__(self, k: int, X: np.ndarray, z: np.ndarray):
        self.k = int(k)
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.z = np.asarray(z, dtype=np.int64)
        self._sq_norms = np.einsum("ij,ij->i", self.X, self.X)

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    def scores(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.X.shape[1]:
            raise ConfigError(f"query dim {Q.shape[1]} != model dim {self.X.shape[1]}")
        out = np.empty(Q.shape[0], dtype=np.float64)
        for start in range(0, Q.shape[0], _QUERY_BLOCK):
            block = Q[start:start + _QUERY_BLOCK]
            # |x|^2 - 2 q.x ; the |q|^2 term is constant per query and cannot
            # change the neighbor order, so it is dropped
            d2 = self._sq_norms[None, :] - 2.0 * (block @ self.X.T)
            for r in range(block.shape[0]):
                out[start + r] = self._neighbor_label_sum(d2[r]) / self.k
        return out

    def _neighbor_label_sum(self, d2: np.ndarray) -> int:
        k = self.k
        if k == d2.size:
            return int(self.z.sum())
        part = np.argpartition(d2, k - 1)[:k]
        kth = d2[part].max()
        strict = np.flatnonzero(d2 < kth)
        ties = np.flatnonzero(d2 == kth)  # ascending index order
        chosen = ties[: k - strict.size]
        return int(self.z[strict].sum() + self.z[chosen].sum())

    def predict(self, Q: np.ndarray) -> np.ndarray:
        s = self.scores(Q)
        return np.where(s > 0.0, 1, -1).astype(np.int64)

    def state_doc(self) -> dict:
        return {
            "variant": self.variant,
            "hyperparameters": {"k": self.k},
            "parameters": {"X": self.X.tolist(), "z": self.z.tolist()},
        }

    @classmethod
    def from_state(cls, doc: dict) -> "KNNModel":
        pm = doc["parameters"]
        return cls(k=doc["hyperparameters"]["k"],
                   X=np.array(pm["X"], dtype=np.float64),
                   z=np.array(pm["z"], dtype=np.int64))


def train_knn(X: np.ndarray, z: np.ndarray, k: int = 5) -> KNNModel:
    X = np.asarray(X, dtype=np.float64)
    z = np.asarray(z)
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    if X.ndim != 2 or X.shape[0] != z.shape[0]:
        raise ConfigError("X must be (rows, features) aligned with z")
    if k > X.shape[0]:
        raise ConfigError(f"k={k} exceeds {X.shape[0]} training rows")
    if not np.all(np.isin(z, (-1, 1))):
        raise ConfigError("labels must be +1 or -1")
    return KNNModel(k=k, X=X, z=z)
