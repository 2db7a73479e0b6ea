"""Single-hidden-layer perceptron with a logistic output unit.

The network is rectifier(X W1 + b1) w2 + b2, trained full-batch by L-BFGS on
the mean logistic loss plus an L2 penalty on weights (never biases) scaled by
alpha / (2n).  Loss and gradient are computed here by hand; scipy only drives
the quasi-Newton line search.  The reported score is the pre-sigmoid logit,
so 0 is the decision threshold.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ..errors import ConfigError, TrainingError
from ..seeds import rng_from

DEFAULT_HIDDEN = 100
DEFAULT_ALPHA = 1e-5
DEFAULT_MAX_ITER = 200
GRAD_TOL = 1e-5


def _unpack(x, m, h):
    w1_end = m * h
    b1_end = w1_end + h
    w2_end = b1_end + h
    W1 = x[:w1_end].reshape(m, h)
    b1 = x[w1_end:b1_end]
    w2 = x[b1_end:w2_end]
    b2 = x[w2_end]
    return W1, b1, w2, b2


def _loss_and_grad(x, X, z, y, alpha, m, h):
    n = X.shape[0]
    W1, b1, w2, b2 = _unpack(x, m, h)
    pre = X @ W1 + b1
    hidden = np.maximum(pre, 0.0)
    logit = hidden @ w2 + b2
    penalty = (alpha / (2.0 * n)) * (float(np.sum(W1 * W1))
                                     + float(np.sum(w2 * w2)))
    # overflow here is caught by the caller's finiteness check
    with np.errstate(invalid="ignore", over="ignore"):
        loss = float(np.logaddexp(0.0, -z * logit).mean()) + penalty

    dlogit = (expit(logit) - y) / n
    gw2 = hidden.T @ dlogit + (alpha / n) * w2
    gb2 = dlogit.sum()
    dpre = np.outer(dlogit, w2)
    dpre[pre <= 0.0] = 0.0
    gW1 = X.T @ dpre + (alpha / n) * W1
    gb1 = dpre.sum(axis=0)
    grad = np.concatenate([gW1.ravel(), gb1, gw2, [gb2]])
    return loss, grad


class MlpModel:
    """Trained network; score is the raw output-unit logit."""

    variant = "mlp"

    def __init__(self, W1, b1, w2, b2, alpha, seed, max_iter,
                 n_iter=0, loss_history=()):
        self.W1 = np.ascontiguousarray(W1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(b1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(w2, dtype=np.float64)
        self.b2 = float(b2)
        self.alpha = float(alpha)
        self.seed = int(seed)
        self.max_iter = int(max_iter)
        self.n_iter = int(n_iter)
        self.loss_history = [float(v) for v in loss_history]

    @property
    def feature_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def scores(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.feature_dim:
            raise ConfigError(
                f"query matrix must be 2-D with {self.feature_dim} columns, "
                f"got shape {Q.shape}")
        return np.maximum(Q @ self.W1 + self.b1, 0.0) @ self.w2 + self.b2

    def predict(self, Q: np.ndarray) -> np.ndarray:
        return np.where(self.scores(Q) > 0.0, 1, -1).astype(np.int64)

    def state_doc(self) -> dict:
        return {
            "variant": self.variant,
            "hyperparameters": {
                "hidden": self.hidden,
                "alpha": self.alpha,
                "seed": self.seed,
                "max_iter": self.max_iter,
            },
            "parameters": {
                "W1": self.W1.tolist(),
                "b1": self.b1.tolist(),
                "w2": self.w2.tolist(),
                "b2": self.b2,
            },
            "training": {
                "n_iter": self.n_iter,
                "loss_history": self.loss_history,
            },
        }

    @classmethod
    def from_state(cls, doc: dict) -> "MlpModel":
        hp = doc["hyperparameters"]
        pm = doc["parameters"]
        tr = doc["training"]
        return cls(np.asarray(pm["W1"], dtype=np.float64),
                   np.asarray(pm["b1"], dtype=np.float64),
                   np.asarray(pm["w2"], dtype=np.float64), pm["b2"],
                   hp["alpha"], hp["seed"], hp["max_iter"],
                   tr["n_iter"], tr["loss_history"])


def train_mlp(X: np.ndarray, z: np.ndarray, hidden: int = DEFAULT_HIDDEN,
              alpha: float = DEFAULT_ALPHA, seed: int = 0,
              max_iter: int = DEFAULT_MAX_ITER) -> MlpModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    z = np.asarray(z)
    if X.ndim != 2:
        raise ConfigError(f"training matrix must be 2-D, got shape {X.shape}")
    if z.shape != (X.shape[0],):
        raise ConfigError(
            f"labels shape {z.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isin(z, (-1, 1))):
        raise ConfigError("labels must be +1 or -1")
    if not (isinstance(hidden, (int, np.integer)) and hidden >= 1):
        raise ConfigError(f"hidden must be a positive integer, got {hidden}")
    if not (np.isfinite(alpha) and alpha >= 0):
        raise ConfigError(f"alpha must be non-negative, got {alpha}")
    if not (isinstance(max_iter, (int, np.integer)) and max_iter >= 1):
        raise ConfigError(
            f"max_iter must be a positive integer, got {max_iter}")

    n, m = X.shape
    h = int(hidden)
    zf = z.astype(np.float64)
    y = (zf + 1.0) / 2.0

    rng = rng_from(seed, "init")
    lim1 = np.sqrt(6.0 / (m + h))
    lim2 = np.sqrt(6.0 / (h + 1))
    x0 = np.concatenate([
        rng.uniform(-lim1, lim1, size=m * h),
        np.zeros(h),
        rng.uniform(-lim2, lim2, size=h),
        [0.0],
    ])

    evals = {"count": 0, "recent": []}

    def objective(x):
        evals["count"] += 1
        loss, grad = _loss_and_grad(x, X, zf, y, alpha, m, h)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingError(
                f"non-finite loss at objective evaluation {evals['count']}")
        evals["recent"].append((x.tobytes(), loss))
        del evals["recent"][:-4]
        return loss, grad

    history = [objective(x0)[0]]

    def record(xk):
        key = xk.tobytes()
        for k, v in reversed(evals["recent"]):
            if k == key:
                history.append(v)
                return
        history.append(_loss_and_grad(xk, X, zf, y, alpha, m, h)[0])

    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   callback=record,
                   options={"maxiter": int(max_iter), "gtol": GRAD_TOL,
                            "ftol": 0.0})
    W1, b1, w2, b2 = _unpack(res.x, m, h)
    return MlpModel(W1.copy(), b1.copy(), w2.copy(), b2, alpha, seed,
                    max_iter, res.nit, history)
