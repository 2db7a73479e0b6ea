"""Linear soft-margin SVM trained by pairwise coordinate ascent on the dual.

The trainer repeatedly selects the maximal violating pair of dual variables,
solves the two-variable subproblem in closed form, and maintains the primal
weight vector incrementally.  Training stops when the KKT violation gap falls
below ``tol`` or a fixed update budget runs out.  After each segment of
updates the exact bias is recovered by minimizing the piecewise-linear hinge
sum in b, and the best (w, b) seen by primal objective is kept, so the
reported objective history is non-increasing and the returned model is the
incumbent, not necessarily the last iterate.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ConfigError, TrainingError

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3

# status codes returned by the update kernel
_BUDGET = 0
_CONVERGED = 1
_STALLED = 2


@njit(cache=True)
def _smo_segment(X, z, alpha, w, u, C, tol, budget):  # pragma: no cover - jit
    """Run up to ``budget`` maximal-violating-pair updates in place.

    u tracks X @ w incrementally; it is never resynced, so the trajectory is
    pure scalar arithmetic and platform-stable.  Returns (steps, status).
    """
    n, m = X.shape
    steps = 0
    while steps < budget:
        hi = -1e300
        lo = 1e300
        i = -1
        j = -1
        for t in range(n):
            v = z[t] - u[t]
            up = (z[t] > 0.0 and alpha[t] < C) or (z[t] < 0.0 and alpha[t] > 0.0)
            down = (z[t] > 0.0 and alpha[t] > 0.0) or (z[t] < 0.0 and alpha[t] < C)
            if up and v > hi:
                hi = v
                i = t
            if down and v < lo:
                lo = v
                j = t
        if i < 0 or j < 0 or hi - lo <= tol:
            return steps, _CONVERGED
        eta = 0.0
        for f in range(m):
            d = X[i, f] - X[j, f]
            eta += d * d
        if eta < 1e-12:
            eta = 1e-12
        delta = (hi - lo) / eta
        # keep alpha_i + z_i*delta and alpha_j - z_j*delta inside [0, C]
        cap = C - alpha[i] if z[i] > 0.0 else alpha[i]
        if delta > cap:
            delta = cap
        cap = alpha[j] if z[j] > 0.0 else C - alpha[j]
        if delta > cap:
            delta = cap
        if delta <= 0.0:
            return steps, _STALLED
        alpha[i] += z[i] * delta
        alpha[j] -= z[j] * delta
        for f in range(m):
            w[f] += delta * (X[i, f] - X[j, f])
        for t in range(n):
            dot = 0.0
            for f in range(m):
                dot += (X[i, f] - X[j, f]) * X[t, f]
            u[t] += delta * dot
        steps += 1
    return steps, _BUDGET


def _exact_bias(w: np.ndarray, X: np.ndarray, z: np.ndarray) -> float:
    """Bias minimizing the hinge sum for fixed w.

    Each row contributes a breakpoint at z_i - w.x_i; the hinge sum is convex
    piecewise linear in b with slope -P + k after the k-th sorted breakpoint
    (P = positive count), so the minimum spans the interval between sorted
    breakpoints P-1 and P.  Both classes present guarantees 1 <= P <= n-1.
    """
    t = np.sort(z - X @ w)
    p = int(np.count_nonzero(z > 0.0))
    return 0.5 * (t[p - 1] + t[p])


def _primal_objective(w, b, X, z, C) -> float:
    margins = z * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


class SvmModel:
    """Learned hyperplane; score is the signed decision value w.x + b."""

    variant = "linear_svm"

    def __init__(self, w, b, C, tol, objective, objective_history,
                 converged, n_updates):
        self.w = np.ascontiguousarray(w, dtype=np.float64)
        self.b = float(b)
        self.C = float(C)
        self.tol = float(tol)
        self.objective = float(objective)
        self.objective_history = [float(v) for v in objective_history]
        self.converged = bool(converged)
        self.n_updates = int(n_updates)

    @property
    def feature_dim(self) -> int:
        return self.w.shape[0]

    def scores(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.feature_dim:
            raise ConfigError(
                f"query matrix must be 2-D with {self.feature_dim} columns, "
                f"got shape {Q.shape}")
        return Q @ self.w + self.b

    def predict(self, Q: np.ndarray) -> np.ndarray:
        s = self.scores(Q)
        return np.where(s > 0.0, 1, -1).astype(np.int64)

    def state_doc(self) -> dict:
        return {
            "variant": self.variant,
            "hyperparameters": {"C": self.C, "tol": self.tol},
            "parameters": {"w": self.w.tolist(), "b": self.b},
            "training": {
                "objective": self.objective,
                "objective_history": self.objective_history,
                "converged": self.converged,
                "n_updates": self.n_updates,
            },
        }

    @classmethod
    def from_state(cls, doc: dict) -> "SvmModel":
        hp = doc["hyperparameters"]
        pm = doc["parameters"]
        tr = doc["training"]
        return cls(np.asarray(pm["w"], dtype=np.float64), pm["b"], hp["C"],
                   hp["tol"], tr["objective"], tr["objective_history"],
                   tr["converged"], tr["n_updates"])


def train_svm(X: np.ndarray, z: np.ndarray, C: float = DEFAULT_C,
              tol: float = DEFAULT_TOL) -> SvmModel:
    """Fit the soft-margin hyperplane minimizing 1/2|w|^2 + C*sum hinge."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    z = np.asarray(z)
    if X.ndim != 2:
        raise ConfigError(f"training matrix must be 2-D, got shape {X.shape}")
    if z.shape != (X.shape[0],):
        raise ConfigError(
            f"labels shape {z.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isin(z, (-1, 1))):
        raise ConfigError("labels must be +1 or -1")
    if not (np.isfinite(C) and C > 0):
        raise ConfigError(f"C must be positive and finite, got {C}")
    if not (np.isfinite(tol) and tol > 0):
        raise ConfigError(f"tol must be positive and finite, got {tol}")
    zf = z.astype(np.float64)
    n_pos = int(np.count_nonzero(zf > 0))
    if n_pos == 0 or n_pos == len(zf):
        raise TrainingError(
            "training requires at least one row of each label")

    n, m = X.shape
    alpha = np.zeros(n)
    w = np.zeros(m)
    u = np.zeros(n)
    cap_total = 40 * n + 1000
    segment = max(n, 256)

    b = _exact_bias(w, X, zf)
    best_obj = _primal_objective(w, b, X, zf, C)
    best_w = w.copy()
    best_b = b
    history = [best_obj]

    done = 0
    converged = False
    while done < cap_total:
        budget = min(segment, cap_total - done)
        steps, status = _smo_segment(X, zf, alpha, w, u, float(C), float(tol),
                                     budget)
        done += steps
        b = _exact_bias(w, X, zf)
        obj = _primal_objective(w, b, X, zf, C)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
            best_b = b
        history.append(best_obj)
        if status == _CONVERGED:
            converged = True
            break
        if status == _STALLED:
            break
    return SvmModel(best_w, best_b, C, tol, best_obj, history, converged, done)
