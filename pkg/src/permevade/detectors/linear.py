"""Two-class logistic regression with an L2 penalty on the weights.

Fit by L-BFGS (scipy) with a small iteration cap; the intercept is not
regularized.  predict_proba is the sigmoid of the linear score.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .base import Detector, check_training_set


@dataclass
class LogRegConfig:
    l2: float = 1.0
    tol: float = 1e-4
    max_iter: int = 10
    rng_seed: int = 0  # unused (deterministic solver), kept for a uniform config surface

    def validate(self):
        if self.l2 < 0 or self.tol <= 0 or self.max_iter <= 0:
            raise ValueError(f"bad LogReg config: {self}")


class LogRegDetector(Detector):
    kind = "logreg"

    def __init__(self, vocab_size: int, config: LogRegConfig | None = None, vocab_hash: str = ""):
        super().__init__(vocab_size, vocab_hash)
        self.config = config or LogRegConfig()
        self.config.validate()
        self.w = np.zeros(vocab_size)
        self.b = 0.0

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.w + self.b

    def _proba_impl(self, X: np.ndarray) -> np.ndarray:
        z = self.decision(X)
        f1 = 1.0 / (1.0 + np.exp(-z))
        return np.column_stack([1.0 - f1, f1])

    def fit(self, X: np.ndarray, y: np.ndarray):
        cfg = self.config
        d = X.shape[1]

        def objective(theta):
            w, b = theta[:d], theta[d]
            z = X @ w + b
            # sum of per-sample CE, written stably: softplus(z) - y*z
            sp = np.where(z > 0, z + np.log1p(np.exp(-z)), np.log1p(np.exp(z)))
            loss = float(np.sum(sp - y * z) + 0.5 * cfg.l2 * np.dot(w, w))
            s = 1.0 / (1.0 + np.exp(-z))
            grad = np.empty(d + 1)
            grad[:d] = X.T @ (s - y) + cfg.l2 * w
            grad[d] = np.sum(s - y)
            return loss, grad

        theta0 = np.zeros(d + 1)
        result = minimize(
            objective, theta0, jac=True, method="L-BFGS-B",
            tol=cfg.tol, options={"maxiter": cfg.max_iter},
        )
        self.w = result.x[:d]
        self.b = float(result.x[d])
        return self


def train_logreg(X, y, config: LogRegConfig | None = None, vocab_hash: str = "") -> LogRegDetector:
    X, y = check_training_set(X, y)
    model = LogRegDetector(X.shape[1], config, vocab_hash)
    model.fit(X.astype(np.float64), y.astype(np.float64))
    return model
