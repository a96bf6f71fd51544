"""Numeric reference forecasters: persistence, seasonal-naive, DLinear.

DLinear decomposes the input window into a moving-average trend and a
seasonal remainder and maps each part to the horizon with its own linear
head. Training is plain mini-batch gradient descent on mean squared
error, so the analytic gradients can be checked against finite
differences directly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import LoadcastError, derive_rng


class BadKernel(LoadcastError):
    """Moving-average kernel must be an odd positive integer."""


class InputTooShort(LoadcastError):
    """Input window too short for the requested baseline."""


class EmptyTrainingSet(LoadcastError):
    """fit() was called without any training instances."""


def _check_kernel(kernel: int) -> None:
    if not isinstance(kernel, int) or kernel < 1 or kernel % 2 == 0:
        raise BadKernel(f"kernel must be odd and >= 1, got {kernel!r}")


def _moving_average_rows(X: np.ndarray, kernel: int) -> np.ndarray:
    """Centered moving average along axis 1 with edge replication."""
    if kernel == 1:
        return X.copy()
    half = kernel // 2
    padded = np.concatenate(
        [np.repeat(X[:, :1], half, axis=1), X, np.repeat(X[:, -1:], half, axis=1)],
        axis=1,
    )
    return sliding_window_view(padded, kernel, axis=1).mean(axis=2)


def moving_average(x, kernel: int) -> np.ndarray:
    """Centered moving average of a 1-D sequence, same length as x."""
    _check_kernel(kernel)
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("moving_average expects a non-empty 1-D sequence")
    return _moving_average_rows(arr[None, :], kernel)[0]


def decompose(x, kernel: int) -> tuple[np.ndarray, np.ndarray]:
    """Split x into (trend, seasonal) with trend = moving average."""
    trend = moving_average(x, kernel)
    return trend, np.asarray(x, dtype=float) - trend


def predict_persistence(x, output_len: int) -> np.ndarray:
    """Repeat the last observed value across the horizon."""
    arr = np.asarray(x, dtype=float)
    if arr.size == 0:
        raise InputTooShort("persistence needs at least one value")
    return np.full(output_len, arr[-1])


def predict_seasonal_naive(x, period: int, output_len: int) -> np.ndarray:
    """Copy the last full period forward, tiling if the horizon is longer."""
    arr = np.asarray(x, dtype=float)
    if period < 1:
        raise ValueError("period must be >= 1")
    if arr.size < period:
        raise InputTooShort(f"seasonal-naive needs >= {period} values, got {arr.size}")
    last = arr[-period:]
    reps = -(-output_len // period)
    return np.tile(last, reps)[:output_len]


def _heads_forward(params: dict, trend: np.ndarray, seasonal: np.ndarray) -> np.ndarray:
    return (
        trend @ params["W_t"].T + params["b_t"]
        + seasonal @ params["W_s"].T + params["b_s"]
    )


def _heads_loss_and_grads(
    params: dict, trend: np.ndarray, seasonal: np.ndarray, y: np.ndarray
) -> tuple[float, dict]:
    """MSE over all points with its analytic gradients."""
    pred = _heads_forward(params, trend, seasonal)
    diff = pred - y
    loss = float(np.mean(diff**2))
    scale = 2.0 / diff.size
    d_pred = scale * diff
    grads = {
        "W_t": d_pred.T @ trend,
        "b_t": d_pred.sum(axis=0),
        "W_s": d_pred.T @ seasonal,
        "b_s": d_pred.sum(axis=0),
    }
    return loss, grads


class DLinearForecaster(RegressorMixin, BaseEstimator):
    """Trend/seasonal linear heads trained by mini-batch gradient descent.

    X rows are input windows, y rows the matching horizons. Inputs are
    standardized internally on training statistics; predictions come back
    in the original units. Early stopping watches validation MAE with the
    given patience and restores the best weights seen.
    """

    def __init__(
        self,
        kernel_size: int = 25,
        learning_rate: float = 0.001,
        batch_size: int = 32,
        max_epochs: int = 50,
        patience: int = 5,
        validation_fraction: float = 0.15,
        seed: int = 0,
    ):
        self.kernel_size = kernel_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_array(X, dtype=float, ensure_min_samples=0)
        y = check_array(y, dtype=float, ensure_min_samples=0)
        if X.shape[0] == 0:
            raise EmptyTrainingSet("no training instances")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y row counts differ")
        _check_kernel(self.kernel_size)

        if X_val is None:
            X, y, X_val, y_val = self._carve_validation(X, y)
        else:
            X_val = check_array(X_val, dtype=float)
            y_val = check_array(y_val, dtype=float)

        self.mu_ = float(np.mean(np.concatenate([X.ravel(), y.ravel()])))
        self.sigma_ = float(np.std(np.concatenate([X.ravel(), y.ravel()]))) or 1.0
        Xn, yn = self._norm(X), self._norm(y)
        Xv, yv = self._norm(X_val), self._norm(y_val)

        l_in, l_out = X.shape[1], y.shape[1]
        params = {
            "W_t": np.zeros((l_out, l_in)),
            "b_t": np.zeros(l_out),
            "W_s": np.zeros((l_out, l_in)),
            "b_s": np.zeros(l_out),
        }
        trend, seasonal = self._split(Xn)
        trend_v, seasonal_v = self._split(Xv)

        best = {k: v.copy() for k, v in params.items()}
        best_mae = np.inf
        bad_epochs = 0
        history = []
        rng = derive_rng(self.seed, "dlinear-shuffle")
        n = Xn.shape[0]
        batch = min(self.batch_size, n)

        for epoch in range(self.max_epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, batch):
                idx = order[lo:lo + batch]
                loss, grads = _heads_loss_and_grads(
                    params, trend[idx], seasonal[idx], yn[idx]
                )
                for k in params:
                    params[k] -= self.learning_rate * grads[k]
                epoch_loss += loss * len(idx)
            val_mae = float(np.mean(np.abs(
                _heads_forward(params, trend_v, seasonal_v) - yv
            ))) if len(Xv) else epoch_loss / n
            history.append({"epoch": epoch, "train_mse": epoch_loss / n, "val_mae": val_mae})
            if val_mae < best_mae:
                best_mae = val_mae
                best = {k: v.copy() for k, v in params.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= self.patience:
                    break

        self.trend_weights_ = best["W_t"]
        self.trend_bias_ = best["b_t"]
        self.seasonal_weights_ = best["W_s"]
        self.seasonal_bias_ = best["b_s"]
        self.n_features_in_ = l_in
        self.output_len_ = l_out
        self.history_ = history
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "trend_weights_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        trend, seasonal = self._split(self._norm(X))
        params = {
            "W_t": self.trend_weights_, "b_t": self.trend_bias_,
            "W_s": self.seasonal_weights_, "b_s": self.seasonal_bias_,
        }
        return self._denorm(_heads_forward(params, trend, seasonal))

    def _carve_validation(self, X, y):
        n = X.shape[0]
        n_val = int(round(n * self.validation_fraction))
        if n_val == 0 or n_val == n:
            return X, y, X[:0], y[:0]
        order = derive_rng(self.seed, "dlinear-valsplit").permutation(n)
        train_idx, val_idx = order[:-n_val], order[-n_val:]
        return X[train_idx], y[train_idx], X[val_idx], y[val_idx]

    def _norm(self, A):
        return (A - self.mu_) / self.sigma_

    def _denorm(self, A):
        return A * self.sigma_ + self.mu_

    def _split(self, Xn):
        trend = _moving_average_rows(Xn, self.kernel_size)
        return trend, Xn - trend

    def save(self, path) -> None:
        """JSON checkpoint: dims header plus row-major weight lists."""
        check_is_fitted(self, "trend_weights_")
        payload = {
            "kind": "dlinear",
            "input_len": self.n_features_in_,
            "output_len": self.output_len_,
            "kernel_size": self.kernel_size,
            "mu": self.mu_,
            "sigma": self.sigma_,
            "trend_weights": self.trend_weights_.tolist(),
            "trend_bias": self.trend_bias_.tolist(),
            "seasonal_weights": self.seasonal_weights_.tolist(),
            "seasonal_bias": self.seasonal_bias_.tolist(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True))

    @classmethod
    def load(cls, path) -> "DLinearForecaster":
        d = json.loads(Path(path).read_text())
        if d.get("kind") != "dlinear":
            raise ValueError(f"not a dlinear checkpoint: {path}")
        model = cls(kernel_size=d["kernel_size"])
        model.mu_ = d["mu"]
        model.sigma_ = d["sigma"]
        model.trend_weights_ = np.asarray(d["trend_weights"], dtype=float)
        model.trend_bias_ = np.asarray(d["trend_bias"], dtype=float)
        model.seasonal_weights_ = np.asarray(d["seasonal_weights"], dtype=float)
        model.seasonal_bias_ = np.asarray(d["seasonal_bias"], dtype=float)
        model.n_features_in_ = d["input_len"]
        model.output_len_ = d["output_len"]
        model.history_ = []
        return model


class PersistenceForecaster(RegressorMixin, BaseEstimator):
    """Repeats each window's last value; fit only records the horizon."""

    def fit(self, X, y):
        y = check_array(y, dtype=float)
        self.output_len_ = y.shape[1]
        self.n_features_in_ = check_array(X, dtype=float).shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "output_len_")
        X = check_array(X, dtype=float)
        return np.repeat(X[:, -1:], self.output_len_, axis=1)


class SeasonalNaiveForecaster(RegressorMixin, BaseEstimator):
    """Copies each window's last full period across the horizon."""

    def __init__(self, period: int = 7):
        self.period = period

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float)
        if X.shape[1] < self.period:
            raise InputTooShort(
                f"seasonal-naive needs windows of >= {self.period} values"
            )
        self.output_len_ = y.shape[1]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "output_len_")
        X = check_array(X, dtype=float)
        return np.stack([
            predict_seasonal_naive(row, self.period, self.output_len_) for row in X
        ])
