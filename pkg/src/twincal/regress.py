"""Fit-and-transfer model families: ridge, lasso/elastic net, simplex-constrained
regression, SVD-space ridge, and a small ReLU network.

Every family exposes a ``fit_*`` function returning an immutable model with a
``predict`` method; :func:`predict` dispatches on the model type. All linear
families except the simplex-constrained one fit on column-centered data and
recover the intercept afterward; the simplex family keeps convex-combination
semantics with a fixed zero intercept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .matcore import ConvergenceWarning, DataError

__all__ = [
    "LinearModel",
    "NnModel",
    "RegressConfig",
    "fit_ridge",
    "fit_elastic_net",
    "fit_simplex",
    "fit_si",
    "fit_nn",
    "predict",
    "project_simplex",
    "nn_loss_and_grad",
]

FAMILIES = ("ridge", "lasso", "en", "nn", "sc", "si")


@dataclass(frozen=True)
class RegressConfig:
    """Family selector plus the hyperparameters that family reads."""

    family: str = "ridge"
    lam: float = 1.0                      # ridge / sc / si penalty
    alpha: float = 0.1                    # elastic-net penalty strength
    l1_ratio: float = 0.1                 # elastic-net l1 share (1 = lasso)
    rank: int | None = None               # si truncation rank
    hidden_sizes: tuple[int, ...] = (16,)
    weight_decay: float = 0.0
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 128
    patience: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise DataError("l1_ratio must lie in [0, 1]")
        if self.lam < 0 or self.alpha < 0 or self.weight_decay < 0:
            raise DataError("penalties must be nonnegative")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray
    intercept: float
    family: str

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.coefficients.shape[0]:
            raise DataError(
                f"feature count {x.shape[-1]} != fitted {self.coefficients.shape[0]}"
            )
        return x @ self.coefficients + self.intercept


@dataclass(frozen=True)
class NnModel:
    """Fully-connected ReLU network with a scalar output head."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weights[0].shape[0]:
            raise DataError(
                f"feature count {x.shape[-1]} != fitted {self.weights[0].shape[0]}"
            )
        return _forward(self.weights, self.biases, x)[0]


def predict(model, x: np.ndarray) -> np.ndarray:
    """Forward pass of a fitted linear or network model."""
    if isinstance(model, (LinearModel, NnModel)):
        return model.predict(x)
    raise DataError(f"cannot predict with {type(model).__name__}")


def _center(x: np.ndarray, y: np.ndarray, fit_intercept: bool):
    if fit_intercept:
        x_mean = x.mean(axis=0)
        y_mean = float(y.mean())
        return x - x_mean, y - y_mean, x_mean, y_mean
    return x, y, np.zeros(x.shape[1]), 0.0


def _as_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{x.shape}, y{y.shape}")
    return x, y


def fit_ridge(
    x: np.ndarray, y: np.ndarray, lam: float, *, fit_intercept: bool = True
) -> LinearModel:
    """Closed-form l2-penalized least squares: (X'X/n + lam I)^-1 X'y/n."""
    x, y = _as_xy(x, y)
    if lam < 0:
        raise DataError("lam must be nonnegative")
    xc, yc, x_mean, y_mean = _center(x, y, fit_intercept)
    n, m = x.shape
    gram = xc.T @ xc / n + lam * np.eye(m)
    try:
        beta = np.linalg.solve(gram, xc.T @ yc / n)
    except np.linalg.LinAlgError:
        raise DataError("singular system; use lam > 0") from None
    return LinearModel(beta, y_mean - float(x_mean @ beta), "ridge")


def fit_elastic_net(
    x: np.ndarray,
    y: np.ndarray,
    alpha: float,
    l1_ratio: float = 1.0,
    *,
    fit_intercept: bool = True,
    max_iters: int = 2000,
    tol: float = 1e-7,
) -> LinearModel:
    """Cyclic coordinate descent for (1/2n)||y - Xb||^2 + penalty.

    The penalty is alpha * (l1_ratio * ||b||_1 + (1 - l1_ratio)/2 * ||b||^2);
    l1_ratio = 1 is the lasso. Updates run in covariance form (Gram matrix
    precomputed) and stop when the largest coefficient change in a sweep
    drops below ``tol``. Constant (zero-variance) columns keep coefficient 0.
    """
    x, y = _as_xy(x, y)
    if alpha < 0 or not 0.0 <= l1_ratio <= 1.0:
        raise DataError("alpha must be >= 0 and l1_ratio in [0, 1]")
    xc, yc, x_mean, y_mean = _center(x, y, fit_intercept)
    n, m = x.shape
    gram = xc.T @ xc / n
    corr = xc.T @ yc / n
    col_sq = np.diag(gram).copy()
    denom = col_sq + alpha * (1.0 - l1_ratio)
    thresh = alpha * l1_ratio

    beta = np.zeros(m)
    converged = False
    for _ in range(max_iters):
        max_delta = 0.0
        for j in range(m):
            if col_sq[j] == 0.0:
                continue
            rho = corr[j] - gram[j] @ beta + col_sq[j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - thresh, 0.0) / denom[j]
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"elastic net did not converge within {max_iters} sweeps",
            ConvergenceWarning,
            stacklevel=2,
        )
    family = "lasso" if l1_ratio == 1.0 else "en"
    return LinearModel(beta, y_mean - float(x_mean @ beta), family)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort algorithm)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.max(idx[u - css / idx > 0])
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def fit_simplex(
    x: np.ndarray,
    y: np.ndarray,
    lam: float = 0.0,
    *,
    max_iters: int = 5000,
    tol: float = 1e-12,
) -> LinearModel:
    """Projected gradient descent for least squares over the simplex.

    Minimizes (1/2n)||y - Xb||^2 + (lam/2)||b||^2 subject to b >= 0 and
    sum(b) = 1 (intercept fixed at 0: the prediction stays a convex
    combination of the columns). Step size 1/L with L the top eigenvalue of
    X'X/n + lam; returns the best feasible iterate, warning on
    non-convergence.
    """
    x, y = _as_xy(x, y)
    if lam < 0:
        raise DataError("lam must be nonnegative")
    n, m = x.shape
    gram = x.T @ x / n
    corr = x.T @ y / n
    lips = float(np.linalg.eigvalsh(gram)[-1]) + lam
    step = 1.0 / max(lips, 1e-12)

    def objective(b: np.ndarray) -> float:
        r = y - x @ b
        return float(0.5 * (r @ r) / n + 0.5 * lam * (b @ b))

    beta = np.full(m, 1.0 / m)
    best_beta, best_obj = beta, objective(beta)
    converged = False
    for _ in range(max_iters):
        grad = gram @ beta - corr + lam * beta
        new = project_simplex(beta - step * grad)
        obj = objective(new)
        if obj < best_obj:
            best_obj, best_beta = obj, new
        if np.max(np.abs(new - beta)) < tol:
            beta = new
            converged = True
            break
        beta = new
    if not converged:
        warnings.warn(
            f"simplex fit did not converge within {max_iters} steps",
            ConvergenceWarning,
            stacklevel=2,
        )
    beta = best_beta
    if beta.min() < -1e-12 or abs(beta.sum() - 1.0) > 1e-8:
        raise DataError("simplex projection produced an infeasible point")
    return LinearModel(beta, 0.0, "sc")


def fit_si(
    x: np.ndarray,
    y: np.ndarray,
    rank: int,
    lam: float = 0.0,
    *,
    fit_intercept: bool = True,
) -> LinearModel:
    """Ridge regression in the top-``rank`` right-singular coordinates of X.

    Equivalent to principal-component ridge: project the (centered) design
    onto its leading right singular vectors, ridge-solve there, and map the
    coefficients back. With rank = n_features this reproduces
    :func:`fit_ridge` exactly, and the returned coefficients always lie in
    the span of the top singular directions.
    """
    x, y = _as_xy(x, y)
    n, m = x.shape
    if not 1 <= rank <= min(n, m):
        raise DataError(f"rank {rank} out of range for {n}x{m} design")
    xc, yc, x_mean, y_mean = _center(x, y, fit_intercept)
    _, _, right_t = np.linalg.svd(xc, full_matrices=False)
    basis = right_t[:rank].T                       # m x rank
    scores = xc @ basis                            # n x rank
    gram = scores.T @ scores / n + lam * np.eye(rank)
    theta = np.linalg.solve(gram, scores.T @ yc / n)
    beta = basis @ theta
    return LinearModel(beta, y_mean - float(x_mean @ beta), "si")


# ---------------------------------------------------------------------------
# Single-hidden-layer (or two-layer) ReLU network trained with Adam.
# ---------------------------------------------------------------------------

def _forward(weights, biases, x):
    """Return (output, per-layer pre/post activations for backprop)."""
    acts = [x]
    pre = []
    h = x
    last = len(weights) - 1
    for idx, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        pre.append(z)
        h = z if idx == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts[-1][:, 0], (acts, pre)


def nn_loss_and_grad(weights, biases, x, y, weight_decay: float = 0.0):
    """Mean-squared-error loss (plus l2 weight penalty) and its gradients.

    The penalty is (weight_decay/2) * sum ||W||^2 over weight matrices only,
    so the analytic gradients here match central finite differences of the
    returned loss.
    """
    n = x.shape[0]
    out, (acts, pre) = _forward(weights, biases, x)
    resid = out - y
    loss = float(np.mean(resid**2))
    if weight_decay > 0:
        loss += 0.5 * weight_decay * sum(float((w**2).sum()) for w in weights)

    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    delta = (2.0 / n) * resid[:, None]
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if weight_decay > 0:
            grad_w[layer] = grad_w[layer] + weight_decay * weights[layer]
        if layer > 0:
            delta = (delta @ weights[layer].T) * (pre[layer - 1] > 0)
    return loss, grad_w, grad_b


def fit_nn(x: np.ndarray, y: np.ndarray, cfg: RegressConfig) -> NnModel:
    """Train the ReLU network with Adam, minibatches, and early stopping.

    The last 10% of rows form a fixed validation split; training stops when
    validation MSE fails to improve for ``cfg.patience`` epochs and the best
    parameters are restored. Fully deterministic given ``cfg.seed``.
    """
    x, y = _as_xy(x, y)
    n, m = x.shape
    if n < 2:
        raise DataError("fit_nn requires at least 2 rows")
    if any(h < 1 for h in cfg.hidden_sizes):
        raise DataError("hidden sizes must be >= 1")

    rng = np.random.default_rng(cfg.seed)
    sizes = [m, *cfg.hidden_sizes, 1]
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / sizes[i]), (sizes[i], sizes[i + 1]))
        for i in range(len(sizes) - 1)
    ]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]

    n_val = max(1, n // 10)
    x_train, y_train = x[: n - n_val], y[: n - n_val]
    x_val, y_val = x[n - n_val :], y[n - n_val :]

    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    best_val = np.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grad_w, grad_b = nn_loss_and_grad(
                weights, biases, x_train[batch], y_train[batch], cfg.weight_decay
            )
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"NaN/inf training loss at epoch {epoch}; "
                    "lower the learning rate or rescale the inputs"
                )
            step += 1
            corr1 = 1.0 - beta1**step
            corr2 = 1.0 - beta2**step
            for i in range(len(weights)):
                m_w[i] = beta1 * m_w[i] + (1 - beta1) * grad_w[i]
                v_w[i] = beta2 * v_w[i] + (1 - beta2) * grad_w[i] ** 2
                weights[i] = weights[i] - cfg.learning_rate * (
                    m_w[i] / corr1
                ) / (np.sqrt(v_w[i] / corr2) + eps)
                m_b[i] = beta1 * m_b[i] + (1 - beta1) * grad_b[i]
                v_b[i] = beta2 * v_b[i] + (1 - beta2) * grad_b[i] ** 2
                biases[i] = biases[i] - cfg.learning_rate * (
                    m_b[i] / corr1
                ) / (np.sqrt(v_b[i] / corr2) + eps)
        val_pred, _ = _forward(weights, biases, x_val)
        val_mse = float(np.mean((val_pred - y_val) ** 2))
        if val_mse < best_val:
            best_val = val_mse
            best_params = (
                [w.copy() for w in weights],
                [b.copy() for b in biases],
            )
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_params is not None:
        weights, biases = best_params
    return NnModel(tuple(weights), tuple(biases))
