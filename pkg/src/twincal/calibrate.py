"""Fit-and-transfer calibration, adaptive gating, and the leave-one-out harness.

The core move: fit a model that predicts the target question from the other
questions on the twin matrix, then apply it to the human matrix. Preprocessing
(separate hard-SVD imputation of each matrix, then per-column standardization)
is an explicit step — :func:`prepare_pair` — so callers control whether the
fit runs on the standardized or the raw scale; predictions always come back on
the original scale, de-standardized with the twin target column's stats (the
human target stats are unknowable since that column is entirely missing).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import regress
from .completion import (
    DEFAULT_RANK_GRID,
    CompletionConfig,
    CompletionMethod,
    StackedTask,
    impute_dense,
    stacked_complete,
    synthetic_prior_impute,
)
from .matcore import (
    ColumnStats,
    ConvergenceWarning,
    DataError,
    MaskedMatrix,
    UndefinedCorrelationError,
    mean_correlation,
    pearson,
    standardize_columns,
)
from .regress import RegressConfig

__all__ = [
    "Orientation",
    "PreparedPair",
    "CalibrationTask",
    "TransferDiagnostic",
    "EvalReport",
    "prepare_pair",
    "fit_and_transfer",
    "adaptive_transfer",
    "calibrate_new_user",
    "loo_evaluate",
    "sweep_thresholds",
    "DEFAULT_RANK_GRID",
]


class Orientation(str, Enum):
    NEW_QUESTION = "new_question"
    NEW_USER = "new_user"


@dataclass(frozen=True)
class PreparedPair:
    """Imputed, optionally standardized human/twin matrices plus their stats.

    ``human`` has one column per feature question; ``twin`` has the same
    columns plus the target column, all dense. Identity stats mark a raw
    (non-standardized) preparation.
    """

    human: np.ndarray
    twin: np.ndarray
    human_stats: ColumnStats
    twin_stats: ColumnStats
    impute_rank_human: int
    impute_rank_twin: int
    standardized: bool


@dataclass(frozen=True)
class TransferDiagnostic:
    """Synthetic-system fit quality and the resulting gating decision."""

    train_mse: float
    threshold: float = np.inf
    transferred: bool = True

    def __post_init__(self) -> None:
        if self.transferred != (self.train_mse < self.threshold):
            raise DataError("transferred must equal train_mse < threshold")


@dataclass(frozen=True)
class CalibrationTask:
    """One transfer problem: human n x m, twin with one extra target column.

    For the new-user orientation the matrices are interpreted transposed
    (twin has one extra row: the new user). ``method`` is a regression or
    completion config; ``prepared`` may carry a shared preprocessed pair so
    batch harnesses avoid re-imputing per target.
    """

    human: MaskedMatrix
    twin: MaskedMatrix
    target_index: int
    method: RegressConfig | CompletionConfig
    orientation: Orientation = Orientation.NEW_QUESTION
    impute_rank: int | None = None
    standardize: bool = True
    seed: int = 0
    prepared: PreparedPair | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        orientation = Orientation(self.orientation)
        object.__setattr__(self, "orientation", orientation)
        if orientation is Orientation.NEW_QUESTION:
            if self.twin.n_rows != self.human.n_rows:
                raise DataError("human and twin must have equal row counts")
            if self.twin.n_cols != self.human.n_cols + 1:
                raise DataError("twin must have exactly one extra (target) column")
            if not 0 <= self.target_index < self.twin.n_cols:
                raise DataError(f"target_index {self.target_index} out of range")
            target_mask = self.twin.mask[:, self.target_index]
        else:
            if self.twin.n_cols != self.human.n_cols:
                raise DataError("human and twin must have equal column counts")
            if self.twin.n_rows != self.human.n_rows + 1:
                raise DataError("twin must have exactly one extra (target) row")
            if not 0 <= self.target_index < self.twin.n_rows:
                raise DataError(f"target_index {self.target_index} out of range")
            target_mask = self.twin.mask[self.target_index, :]
        if not target_mask.all():
            raise DataError("twin must cover the target index fully")


def prepare_pair(
    human: MaskedMatrix,
    twin: MaskedMatrix,
    *,
    rank: int | None = None,
    rank_grid=DEFAULT_RANK_GRID,
    standardize: bool = True,
    seed: int = 0,
) -> PreparedPair:
    """Impute each matrix separately, then (optionally) standardize columns.

    With ``standardize`` off, identity stats are attached so de-
    standardization is a no-op and downstream fits run on the raw scale.
    """
    human_dense, rank_h = impute_dense(human, rank, rank_grid, seed)
    twin_dense, rank_t = impute_dense(twin, rank, rank_grid, seed)
    if standardize:
        h_std, h_stats = standardize_columns(MaskedMatrix.from_dense(human_dense))
        t_std, t_stats = standardize_columns(MaskedMatrix.from_dense(twin_dense))
        human_dense, twin_dense = h_std.values, t_std.values
    else:
        h_stats = ColumnStats.identity(human.n_cols)
        t_stats = ColumnStats.identity(twin.n_cols)
    return PreparedPair(
        human_dense, twin_dense, h_stats, t_stats, rank_h, rank_t, standardize
    )


def _fit_family(cfg: RegressConfig, x: np.ndarray, y: np.ndarray):
    if cfg.family == "ridge":
        return regress.fit_ridge(x, y, cfg.lam)
    if cfg.family == "lasso":
        return regress.fit_elastic_net(x, y, cfg.alpha, 1.0)
    if cfg.family == "en":
        return regress.fit_elastic_net(x, y, cfg.alpha, cfg.l1_ratio)
    if cfg.family == "sc":
        return regress.fit_simplex(x, y, cfg.lam)
    if cfg.family == "si":
        rank = cfg.rank if cfg.rank is not None else min(x.shape)
        return regress.fit_si(x, y, min(rank, min(x.shape)), cfg.lam)
    if cfg.family == "nn":
        return regress.fit_nn(x, y, cfg)
    raise DataError(f"unknown regression family {cfg.family!r}")


def _oriented(task: CalibrationTask) -> CalibrationTask:
    """Transpose a new-user task into new-question form."""
    if task.orientation is Orientation.NEW_QUESTION:
        return task
    return replace(
        task,
        human=task.human.transpose(),
        twin=task.twin.transpose(),
        orientation=Orientation.NEW_QUESTION,
        prepared=task.prepared,
    )


def fit_and_transfer(
    task: CalibrationTask,
) -> tuple[np.ndarray, TransferDiagnostic]:
    """Fit target-from-features on the twin matrix and apply to the human one.

    The model is trained on the (prepared) twin feature columns against the
    twin target column, its in-sample MSE is recorded on the fitting scale,
    and the human-matrix prediction is returned de-standardized with the twin
    target column's stats.
    """
    task = _oriented(task)
    if not isinstance(task.method, RegressConfig):
        raise DataError("fit_and_transfer requires a regression method")
    pair = task.prepared
    if pair is None:
        pair = prepare_pair(
            task.human,
            task.twin,
            rank=task.impute_rank,
            standardize=task.standardize,
            seed=task.seed,
        )
    j = task.target_index
    features = np.arange(pair.twin.shape[1]) != j
    x_twin = pair.twin[:, features]
    y_twin = pair.twin[:, j]
    model = _fit_family(task.method, x_twin, y_twin)
    train_mse = float(np.mean((regress.predict(model, x_twin) - y_twin) ** 2))
    pred_std = regress.predict(model, pair.human)
    prediction = pair.twin_stats.invert_column(pred_std, j)
    return prediction, TransferDiagnostic(train_mse)


def adaptive_transfer(
    task: CalibrationTask, tau: float, fallback: np.ndarray
) -> np.ndarray:
    """Gate calibration on the synthetic-system training MSE.

    Returns the calibrated prediction when train_mse < tau and the provided
    fallback (normally the raw twin target column) otherwise; tau = 0 always
    falls back, tau = inf always transfers.
    """
    if tau < 0:
        raise DataError("tau must be nonnegative")
    fallback = np.asarray(fallback, dtype=np.float64)
    prediction, diag = fit_and_transfer(task)
    if fallback.shape != prediction.shape:
        raise DataError("fallback shape must match the prediction")
    if diag.train_mse < tau:
        return prediction
    return fallback.copy()


def calibrate_new_user(task: CalibrationTask) -> np.ndarray:
    """Predict a new user's responses by transposing and transferring.

    Delegates to :func:`fit_and_transfer` on the transposed matrices, so the
    new user plays the role of a new question.
    """
    if task.orientation is not Orientation.NEW_USER:
        raise DataError("calibrate_new_user requires a new_user task")
    prediction, _ = fit_and_transfer(task)
    return prediction


# ---------------------------------------------------------------------------
# Leave-one-out evaluation harness.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetResult:
    index: int
    corr: float | None
    baseline_corr: float | None
    train_mse: float | None
    transferred: bool
    skipped: bool


@dataclass(frozen=True)
class EvalReport:
    """Per-target correlations plus aggregate means and the twin baseline."""

    per_target: tuple[TargetResult, ...]
    mean: float
    se: float
    baseline_mean: float
    baseline_se: float
    pct_improvement: float
    skipped_count: int
    fisher_z: bool
    orientation: Orientation
    method_label: str

    def to_json_dict(self) -> dict:
        return {
            "method": self.method_label,
            "orientation": self.orientation.value,
            "fisher_z": self.fisher_z,
            "mean": self.mean,
            "se": self.se,
            "baseline_mean": self.baseline_mean,
            "baseline_se": self.baseline_se,
            "pct_improvement": self.pct_improvement,
            "skipped_count": self.skipped_count,
            "per_target": [
                {
                    "index": r.index,
                    "corr": r.corr,
                    "baseline_corr": r.baseline_corr,
                    "train_mse": r.train_mse,
                    "transferred": r.transferred,
                    "skipped": r.skipped,
                }
                for r in self.per_target
            ],
        }

    def to_csv_rows(self) -> list[list]:
        rows = [["method", "target", "corr", "baseline_corr", "train_mse",
                 "transferred", "skipped"]]
        for r in self.per_target:
            rows.append([
                self.method_label,
                r.index,
                "" if r.corr is None else "%.17g" % r.corr,
                "" if r.baseline_corr is None else "%.17g" % r.baseline_corr,
                "" if r.train_mse is None else "%.17g" % r.train_mse,
                int(r.transferred),
                int(r.skipped),
            ])
        return rows


def _method_label(method) -> str:
    if isinstance(method, RegressConfig):
        return method.family
    return method.method.value


def _aggregate(
    results: list[TargetResult],
    fisher_z: bool,
    orientation: Orientation,
    label: str,
) -> EvalReport:
    kept = [r for r in results if not r.skipped]
    corrs = np.array([r.corr for r in kept], dtype=np.float64)
    bases = np.array([r.baseline_corr for r in kept], dtype=np.float64)
    if corrs.size:
        mean, se = mean_correlation(corrs, fisher_z)
        b_mean, b_se = mean_correlation(bases, fisher_z)
    else:
        mean = se = b_mean = b_se = np.nan
    pct = 100.0 * (mean - b_mean) / abs(b_mean) if b_mean else np.nan
    return EvalReport(
        per_target=tuple(results),
        mean=mean,
        se=se,
        baseline_mean=b_mean,
        baseline_se=b_se,
        pct_improvement=pct,
        skipped_count=sum(r.skipped for r in results),
        fisher_z=fisher_z,
        orientation=orientation,
        method_label=label,
    )


def _loo_predictions(
    human: MaskedMatrix,
    twin: MaskedMatrix,
    method,
    *,
    impute_rank: int | None,
    rank_grid,
    standardize: bool,
    seed: int,
):
    """Per-target predictions, train MSEs, and fallbacks for a matched pair.

    Both matrices are imputed once up front (the protocol imputes each side
    separately before the leave-one-out loop); regression methods then fit on
    standardized columns per target while completion methods consume the raw
    masked matrices.
    """
    if human.shape != twin.shape:
        raise DataError(
            f"leave-one-out needs human and twin of equal shape, got "
            f"{human.shape} and {twin.shape}; if the twin carries a trailing "
            "held-out column, drop it (synth writes twin_features.csv for this)"
        )
    n, m = human.shape
    regression = isinstance(method, RegressConfig)

    twin_dense, _ = impute_dense(twin, impute_rank, rank_grid, seed)
    if regression:
        human_dense, _ = impute_dense(human, impute_rank, rank_grid, seed)
        if standardize:
            h_std, h_stats = standardize_columns(MaskedMatrix.from_dense(human_dense))
            t_std, t_stats = standardize_columns(MaskedMatrix.from_dense(twin_dense))
            h_mat, t_mat = h_std.values, t_std.values
        else:
            h_mat, t_mat = human_dense, twin_dense
            h_stats = ColumnStats.identity(m)
            t_stats = ColumnStats.identity(m)

    predictions = np.empty((n, m))
    train_mses = np.full(m, np.nan)
    cols = np.arange(m)
    for j in range(m):
        feats = cols != j
        if regression:
            model = _fit_family(method, t_mat[:, feats], t_mat[:, j])
            fitted = regress.predict(model, t_mat[:, feats])
            train_mses[j] = float(np.mean((fitted - t_mat[:, j]) ** 2))
            predictions[:, j] = t_stats.invert_column(
                regress.predict(model, h_mat[:, feats]), j
            )
        else:
            sub_human = MaskedMatrix(human.values[:, feats], human.mask[:, feats])
            order = np.concatenate([cols[feats], [j]])
            sub_values = twin.values[:, order]
            sub_mask = twin.mask[:, order]
            if method.method is CompletionMethod.SYNTHETIC_PRIOR:
                # the warm start needs a complete twin column; use the imputed one
                sub_values = sub_values.copy()
                sub_mask = sub_mask.copy()
                sub_values[:, m - 1] = twin_dense[:, j]
                sub_mask[:, m - 1] = True
            stask = StackedTask(
                sub_human, MaskedMatrix(sub_values, sub_mask), target_col=m - 1
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                if method.method is CompletionMethod.SYNTHETIC_PRIOR:
                    predictions[:, j] = synthetic_prior_impute(stask, method)
                else:
                    predictions[:, j] = stacked_complete(stask, method)
    return predictions, train_mses, twin_dense


def loo_evaluate(
    human: MaskedMatrix,
    twin: MaskedMatrix,
    method,
    orientation: Orientation | str = Orientation.NEW_QUESTION,
    *,
    fisher_z: bool = False,
    tau: float | None = None,
    impute_rank: int | None = None,
    rank_grid=DEFAULT_RANK_GRID,
    standardize: bool = True,
    seed: int = 0,
    return_predictions: bool = False,
):
    """Hold out each column (or row) in turn, predict it, and score by Pearson.

    The baseline for each target is the raw twin column (imputed where the
    twin itself is missing) correlated with the true held-out human column
    over its observed entries. Targets whose method or baseline correlation
    is undefined (constant vectors) are skipped and counted, not imputed.
    With ``tau`` set, regression predictions are gated per target by the
    synthetic-system training MSE. The loop is sequential but every target is
    an independent pure computation ordered by index.
    """
    orientation = Orientation(orientation)
    if orientation is Orientation.NEW_USER:
        human = human.transpose()
        twin = twin.transpose()
    if tau is not None and not isinstance(method, RegressConfig):
        raise DataError("adaptive gating applies to regression methods only")

    predictions, train_mses, twin_dense = _loo_predictions(
        human, twin, method,
        impute_rank=impute_rank, rank_grid=rank_grid,
        standardize=standardize, seed=seed,
    )
    n, m = human.shape
    results = []
    final = predictions.copy()
    for j in range(m):
        transferred = True
        if tau is not None and not (train_mses[j] < tau):
            final[:, j] = twin_dense[:, j]
            transferred = False
        obs = human.mask[:, j]
        truth = human.values[obs, j]
        train_mse = None if np.isnan(train_mses[j]) else float(train_mses[j])
        try:
            corr = pearson(final[obs, j], truth)
            baseline = pearson(twin_dense[obs, j], truth)
            results.append(
                TargetResult(j, corr, baseline, train_mse, transferred, False)
            )
        except (UndefinedCorrelationError, DataError):
            results.append(TargetResult(j, None, None, train_mse, transferred, True))

    label = _method_label(method) + ("" if tau is None else f"+tau={tau:g}")
    report = _aggregate(results, fisher_z, orientation, label)
    if return_predictions:
        return report, final
    return report


def sweep_thresholds(
    human: MaskedMatrix,
    twin: MaskedMatrix,
    method: RegressConfig,
    taus,
    orientation: Orientation | str = Orientation.NEW_QUESTION,
    *,
    fisher_z: bool = False,
    impute_rank: int | None = None,
    rank_grid=DEFAULT_RANK_GRID,
    standardize: bool = True,
    seed: int = 0,
) -> list[dict]:
    """Evaluate the adaptive gate across a grid of thresholds.

    Fits once per target and reuses the predictions for every tau, so the
    sweep costs one leave-one-out pass. Returns one record per tau with the
    gated mean correlation and the number of transferred targets.
    """
    orientation = Orientation(orientation)
    h = human.transpose() if orientation is Orientation.NEW_USER else human
    t = twin.transpose() if orientation is Orientation.NEW_USER else twin
    if not isinstance(method, RegressConfig):
        raise DataError("sweep_thresholds requires a regression method")
    predictions, train_mses, twin_dense = _loo_predictions(
        h, t, method,
        impute_rank=impute_rank, rank_grid=rank_grid,
        standardize=standardize, seed=seed,
    )
    n, m = h.shape
    records = []
    for tau in taus:
        corrs = []
        transferred = 0
        skipped = 0
        for j in range(m):
            use_cal = bool(train_mses[j] < tau)
            transferred += use_cal
            pred = predictions[:, j] if use_cal else twin_dense[:, j]
            obs = h.mask[:, j]
            try:
                corrs.append(pearson(pred[obs], h.values[obs, j]))
            except (UndefinedCorrelationError, DataError):
                skipped += 1
        mean, se = mean_correlation(np.array(corrs), fisher_z) if corrs else (np.nan, np.nan)
        records.append(
            {
                "tau": float(tau),
                "mean": mean,
                "se": se,
                "n_transferred": transferred,
                "skipped": skipped,
            }
        )
    return records
