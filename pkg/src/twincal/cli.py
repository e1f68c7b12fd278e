"""Command-line surface: calibrate, distcal, diagnose, synth, eval-sweep.

Every subcommand reads an optional JSON config file, applies environment
overrides (``SYNDIGITS_*``) and then command-line flags (flags win), runs one
pipeline, and writes plot-ready CSV/JSON artifacts to the output directory.
All outputs are byte-deterministic given the same config and seed. Failures
print a machine-readable error JSON to stdout and exit nonzero (2 for bad
inputs, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .calibrate import Orientation, loo_evaluate, sweep_thresholds
from .diagnostics import SubspaceAxis, alignment_report, variance_explained
from .distcal import Categorical, MirrorDescentConfig, cross_table
from .matcore import DataError, MaskedMatrix, read_matrix_csv, write_matrix_csv
from .profiles import method_config, profile_names
from .synth import generate_discrete_world, generate_latent_world

ENV_PREFIX = "SYNDIGITS_"

_ENV_KEYS = (
    "human", "twin", "method", "profile", "orientation", "tau",
    "fisher_z", "seed", "out", "axis", "standardize",
)


class CliError(Exception):
    def __init__(self, message: str, *, exit_code: int = 2, path: str | None = None):
        super().__init__(message)
        self.exit_code = exit_code
        self.path = path


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}", path=str(p))
    with open(p) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError(f"invalid JSON in config {p}: {exc}", path=str(p)) from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config {p} must hold a JSON object", path=str(p))
    return cfg


def _env_overrides() -> dict:
    out = {}
    for key in _ENV_KEYS:
        raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            out[key] = raw
    return out


_COERCERS = {
    "seed": int,
    "tau": float,
    "fisher_z": lambda v: v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes"),
    "standardize": lambda v: v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes"),
}


def _resolve(key: str, cli_value, config: dict, default=None):
    """Precedence: explicit CLI flag > environment variable > config > default."""
    if cli_value is not None:
        value = cli_value
    elif key in _env_overrides():
        value = _env_overrides()[key]
    elif key in config:
        value = config[key]
    else:
        return default
    coerce = _COERCERS.get(key)
    return coerce(value) if coerce and value is not None else value


def _require_matrix(path: str | None, role: str) -> MaskedMatrix:
    if path is None:
        raise CliError(f"missing required {role} matrix path")
    p = Path(path)
    if not p.exists():
        raise CliError(f"{role} matrix file not found: {p}", path=str(p))
    return read_matrix_csv(p)


def _out_dir(args, config: dict) -> Path:
    out = _resolve("out", args.out, config, default="twincal_out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def _method_from_args(args, config: dict, seed: int):
    method = _resolve("method", args.method, config, default="ridge")
    profile = _resolve("profile", getattr(args, "profile", None), config)
    params = dict(config.get("params", {}))
    if "hidden_sizes" in params:
        params["hidden_sizes"] = tuple(params["hidden_sizes"])
    return method, method_config(method, profile, overrides=params, seed=seed)


def cmd_calibrate(args) -> int:
    config = _load_config(args.config)
    seed = _resolve("seed", args.seed, config, default=0)
    orientation = Orientation(
        _resolve("orientation", args.orientation, config, default="new_question")
    )
    fisher_z = _resolve("fisher_z", args.fisher_z or None, config, default=False)
    tau = _resolve("tau", args.tau, config)
    human = _require_matrix(_resolve("human", args.human, config), "human")
    twin = _require_matrix(_resolve("twin", args.twin, config), "twin")
    _, method = _method_from_args(args, config, seed)
    out = _out_dir(args, config)

    report, predictions = loo_evaluate(
        human, twin, method, orientation,
        fisher_z=fisher_z,
        tau=tau,
        impute_rank=config.get("impute_rank"),
        standardize=_resolve("standardize", None, config, default=True),
        seed=seed,
        return_predictions=True,
    )
    if orientation is Orientation.NEW_USER:
        predictions = predictions.T
    _write_json(out / "report.json", report.to_json_dict())
    _write_csv(out / "per_target.csv", report.to_csv_rows())
    write_matrix_csv(out / "predictions.csv", predictions)
    return 0


def cmd_eval_sweep(args) -> int:
    config = _load_config(args.config)
    seed = _resolve("seed", args.seed, config, default=0)
    orientation = Orientation(
        _resolve("orientation", args.orientation, config, default="new_question")
    )
    fisher_z = _resolve("fisher_z", args.fisher_z or None, config, default=False)
    human = _require_matrix(_resolve("human", args.human, config), "human")
    twin = _require_matrix(_resolve("twin", args.twin, config), "twin")
    _, method = _method_from_args(args, config, seed)
    taus = config.get("taus")
    if args.taus:
        taus = [float(t) for t in args.taus.split(",")]
    if not taus:
        raise CliError("eval-sweep needs a nonempty tau grid ('taus' list or --taus)")
    out = _out_dir(args, config)

    records = sweep_thresholds(
        human, twin, method, taus, orientation,
        fisher_z=fisher_z,
        impute_rank=config.get("impute_rank"),
        standardize=_resolve("standardize", None, config, default=True),
        seed=seed,
    )
    rows = [["tau", "mean", "se", "n_transferred", "skipped"]]
    for rec in records:
        rows.append([
            _fmt(rec["tau"]), _fmt(rec["mean"]), _fmt(rec["se"]),
            rec["n_transferred"], rec["skipped"],
        ])
    _write_csv(out / "sweep.csv", rows)
    _write_json(out / "sweep.json", records)
    return 0


def cmd_diagnose(args) -> int:
    config = _load_config(args.config)
    seed = _resolve("seed", args.seed, config, default=0)
    orientation = _resolve("orientation", args.orientation, config)
    axis = _resolve("axis", getattr(args, "axis", None), config)
    if axis is None:
        axis = (
            SubspaceAxis.COLUMN_SPACE
            if orientation == Orientation.NEW_USER.value
            else SubspaceAxis.ROW_SPACE
        )
    human = _require_matrix(_resolve("human", args.human, config), "human")
    twin = _require_matrix(_resolve("twin", args.twin, config), "twin")
    out = _out_dir(args, config)

    report = alignment_report(
        human, twin, axis, seed,
        rank=config.get("rank"), impute_rank=config.get("impute_rank"),
    )
    _write_json(out / "alignment.json", report.to_json_dict())

    curve_h = variance_explained(human, impute_rank=config.get("impute_rank"), seed=seed)
    curve_t = variance_explained(twin, impute_rank=config.get("impute_rank"), seed=seed)
    rows = [["k", "human", "twin"]]
    for k in range(max(len(curve_h), len(curve_t))):
        rows.append([
            k + 1,
            _fmt(curve_h[k]) if k < len(curve_h) else "",
            _fmt(curve_t[k]) if k < len(curve_t) else "",
        ])
    _write_csv(out / "variance_explained.csv", rows)
    return 0


def cmd_distcal(args) -> int:
    config = _load_config(args.config)
    seed = _resolve("seed", args.seed, config, default=0)
    human = _require_matrix(_resolve("human", args.human, config), "human")
    twin = _require_matrix(_resolve("twin", args.twin, config), "twin")
    if not twin.is_fully_observed():
        raise CliError("twin category matrix must be fully observed")
    n_categories = config.get("n_categories")
    if n_categories is None:
        n_categories = int(np.nanmax(twin.values))
    md = config.get("mirror_descent", {})
    md_cfg = MirrorDescentConfig(
        eta0=float(md.get("eta0", 1.0)),
        max_iters=int(md.get("max_iters", 2000)),
        tol=float(md.get("tol", 1e-8)),
        epsilon_floor=float(md.get("epsilon_floor", 1e-9)),
        seed=seed,
    )
    out = _out_dir(args, config)

    twin_codes = twin.values.astype(np.int64)
    if np.any(np.abs(twin.values - twin_codes) > 0):
        raise CliError("twin matrix must hold integer category codes")
    p_all = []
    for j in range(human.n_cols):
        observed, _ = human.column(j)
        if observed.size == 0:
            raise CliError(f"human column {j} has no observed responses")
        p_all.append(Categorical.from_codes(observed.astype(np.int64), n_categories))

    table = cross_table(
        p_all, twin_codes, n_categories,
        cfg=md_cfg,
        test_frac=float(config.get("test_frac", 0.2)),
        seed=seed,
    )
    _write_json(out / "cross_table.json", table)

    rows = [["train_objective", "variant", "test_metric", "mean", "se"]]
    for objective, variants in table["rows"].items():
        for variant, cell in variants.items():
            for metric, stats in cell["test_metrics"].items():
                rows.append([
                    objective, variant, metric,
                    _fmt(stats["mean"]), _fmt(stats["se"]),
                ])
    for metric, stats in table["baseline"].items():
        rows.append(["baseline", "uniform", metric, _fmt(stats["mean"]), _fmt(stats["se"])])
    _write_csv(out / "cross_table.csv", rows)
    return 0


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    seed = _resolve("seed", args.seed, config, default=0)
    params = dict(config.get("synth", {}))
    kind = params.pop("kind", args.kind or "latent")
    out = _out_dir(args, config)

    if kind == "latent":
        n = int(params.pop("n", 200))
        m = int(params.pop("m", 50))
        dim = int(params.pop("dim", 5))
        try:
            world, human, twin, target = generate_latent_world(
                n, m, dim, seed=seed, **params
            )
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid synth parameters: {exc}") from exc
        write_matrix_csv(out / "human.csv", human)
        write_matrix_csv(out / "twin.csv", twin)
        # the twin without its held-out target column, shaped for `calibrate`
        write_matrix_csv(
            out / "twin_features.csv",
            MaskedMatrix(twin.values[:, :-1], twin.mask[:, :-1]),
        )
        write_matrix_csv(out / "target.csv", target[:, None])
        sidecar = {
            "kind": "latent",
            "seed": seed,
            "n_users": world.n_users,
            "n_questions": world.n_questions,
            "dim": world.dim,
            "twin_dim": world.twin_dim,
            "alignment": world.alignment.value,
            "noise_sigma": world.noise_sigma,
            "user_factors": world.user_factors.tolist(),
            "question_factors": world.question_factors.tolist(),
            "twin_user_factors": world.twin_user_factors.tolist(),
            "twin_question_factors": world.twin_question_factors.tolist(),
            "target_embedding": world.target_embedding.tolist(),
            "twin_target_embedding": world.twin_target_embedding.tolist(),
            "row_bias": None if world.row_bias is None else world.row_bias.tolist(),
        }
        _write_json(out / "world.json", sidecar)
        return 0

    if kind == "discrete":
        n = int(params.pop("n", 500))
        m = int(params.pop("m", 40))
        k = int(params.pop("n_categories", 5))
        try:
            world, marginals, samples, target = generate_discrete_world(
                n, m, k, seed=seed, **params
            )
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid synth parameters: {exc}") from exc
        write_matrix_csv(out / "twin_samples.csv", samples.astype(float))
        all_marginals = np.stack([p.probs for p in marginals] + [target.probs])
        write_matrix_csv(
            out / "marginals.csv", all_marginals,
            row_labels=[f"q{j}" for j in range(m)] + ["target"],
        )
        sidecar = {
            "kind": "discrete",
            "seed": seed,
            "n_twins": world.n_twins,
            "n_questions": world.n_questions,
            "n_categories": world.n_categories,
            "support_atoms": world.support_atoms.tolist(),
            "question_profiles": world.question_profiles.tolist(),
            "twin_mixture": world.twin_mixture.tolist(),
            "human_mixture": world.human_mixture.tolist(),
            "twin_atoms": world.twin_atoms.tolist(),
            "target_coeffs": world.target_coeffs.tolist(),
            "reweight_bound": world.reweight_bound,
            "exact_reweighting": world.exact_reweighting,
        }
        _write_json(out / "world.json", sidecar)
        return 0

    raise CliError(f"unknown synth kind {kind!r}; expected 'latent' or 'discrete'")


# ---------------------------------------------------------------------------
# Parser and entry point.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twincal",
        description="Calibrate digital-twin response matrices against human data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, matrices=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", help="output directory")
        if matrices:
            p.add_argument("--human", help="human matrix CSV")
            p.add_argument("--twin", help="twin matrix CSV")

    p = sub.add_parser("calibrate", help="leave-one-out calibration benchmark")
    common(p)
    p.add_argument("--method", help="ridge|lasso|en|nn|sc|si|hsv|ssv|als|sp")
    p.add_argument("--profile", help=f"hyperparameter profile: {profile_names()}")
    p.add_argument("--tau", type=float, help="adaptive-transfer threshold")
    p.add_argument("--fisher-z", dest="fisher_z", action="store_true",
                   help="average correlations in z-space")
    p.add_argument("--orientation", choices=[o.value for o in Orientation])
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval-sweep", help="adaptive-threshold sweep")
    common(p)
    p.add_argument("--method", help="regression method for the sweep")
    p.add_argument("--profile")
    p.add_argument("--taus", help="comma-separated tau grid")
    p.add_argument("--fisher-z", dest="fisher_z", action="store_true")
    p.add_argument("--orientation", choices=[o.value for o in Orientation])
    p.set_defaults(func=cmd_eval_sweep)

    p = sub.add_parser("diagnose", help="subspace alignment diagnostics")
    common(p)
    p.add_argument("--axis", choices=[a.value for a in SubspaceAxis])
    p.add_argument("--orientation", choices=[o.value for o in Orientation])
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("distcal", help="distribution-level calibration cross-table")
    common(p)
    p.set_defaults(func=cmd_distcal)

    p = sub.add_parser("synth", help="generate a synthetic world")
    common(p, matrices=False)
    p.add_argument("--kind", choices=["latent", "discrete"])
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        payload = {"error": str(exc)}
        if exc.path is not None:
            payload["path"] = exc.path
        print(json.dumps(payload, sort_keys=True))
        return exc.exit_code
    except (DataError, ValueError, KeyError) as exc:
        print(json.dumps({"error": str(exc), "kind": type(exc).__name__}, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
