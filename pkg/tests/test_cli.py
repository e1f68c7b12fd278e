import json

import numpy as np
import pytest

from twincal.cli import main
from twincal.matcore import MaskedMatrix, read_matrix_csv, write_matrix_csv
from twincal.profiles import method_config
from twincal.synth import generate_discrete_world, generate_latent_world


def write_pair(tmp_path, seed=0, n=40, m=12, d=3, **world_kw):
    _, human, twin, _ = generate_latent_world(n, m, d, seed=seed, **world_kw)
    twin_features = MaskedMatrix(twin.values[:, :m], twin.mask[:, :m])
    hp = tmp_path / "human.csv"
    tp = tmp_path / "twin.csv"
    write_matrix_csv(hp, human)
    write_matrix_csv(tp, twin_features)
    return hp, tp


def read_bytes_tree(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


class TestCalibrateCommand:
    def test_smoke_and_outputs(self, tmp_path, capsys):
        hp, tp = write_pair(tmp_path, alignment="identical")
        out = tmp_path / "out"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"params": {"lam": 1e-8}}))
        rc = main(["calibrate", "--config", str(cfg), "--human", str(hp),
                   "--twin", str(tp), "--method", "ridge", "--out", str(out),
                   "--seed", "1"])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["method"] == "ridge"
        assert report["mean"] > 0.999
        assert (out / "per_target.csv").exists()
        preds = read_matrix_csv(out / "predictions.csv")
        assert preds.shape == (40, 12)

    def test_missing_input_file_exit_2_with_path(self, tmp_path, capsys):
        rc = main(["calibrate", "--human", str(tmp_path / "nope.csv"),
                   "--twin", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")])
        assert rc == 2
        payload = json.loads(capsys.readouterr().out)
        assert "nope.csv" in payload["path"]

    def test_profile_defaults_loaded(self):
        cfg = method_config("en", "movielens.new_question")
        assert cfg.alpha == 0.1
        assert cfg.l1_ratio == 0.1
        cfg = method_config("ridge", "twin2k.new_user")
        assert cfg.lam == 5000.0
        cfg = method_config("ssv", "movielens.new_question")
        assert cfg.rank == 15 and cfg.lam == 5.0

    def test_config_file_and_flag_precedence(self, tmp_path):
        hp, tp = write_pair(tmp_path, alignment="identical")
        cfg = {"human": str(hp), "twin": str(tp), "method": "ridge",
               "out": str(tmp_path / "cfg_out"), "seed": 3}
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = main(["calibrate", "--config", str(cfg_path)])
        assert rc == 0
        assert (tmp_path / "cfg_out" / "report.json").exists()
        # flag overrides the config's output directory
        rc = main(["calibrate", "--config", str(cfg_path),
                   "--out", str(tmp_path / "flag_out")])
        assert rc == 0
        assert (tmp_path / "flag_out" / "report.json").exists()

    def test_env_override(self, tmp_path, monkeypatch):
        hp, tp = write_pair(tmp_path, alignment="identical")
        out = tmp_path / "env_out"
        monkeypatch.setenv("SYNDIGITS_OUT", str(out))
        rc = main(["calibrate", "--human", str(hp), "--twin", str(tp),
                   "--method", "ridge"])
        assert rc == 0
        assert (out / "report.json").exists()


class TestDeterminism:
    def test_calibrate_byte_identical(self, tmp_path):
        hp, tp = write_pair(tmp_path, seed=5, noise_sigma=0.1,
                            alignment="linear_distortion")
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(["calibrate", "--human", str(hp), "--twin", str(tp),
                       "--method", "en", "--out", str(out), "--seed", "7"])
            assert rc == 0
            outs.append(read_bytes_tree(out))
        assert outs[0] == outs[1]

    def test_synth_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(["synth", "--kind", "latent", "--seed", "9",
                       "--out", str(out)])
            assert rc == 0
            outs.append(read_bytes_tree(out))
        assert outs[0] == outs[1]


class TestDiagnoseCommand:
    def test_self_alignment_zero_distance(self, tmp_path):
        hp, tp = write_pair(tmp_path, seed=6, noise_sigma=0.1)
        out = tmp_path / "diag"
        rc = main(["diagnose", "--human", str(hp), "--twin", str(hp),
                   "--out", str(out), "--seed", "0"])
        assert rc == 0
        payload = json.loads((out / "alignment.json").read_text())
        assert max(payload["proj_frobenius"]) < 1e-8
        assert payload["r_max"] == payload["rank"] + 2
        assert (out / "variance_explained.csv").exists()

    def test_axis_from_orientation(self, tmp_path):
        hp, tp = write_pair(tmp_path, seed=7, noise_sigma=0.1)
        out = tmp_path / "diag2"
        rc = main(["diagnose", "--human", str(hp), "--twin", str(tp),
                   "--orientation", "new_user", "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "alignment.json").read_text())
        assert payload["axis"] == "column_space"


class TestSynthCommand:
    def test_latent_files_round_trip(self, tmp_path):
        out = tmp_path / "w"
        rc = main(["synth", "--kind", "latent", "--seed", "1", "--out", str(out)])
        assert rc == 0
        human = read_matrix_csv(out / "human.csv")
        twin = read_matrix_csv(out / "twin.csv")
        features = read_matrix_csv(out / "twin_features.csv")
        assert twin.n_cols == human.n_cols + 1
        assert features.shape == human.shape
        assert np.array_equal(features.values[features.mask],
                              twin.values[:, :-1][features.mask])
        world = json.loads((out / "world.json").read_text())
        assert world["kind"] == "latent"
        assert len(world["user_factors"]) == human.n_rows

    def test_discrete_files(self, tmp_path):
        out = tmp_path / "d"
        rc = main(["synth", "--kind", "discrete", "--seed", "2", "--out", str(out)])
        assert rc == 0
        samples = read_matrix_csv(out / "twin_samples.csv")
        marginals = read_matrix_csv(out / "marginals.csv")
        assert samples.is_fully_observed()
        assert marginals.n_rows == samples.n_cols  # m train + target
        sums = marginals.values.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-12)

    def test_bad_kind_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"synth": {"kind": "bogus"},
                                   "out": str(tmp_path / "x")}))
        rc = main(["synth", "--config", str(cfg)])
        assert rc == 2
        assert "bogus" in json.loads(capsys.readouterr().out)["error"]

    def test_bad_params_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "synth": {"kind": "latent", "missing_frac": 0.9},
            "out": str(tmp_path / "x"),
        }))
        rc = main(["synth", "--config", str(cfg)])
        assert rc == 2
        assert "missing_frac" in json.loads(capsys.readouterr().out)["error"]


class TestDistcalCommand:
    def test_cross_table_outputs(self, tmp_path):
        world, marginals, samples, _ = generate_discrete_world(60, 10, 4, seed=3)
        rng = np.random.default_rng(0)
        human_codes = np.stack(
            [rng.choice(4, size=80, p=p.probs) + 1 for p in marginals], axis=1
        )
        hp = tmp_path / "h.csv"
        tp = tmp_path / "t.csv"
        write_matrix_csv(hp, human_codes.astype(float))
        write_matrix_csv(tp, samples[:, :10].astype(float))
        out = tmp_path / "dc"
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "human": str(hp), "twin": str(tp), "out": str(out),
            "n_categories": 4, "mirror_descent": {"max_iters": 120},
        }))
        rc = main(["distcal", "--config", str(cfg), "--seed", "0"])
        assert rc == 0
        table = json.loads((out / "cross_table.json").read_text())
        assert set(table["rows"]) == {"tv", "chi2", "kl", "hellinger",
                                      "ks", "cdf_l1", "cdf_l2"}
        lines = (out / "cross_table.csv").read_text().strip().splitlines()
        # 7 objectives x 3 variants x 7 metrics + 7 baseline rows + header
        assert len(lines) == 7 * 3 * 7 + 7 + 1

    def test_baseline_matches_independent_evaluation(self, tmp_path):
        from twincal.distcal import (
            Categorical,
            discrepancy,
            ensemble_distribution,
            split_questions,
            uniform_baseline,
        )

        world, marginals, samples, _ = generate_discrete_world(50, 8, 3, seed=4)
        human_codes = np.stack(
            [np.random.default_rng(j).choice(3, size=60, p=p.probs) + 1
             for j, p in enumerate(marginals)], axis=1
        )
        hp = tmp_path / "h.csv"
        tp = tmp_path / "t.csv"
        write_matrix_csv(hp, human_codes.astype(float))
        write_matrix_csv(tp, samples[:, :8].astype(float))
        out = tmp_path / "dc2"
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "human": str(hp), "twin": str(tp), "out": str(out),
            "n_categories": 3, "mirror_descent": {"max_iters": 60},
        }))
        assert main(["distcal", "--config", str(cfg), "--seed", "5"]) == 0
        table = json.loads((out / "cross_table.json").read_text())

        # recompute the baseline TV row independently
        p_all = [Categorical.from_codes(human_codes[:, j], 3) for j in range(8)]
        _, test_idx = split_questions(8, 0.2, seed=5)
        base = uniform_baseline(50, 3)
        tvs = [
            discrepancy("tv", p_all[j],
                        ensemble_distribution(base, samples[:, j], 3))
            for j in test_idx
        ]
        assert table["baseline"]["tv"]["mean"] == pytest.approx(
            float(np.mean(tvs)), abs=1e-12
        )


class TestEvalSweepCommand:
    def test_sweep_csv(self, tmp_path):
        hp, tp = write_pair(tmp_path, seed=8, noise_sigma=0.1,
                            alignment="identical")
        out = tmp_path / "sw"
        rc = main(["eval-sweep", "--human", str(hp), "--twin", str(tp),
                   "--method", "ridge", "--taus", "0,0.5,inf",
                   "--out", str(out)])
        assert rc == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "tau,mean,se,n_transferred,skipped"
        assert len(lines) == 4


class TestOrientationAndGatingFlags:
    def test_new_user_with_tau_and_fisher_z(self, tmp_path):
        _, human, twin, _ = generate_latent_world(
            20, 30, 3, seed=21, alignment="identical", noise_sigma=0.05
        )
        twin_features = MaskedMatrix(twin.values[:, :30], twin.mask[:, :30])
        hp, tp = tmp_path / "h.csv", tmp_path / "t.csv"
        write_matrix_csv(hp, human)
        write_matrix_csv(tp, twin_features)
        out = tmp_path / "nu"
        rc = main(["calibrate", "--human", str(hp), "--twin", str(tp),
                   "--method", "ridge", "--orientation", "new_user",
                   "--tau", "0.5", "--fisher-z", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["orientation"] == "new_user"
        assert report["fisher_z"] is True
        assert len(report["per_target"]) == 20  # one per user
        # predictions come back in the input orientation
        preds = read_matrix_csv(out / "predictions.csv")
        assert preds.shape == (20, 30)

    def test_new_user_completion_method(self, tmp_path):
        _, human, twin, _ = generate_latent_world(
            24, 16, 2, seed=22, alignment="identical"
        )
        twin_features = MaskedMatrix(twin.values[:, :16], twin.mask[:, :16])
        from twincal.calibrate import loo_evaluate
        from twincal.completion import CompletionConfig

        report = loo_evaluate(human, twin_features,
                              CompletionConfig("hsv", rank=2), "new_user")
        assert report.mean > 0.99
