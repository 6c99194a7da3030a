import dataclasses
import filecmp

import numpy as np
import pytest

from svrgsim import experiment as ex
from svrgsim.errors import ConfigError


class TestConfigFormat:
    def test_serialize_parse_fixed_point(self):
        cfg = ex.ExperimentConfig(algorithms=("dsvrg", "accel_grad"), seeds=(0, 1, 2),
                                  lam=0.25, practical=True)
        text = ex.serialize_config(cfg)
        again = ex.serialize_config(ex.parse_config(text))
        assert again == text

    def test_lambda_alias(self):
        cfg = ex.parse_config("lambda = 0.125\n")
        assert cfg.lam == 0.125
        assert "lambda = 0.125" in ex.serialize_config(cfg)

    def test_comments_and_blanks_ignored(self):
        cfg = ex.parse_config("# hello\n\nm = 7   # machines\n")
        assert cfg.m == 7

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            ex.parse_config("bogus = 3\n")

    def test_bad_bool_reports_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            ex.parse_config("practical = maybe\n")

    def test_load_save_round_trip(self, tmp_path):
        cfg = ex.ExperimentConfig(seeds=(3, 4))
        path = tmp_path / "cfg.txt"
        ex.save_config(cfg, path)
        assert ex.load_config(path) == cfg


class TestValidation:
    def test_invalid_fields_named_together(self):
        cfg = ex.ExperimentConfig(dataset="nope", algorithms=("dsvrg", "wat"), epsilon=-1.0)
        with pytest.raises(ConfigError) as err:
            ex.validate_config(cfg)
        msg = str(err.value)
        assert "dataset" in msg and "wat" in msg and "epsilon" in msg

    def test_libsvm_needs_path(self):
        cfg = ex.ExperimentConfig(dataset="libsvm")
        with pytest.raises(ConfigError, match="data_path"):
            ex.validate_config(cfg)


class TestLambdaRules:
    def test_rules(self):
        assert ex.lambda_from_rule("N^-0.5", 0.0, 10000) == pytest.approx(0.01)
        assert ex.lambda_from_rule("N^-0.75", 0.0, 10000) == pytest.approx(1e-3)
        assert ex.lambda_from_rule("N^-1", 0.0, 10000) == pytest.approx(1e-4)
        assert ex.lambda_from_rule("explicit", 0.125, 10000) == 0.125


def small_run_config(tmp_path, **overrides):
    base = dict(dataset="synth_ridge", synth_points=240, synth_dim=5, synth_kappa=30.0,
                algorithms=("dsvrg",), seeds=(0,), m=4, T=40, K=4, epsilon=1e-9,
                output_dir=str(tmp_path / "out"), figures=False)
    base.update(overrides)
    return ex.ExperimentConfig(**base)


class TestRunExperiment:
    def test_outputs_exist_and_columns_monotone(self, tmp_path):
        cfg = small_run_config(tmp_path, algorithms=("dsvrg", "accel_grad"), figures=True)
        out = ex.run_experiment(cfg)
        assert len(out["csv"]) == 2
        for path in out["csv"]:
            lines = open(path).read().splitlines()
            assert lines[1] == ex.CSV_HEADER
            rows = [line.split(",") for line in lines[2:]]
            rounds = [int(r[3]) for r in rows]
            vectors = [int(r[4]) for r in rows]
            runtime = [int(r[5]) for r in rows]
            gaps = [float(r[6]) for r in rows]
            assert rounds == sorted(rounds)
            assert vectors == sorted(vectors)
            assert runtime == sorted(runtime)
            assert all(g > 0 for g in gaps)
        assert out["figures"]
        for fig in out["figures"]:
            assert open(fig, "rb").read(8).startswith(b"\x89PNG")

    def test_lambda_recorded_in_header(self, tmp_path):
        cfg = small_run_config(tmp_path, dataset="synth_logistic", lambda_rule="N^-0.5",
                               synth_points=10000, synth_dim=4, T=50, K=2, m=5)
        out = ex.run_experiment(cfg)
        header = open(out["csv"][0]).readline()
        assert "lambda=0.01" in header

    def test_same_seed_byte_identical(self, tmp_path):
        cfg_a = small_run_config(tmp_path, output_dir=str(tmp_path / "a"))
        cfg_b = small_run_config(tmp_path, output_dir=str(tmp_path / "b"))
        out_a = ex.run_experiment(cfg_a)
        out_b = ex.run_experiment(cfg_b)
        assert filecmp.cmp(out_a["csv"][0], out_b["csv"][0], shallow=False)

    def test_plot_script_mentions_both_charts(self, tmp_path):
        cfg = small_run_config(tmp_path)
        out = ex.run_experiment(cfg)
        script = open(out["plot_script"]).read()
        assert "gap_vs_rounds.png" in script
        assert "gap_vs_runtime.png" in script
        assert "never executed" not in script  # plain gnuplot text, no prose

    def test_local_pass_mode_runs(self, tmp_path):
        cfg = small_run_config(tmp_path, rj_equals_sj=True, T=60, K=4,
                               synth_points=240, m=4)
        out = ex.run_experiment(cfg)
        assert out["csv"]

    def test_practical_preset_runs(self, tmp_path):
        # eta near 1/L sits outside the guaranteed eta < 1/(4L) range
        # for this instance (L ~ 2), so this exercises practical mode
        cfg = small_run_config(tmp_path, practical=True, T=60, K=4, rj_equals_sj=True)
        cfg = dataclasses.replace(cfg, eta=0.45)
        out = ex.run_experiment(cfg)
        assert out["csv"]
        gaps = [float(line.split(",")[6])
                for line in open(out["csv"][0]).read().splitlines()[2:]]
        assert gaps[-1] < gaps[0]

    def test_oracle_algorithm_checkpoints(self, tmp_path):
        cfg = small_run_config(tmp_path, algorithms=("svrg_oracle",), T=30, K=3)
        out = ex.run_experiment(cfg)
        lines = open(out["csv"][0]).read().splitlines()
        assert len(lines) == 2 + 4  # stages 0..3

    def test_checkpoint_stride_keeps_last_row(self, tmp_path):
        cfg = small_run_config(tmp_path, T=30, K=5, checkpoint_stride=2)
        out = ex.run_experiment(cfg)
        lines = open(out["csv"][0]).read().splitlines()
        stages = [int(line.split(",")[2]) for line in lines[2:]]
        assert stages[0] == 0
        assert stages == sorted(stages)
        assert stages[-1] == max(stages)


class TestHardDatasetPath:
    def test_hard_instance_experiment(self, tmp_path):
        cfg = ex.ExperimentConfig(dataset="hard", hard_k=2, hard_kappa_prime=4.0,
                                  hard_blocks=2, hard_copies=30, algorithms=("dsvrg",),
                                  seeds=(0,), m=6, T=20, K=3, epsilon=1e-10,
                                  output_dir=str(tmp_path / "hard"), figures=False)
        out = ex.run_experiment(cfg)
        header = open(out["csv"][0]).readline()
        assert "hard-chain" in header
