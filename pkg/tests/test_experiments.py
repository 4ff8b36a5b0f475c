import json
import os

import numpy as np
import pytest

from hilbmap.experiments import (EXPERIMENTS, ExperimentConfig,
                                 ExperimentReport, run_cone_closure,
                                 run_convexity, run_delta_limit, run_experiment,
                                 run_nonsurjectivity, run_openness)


def small_config(name, **overrides):
    cfg = ExperimentConfig.default(name)
    if name == "convexity":
        cfg.options["pairs"] = 1
        cfg.sweeps["t"] = [0.0, 0.5, 1.0]
    elif name == "delta-limit":
        cfg.sweeps["eps"] = [0.2, 0.1, 0.05]
    elif name == "nonsurjectivity":
        cfg.options["metrics"] = 4
        cfg.options["invert_iters"] = 4
    elif name == "cone-closure":
        cfg.options["metrics"] = 3
        cfg.options["h_checks"] = 1
    elif name == "openness":
        cfg.sweeps["radii"] = [0.05]
        cfg.options["targets"] = 3
    for key, val in overrides.items():
        setattr(cfg, key, val)
    return cfg


class TestRunners:
    @pytest.mark.parametrize("name", EXPERIMENTS)
    def test_small_runs_pass(self, name, tmp_path):
        cfg = small_config(name, outdir=str(tmp_path / name))
        report = run_experiment(cfg)
        assert report.verdict == "pass"
        assert report.exit_code == 0
        report.write(cfg.outdir)
        assert os.path.exists(os.path.join(cfg.outdir, "report.json"))
        assert os.path.exists(os.path.join(cfg.outdir, "cases.csv"))

    def test_convexity_records_solver_residuals(self):
        report = run_convexity(small_config("convexity"))
        assert all(c["solver_residual"] <= 1e-9 for c in report.cases)

    def test_delta_limit_rejects_non_minimal_family(self):
        cfg = small_config("delta-limit")
        cfg.k = 2  # full monomial basis of O(2) is not minimal
        with pytest.raises(ValueError):
            run_delta_limit(cfg)

    def test_nonsurjectivity_summary_has_witness_bound(self):
        report = run_nonsurjectivity(small_config("nonsurjectivity"))
        assert abs(report.summary["bound"] - 0.5) <= 1e-9
        assert report.summary["stall_residual"] > 1e-3

    def test_openness_reports_margin_and_rank(self):
        report = run_openness(small_config("openness"))
        assert report.summary["spectral_margin"] > 0
        assert report.summary["tangent_rank"] == 4
        assert report.summary["largest_full_success_radius"] >= 0.05


class TestDeterminism:
    @pytest.mark.parametrize("name", ["convexity", "cone-closure"])
    def test_identical_payload_for_identical_seed(self, name):
        cfg = small_config(name)
        a = run_experiment(cfg).to_json()
        b = run_experiment(cfg).to_json()
        assert a == b

    def test_different_seed_changes_payload(self):
        a = run_experiment(small_config("convexity")).to_json()
        b = run_experiment(small_config("convexity", seed=8)).to_json()
        assert a != b


class TestConfig:
    def test_ini_roundtrip(self, tmp_path):
        cfg = small_config("convexity", seed=123)
        path = str(tmp_path / "convexity.ini")
        cfg.to_ini(path)
        back = ExperimentConfig.from_ini(path)
        assert back.resolved() == cfg.resolved()

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.default("no-such-experiment")

    def test_defaults_recorded_in_report(self):
        cfg = small_config("convexity")
        report = run_experiment(cfg)
        payload = report.payload()
        assert payload["config"]["tolerances"]["entry_error"] == 1e-7
        assert payload["config"]["grids"]["solver_n"] == 1025

    def test_json_payload_serializes(self):
        report = run_experiment(small_config("delta-limit"))
        json.loads(report.to_json())
