import json
import math
import os

import numpy as np
import pytest

import occufluct as oc
from occufluct.cli import main
from occufluct.harness import (
    ConfigError,
    CovReport,
    ExperimentConfig,
    Thresholds,
    estimate_cov,
    limit_trend_test,
    load_config,
)
from occufluct.occupation import Ensemble

TINY_CONFIG = {
    "alpha": 1.5,
    "gamma": 1.0,
    "sigma": {"kind": "interval", "level": 0.5, "lo": -1.0, "hi": 1.0},
    "phi": [{"amplitude": 1.0, "center": 0.0, "width": 1.0}],
    "T_list": [4.0, 8.0, 16.0],
    "n_reps": 120,
    "n_t": 4,
    "delta": 0.25,
    "window_factor": 4.0,
    "master_seed": 99,
    "workers": 1,
    "n_boot": 60,
}


def write_config(tmp_path, data=None, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data if data is not None else TINY_CONFIG))
    return str(path)


def fake_ensemble(paths, master_seed=7, n_t=None):
    n_t = paths.shape[1] - 1 if n_t is None else n_t
    params = oc.ModelParams(1.5, 0.0, oc.SigmaProfile.zero(), 4.0, 25.0, 0.25)
    return Ensemble(params, oc.TestFunction.unit_bump(), oc.ScalingRegime.for_alpha(1.5),
                    n_t, master_seed, paths, np.arange(len(paths)), ())


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.alpha == 1.5 and cfg.sigma.D == 1.0

    def test_field_errors_name_the_field(self):
        with pytest.raises(ConfigError, match="T_list"):
            ExperimentConfig(T_list=(20.0, 10.0))
        with pytest.raises(ConfigError, match="alpha"):
            ExperimentConfig(alpha=2.5)
        with pytest.raises(ConfigError, match="n_t"):
            ExperimentConfig(n_t=7)  # 80 steps not divisible by 7
        with pytest.raises(ConfigError, match="delta"):
            ExperimentConfig(delta=0.3)
        with pytest.raises(ValueError, match="sigma"):
            ExperimentConfig(sigma=oc.SigmaProfile.interval(0.7, -1, 1))

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"aalpha": 1.5})

    def test_roundtrip_and_hash(self):
        cfg = ExperimentConfig()
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert again.content_hash() == cfg.content_hash()

    def test_override_paths(self):
        cfg = ExperimentConfig()
        assert cfg.with_override("n_reps", 50).n_reps == 50
        assert cfg.with_override("sigma.level", 0.25).sigma.level == 0.25
        assert cfg.with_override("thresholds.final_dev", 0.3).thresholds.final_dev == 0.3
        with pytest.raises(ConfigError, match="override"):
            cfg.with_override("sigma.slope", 1.0)

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(bad)


class TestEstimateCov:
    def test_zero_paths(self):
        ens = fake_ensemble(np.zeros((150, 5)))
        rep = estimate_cov(ens, n_boot=50)
        assert np.all(rep.mc == 0.0)
        assert np.all(rep.se == 0.0)

    def test_requires_min_reps(self):
        with pytest.raises(ValueError):
            estimate_cov(fake_ensemble(np.zeros((50, 5))))

    def test_bootstrap_determinism(self):
        rng = np.random.default_rng(1)
        ens = fake_ensemble(rng.standard_normal((200, 4)))
        a = estimate_cov(ens, n_boot=80)
        b = estimate_cov(ens, n_boot=80)
        assert np.array_equal(a.se, b.se)

    def test_bm_calibration(self):
        # 5000 exact BM paths: the estimate must sit on s ^ t at >= 95% of pairs
        rng = np.random.default_rng(404)
        grid = np.arange(1, 11) / 10.0
        paths = oc.sample_paths(oc.CovKernel("bm"), grid, 5000, rng)
        ens = fake_ensemble(np.hstack([np.zeros((5000, 1)), paths]), n_t=10)
        rep = estimate_cov(ens, n_boot=200)
        ok = 0
        total = 0
        for i in range(1, 11):
            for j in range(i, 11):
                true = min(grid[i - 1], grid[j - 1])
                total += 1
                ok += abs(rep.mc[i, j] - true) <= 3.0 * rep.se[i, j]
        assert ok / total >= 0.95


def synthetic_reports(devs, times=(0.5, 1.0), base=1.0, se=1e-6):
    reports = []
    for T, dev in zip((10.0, 30.0, 90.0), devs):
        n = len(times)
        limit = np.full((n, n), base)
        mc = limit * (1.0 + dev)
        reports.append((T, CovReport(np.asarray(times), mc, np.full((n, n), se),
                                     limit=limit)))
    return reports


class TestTrendVerdict:
    def test_monotone_pass(self):
        v = limit_trend_test(synthetic_reports([0.4, 0.2, 0.1]))
        assert v.passed
        assert np.allclose(v.median_devs, (0.4, 0.2, 0.1))

    def test_diverging_fails(self):
        v = limit_trend_test(synthetic_reports([0.1, 0.3, 0.5]))
        assert not v.passed
        assert any("nonincreasing" in r for r in v.reasons)

    def test_final_threshold(self):
        v = limit_trend_test(synthetic_reports([0.4, 0.3, 0.2]))
        assert not v.passed
        assert any("final median" in r for r in v.reasons)

    def test_per_pair_clause(self):
        reports = synthetic_reports([0.4, 0.2, 0.05])
        # drive one pair far out at the final T with a tiny SE
        reports[-1][1].mc[0, 1] = reports[-1][1].limit[0, 1] * 1.5
        reports[-1][1].mc[1, 0] = reports[-1][1].mc[0, 1]
        v = limit_trend_test(reports)
        assert not v.passed
        assert any("per-pair" in r for r in v.reasons)

    def test_floor_exclusion(self):
        reports = synthetic_reports([0.4, 0.2, 0.1])
        for _, rep in reports:
            rep.limit[0, 0] = 0.001  # below the floor: excluded
            rep.mc[0, 0] = 5.0
        v = limit_trend_test(reports)
        assert v.passed
        assert (0.5, 0.5) in v.excluded_pairs

    def test_needs_three_horizons(self):
        with pytest.raises(ValueError):
            limit_trend_test(synthetic_reports([0.4, 0.2])[:2])


class TestCli:
    def test_missing_config_exit_2(self, tmp_path, capsys):
        assert main(["limit-check", "--config", str(tmp_path / "nope.json")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_unknown_flag_exit_2(self):
        assert main(["simulate", "--frobnicate"]) == 2

    def test_bad_override_exit_2(self, tmp_path):
        cfg = write_config(tmp_path)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                     "--override", "sigma.slope=2"])
        assert code == 2

    def test_dep_exp_prints_exponent(self, capsys):
        assert main(["dep-exp", "--family", "rl", "--H", "0.8333"]) == 0
        out = capsys.readouterr().out
        val = float(out.split("estimate")[1].split("over")[0])
        assert abs(val - 0.667) < 0.02

    def test_dep_exp_bm_no_decay(self, capsys):
        assert main(["dep-exp", "--family", "bm", "--H", "0.5"]) == 0
        assert "no polynomial decay" in capsys.readouterr().out

    def test_gp_sample_writes_csv(self, tmp_path):
        out = tmp_path / "gp"
        code = main(["gp-sample", "--family", "rl", "--H", "0.8", "--n", "3",
                     "--n-grid", "5", "--seed", "1", "--out", str(out),
                     "--kernel-out", str(tmp_path / "kern.csv")])
        assert code == 0
        lines = (out / "paths.csv").read_text().strip().splitlines()
        assert lines[0] == "path_id,t,value"
        assert len(lines) == 1 + 3 * 5
        assert (tmp_path / "kern.csv").exists()

    def test_simulate_and_estimate_cov(self, tmp_path):
        cfg = write_config(tmp_path, dict(TINY_CONFIG, T_list=[4.0]))
        out = tmp_path / "sim"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        ens_dir = out / "T4"
        assert (ens_dir / "ensemble.csv").exists()
        meta = json.loads((ens_dir / "ensemble_meta.json").read_text())
        assert meta["schema_version"] == 1
        assert "created_utc" in meta["non_canonical"]
        cov_out = tmp_path / "cov"
        assert main(["estimate-cov", "--ensemble", str(ens_dir), "--out", str(cov_out),
                     "--n-boot", "50"]) == 0
        report = json.loads((cov_out / "cov_report.json").read_text())
        assert report["schema_version"] == 1
        assert all(np.isfinite(e["mc"]) for e in report["entries"])

    def test_simulate_dump_records(self, tmp_path):
        cfg = write_config(tmp_path, dict(TINY_CONFIG, T_list=[4.0], n_reps=3))
        out = tmp_path / "simr"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        recs = sorted((out / "T4" / "records").glob("*.csv")) if (
            out / "T4" / "records").exists() else []
        assert recs == []  # dump is off by default
        out2 = tmp_path / "simr2"
        assert main(["simulate", "--config", cfg, "--out", str(out2),
                     "--dump-records"]) == 0
        recs = sorted((out2 / "T4" / "records").glob("*.csv"))
        assert len(recs) == 3
        assert recs[0].read_text().splitlines()[0] == "s,value"

    def test_oracle_cov_cli(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "oracle"
        assert main(["oracle-cov", "--config", cfg, "--T", "4", "--grid",
                     "0.5,1.0", "--out", str(out), "--no-check"]) == 0
        lines = (out / "oracle.csv").read_text().strip().splitlines()
        assert lines[0] == "s,t,value"
        assert len(lines) == 4  # (0.5,0.5), (0.5,1), (1,1)
        meta = json.loads((out / "oracle_meta.json").read_text())
        assert meta["refinement_checked"] is False

    def test_self_check_exit_0(self):
        assert main(["self-check"]) == 0


class TestLimitCheckPipeline:
    def test_outputs_and_determinism(self, tmp_path):
        # loosened thresholds so the tiny run passes: this exercises the
        # pipeline plumbing, not the mathematical trend
        data = dict(TINY_CONFIG)
        data["thresholds"] = {"final_dev": 5.0, "se_mult": 50.0, "limit_floor": 0.02}
        cfg = write_config(tmp_path, data)
        outs = []
        for sub in ("runA", "runB"):
            out = tmp_path / sub
            code = main(["limit-check", "--config", cfg, "--out", str(out)])
            assert code == 0
            outs.append(out)
        for rel in ("T4/ensemble.csv", "T8/ensemble.csv", "T16/ensemble.csv",
                    "T4/cov_report.csv", "deviation_vs_T.csv"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
        va, vb = (json.loads((o / "verdict.json").read_text()) for o in outs)
        va.pop("non_canonical"), vb.pop("non_canonical")
        assert va == vb
        assert va["passed"] is True
        dev = (outs[0] / "deviation_vs_T.csv").read_text().splitlines()
        assert dev[0] == "T,median_rel_dev"
        assert len(dev) == 4

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        data = dict(TINY_CONFIG, T_list=[4.0], n_reps=40)
        cfg = write_config(tmp_path, data)
        outs = []
        for sub, workers in (("w1", "1"), ("w2", "2")):
            out = tmp_path / sub
            assert main(["simulate", "--config", cfg, "--out", str(out),
                         "--workers", workers]) == 0
            outs.append(out / "T4" / "ensemble.csv")
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_failing_trend_exits_1(self, tmp_path):
        data = dict(TINY_CONFIG)
        data["thresholds"] = {"final_dev": 1e-9, "se_mult": 1e-9, "limit_floor": 0.02}
        cfg = write_config(tmp_path, data)
        assert main(["limit-check", "--config", cfg, "--out", str(tmp_path / "f")]) == 1

    def test_all_outputs_finite(self, tmp_path):
        data = dict(TINY_CONFIG, T_list=[4.0], n_reps=60)
        cfg = write_config(tmp_path, data)
        out = tmp_path / "fin"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        body = (out / "T4" / "ensemble.csv").read_text().lower()
        assert "nan" not in body and "inf" not in body
