import json
from pathlib import Path

import numpy as np
import pytest

from ghmctune.bench import (
    ConfigError,
    RunConfig,
    _read_chain,
    _read_records,
    _write_chain,
    _write_records,
    cmd_analyze_integrators,
    cmd_compare,
    cmd_diagnose,
    cmd_sample,
    cmd_sweep_phi_l,
    cmd_tune,
    load_chain_set,
    parse_rule,
    resolve_benchmark,
)
from ghmctune.cli import main
from ghmctune.samplers import ChainRecords


def _small_config(tmp_path, **overrides):
    base = dict(benchmark="gauss-5", mode="ghmc", n_chains=2, n_burnin=300,
                n_prod=400, seed=3, out_dir=str(tmp_path / "run"))
    base.update(overrides)
    return RunConfig(**base)


class TestRunConfig:
    def test_phi_override_forbidden_in_hmc(self, tmp_path):
        with pytest.raises(ConfigError):
            _small_config(tmp_path, mode="hmc", phi_fixed=0.3)

    def test_single_l_override(self, tmp_path):
        with pytest.raises(ConfigError):
            _small_config(tmp_path, l_fixed=2, l_choices=(2, 5))

    def test_blr_file_needs_path(self, tmp_path):
        with pytest.raises(ConfigError):
            _small_config(tmp_path, benchmark="blr-file")

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = _small_config(tmp_path)
        b = _small_config(tmp_path)
        c = _small_config(tmp_path, seed=4)
        assert a.hash() == b.hash()
        assert a.hash() != c.hash()

    def test_warm_start_only_for_gaussians(self, tmp_path):
        with pytest.raises(ConfigError):
            _small_config(tmp_path, benchmark="banana", warm_start=True)


class TestBenchmarks:
    def test_gauss_preset(self, tmp_path):
        model = resolve_benchmark(_small_config(tmp_path))
        assert model.dimension == 5
        assert model.has_hessian

    def test_blr_synthetic_preset(self, tmp_path):
        model = resolve_benchmark(
            _small_config(tmp_path, benchmark="blr-synthetic-4-30"))
        assert model.dimension == 4

    def test_banana_preset(self, tmp_path):
        model = resolve_benchmark(_small_config(tmp_path, benchmark="banana"))
        assert model.dimension == 2

    def test_blr_file_preset(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("0.1,0.5,1\n0.2,-0.3,0\n0.7,0.1,1\n")
        config = _small_config(tmp_path, benchmark="blr-file",
                               dataset_path=str(path))
        assert resolve_benchmark(config).dimension == 3

    def test_unknown_benchmark(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_benchmark(_small_config(tmp_path, benchmark="funnel-9"))


class TestPersistence:
    def test_chain_text_round_trip(self, tmp_path):
        samples = np.random.default_rng(0).standard_normal((40, 3))
        path = _write_chain(tmp_path / "chain_000", samples, binary=False)
        assert np.array_equal(_read_chain(path), samples)

    def test_chain_binary_round_trip(self, tmp_path):
        samples = np.random.default_rng(1).standard_normal((40, 3))
        path = _write_chain(tmp_path / "chain_000", samples, binary=True)
        assert np.array_equal(_read_chain(path), samples)

    def test_records_round_trip(self, tmp_path):
        rec = ChainRecords.empty(5)
        rec.accepted[:] = [True, False, True, True, False]
        rec.delta_h[:] = [0.1, 2.0, -0.3, 0.0, np.inf]
        rec.n_steps[:] = [1, 5, 7, 2, 5]
        rec.dt[:] = 0.123456789
        rec.phi[:] = 0.25
        rec.grad_evals[:] = rec.n_steps * 3
        rec.divergent[:] = [False, False, False, False, True]
        path = _write_records(tmp_path / "records_000.csv", rec)
        back = _read_records(path)
        assert np.array_equal(back.accepted, rec.accepted)
        assert np.array_equal(back.delta_h, rec.delta_h)
        assert np.array_equal(back.grad_evals, rec.grad_evals)
        assert np.array_equal(back.divergent, rec.divergent)


class TestCommands:
    def test_tune_sample_diagnose_cycle(self, tmp_path):
        config = _small_config(tmp_path)
        report = cmd_tune(config)
        assert (Path(config.out_dir) / "tuning_report.json").exists()
        artifacts = cmd_sample(config, report=report)
        manifest = json.loads(artifacts.manifest_path.read_text())
        assert manifest["config_hash"] == config.hash()
        assert len(manifest["chain_files"]) == 2
        diag = cmd_diagnose(config.out_dir, window=100)
        assert diag.n_chains == 2
        assert (Path(config.out_dir) / "diagnostics.json").exists()

    def test_rerun_bit_identical(self, tmp_path):
        config_a = _small_config(tmp_path, out_dir=str(tmp_path / "a"))
        config_b = RunConfig(**{**config_a.to_dict(), "out_dir": str(tmp_path / "b")})
        cmd_sample(config_a)
        cmd_sample(config_b)
        for name in ("chains/chain_000.csv", "chains/chain_001.csv"):
            assert (Path(config_a.out_dir) / name).read_bytes() == \
                   (Path(config_b.out_dir) / name).read_bytes()

    def test_worker_count_does_not_change_chains(self, tmp_path):
        config_a = _small_config(tmp_path, out_dir=str(tmp_path / "w1"),
                                 n_chains=4)
        config_b = RunConfig(**{**config_a.to_dict(), "out_dir": str(tmp_path / "w4")})
        cmd_sample(config_a, workers=1)
        cmd_sample(config_b, workers=4)
        for i in range(4):
            name = f"chains/chain_{i:03d}.csv"
            assert (Path(config_a.out_dir) / name).read_bytes() == \
                   (Path(config_b.out_dir) / name).read_bytes()

    def test_load_chain_set(self, tmp_path):
        config = _small_config(tmp_path)
        cmd_sample(config)
        chain_set = load_chain_set(config.out_dir)
        assert chain_set.samples.shape == (2, 400, 5)
        assert chain_set.stages == 3

    def test_compare_self_is_unity(self, tmp_path):
        config = _small_config(tmp_path, n_prod=600)
        cmd_sample(config)
        cmd_diagnose(config.out_dir, window=100)
        table = cmd_compare(config.out_dir, config.out_dir)
        for key, value in table.items():
            if value is not None:
                assert value == pytest.approx(1.0, abs=1e-12)

    def test_compare_inverts_on_swap(self, tmp_path):
        cfg_a = _small_config(tmp_path, out_dir=str(tmp_path / "ca"), n_prod=600)
        cfg_b = RunConfig(**{**cfg_a.to_dict(), "seed": 4,
                             "out_dir": str(tmp_path / "cb")})
        cmd_sample(cfg_a)
        cmd_sample(cfg_b)
        cmd_diagnose(cfg_a.out_dir, window=100)
        cmd_diagnose(cfg_b.out_dir, window=100)
        ab = cmd_compare(cfg_a.out_dir, cfg_b.out_dir)
        ba = cmd_compare(cfg_b.out_dir, cfg_a.out_dir)
        for flavour in ("min", "mean", "multi"):
            key = f"ref_{flavour}_ess"
            if ab[key] is not None and ba[key] is not None:
                assert ab[key] * ba[key] == pytest.approx(1.0, rel=1e-9)

    def test_fixed_integrator_override_run(self, tmp_path):
        # pure-override run: no tuning, named integrator, fixed interval
        config = _small_config(tmp_path, mode="hmc", integrator="vv",
                               dt_interval=(0.05, 0.08), l_fixed=3,
                               out_dir=str(tmp_path / "ovr"))
        artifacts = cmd_sample(config)
        manifest = json.loads(artifacts.manifest_path.read_text())
        assert manifest["stages"] == 1
        assert manifest["tuning_report"] is None

    def test_sweep_single_cell_matches_sample(self, tmp_path):
        config = _small_config(tmp_path, n_prod=600,
                               out_dir=str(tmp_path / "sweep"))
        rows = cmd_sweep_phi_l(config, ["tuned"], ["fixed:1"])
        assert len(rows) == 1
        cell_dir = Path(config.out_dir) / "cell_phi0_l0"
        assert (cell_dir / "diagnostics.json").exists()
        assert rows[0]["grad"] is None or rows[0]["grad"] > 0

    def test_sweep_unit_phi_column_runs_hmc(self, tmp_path):
        config = _small_config(tmp_path, n_prod=500,
                               out_dir=str(tmp_path / "sweep-hmc"))
        cmd_sweep_phi_l(config, ["fixed:1"], ["fixed:2"])
        cell = Path(config.out_dir) / "cell_phi0_l0"
        manifest = json.loads((cell / "manifest.json").read_text())
        assert manifest["config"]["mode"] == "hmc"

    def test_analyze_integrators_outputs(self, tmp_path):
        out = tmp_path / "analysis"
        summary = cmd_analyze_integrators(out, schemes=("vv", "bcss3"), n_grid=40)
        assert (out / "energy_error_vs_h.csv").exists()
        assert (out / "rho3_vs_h.csv").exists()
        assert (out / "saia3_map.txt").exists()
        assert summary["stability"]["vv"] == pytest.approx(2.0, abs=1e-5)
        assert summary["h_lower_root"] == pytest.approx(2.0772, abs=1e-3)


class TestParseRule:
    def test_forms(self):
        assert parse_rule("fixed:3") == ("fixed", 3.0)
        assert parse_rule("uniform:0.1,0.4") == ("uniform", (0.1, 0.4))
        assert parse_rule("range:1,66") == ("range", (1.0, 66.0))
        assert parse_rule("choice:2,5,7") == ("choice", (2.0, 5.0, 7.0))

    def test_rejects_malformed(self):
        for bad in ("fixed", "uniform:1", "nope:1,2", "choice:"):
            with pytest.raises(ConfigError):
                parse_rule(bad)


class TestCli:
    def test_unknown_benchmark_exits_config_error(self, tmp_path, capsys):
        code = main(["tune", "--benchmark", "nope-3",
                     "--out-dir", str(tmp_path)])
        assert code == 2

    def test_missing_run_dir_exits_io_error(self, tmp_path):
        code = main(["diagnose", str(tmp_path / "missing")])
        assert code == 4

    def test_tune_and_sample_flow(self, tmp_path, capsys):
        out = tmp_path / "cli-run"
        code = main(["tune", "--benchmark", "gauss-4", "--n-burnin", "250",
                     "--seed", "1", "--out-dir", str(out)])
        assert code == 0
        assert "dt_lower" in capsys.readouterr().out
        code = main(["sample", "--benchmark", "gauss-4", "--n-burnin", "250",
                     "--n-prod", "200", "--n-chains", "2", "--seed", "1",
                     "--out-dir", str(out),
                     "--report", str(out / "tuning_report.json")])
        assert code == 0
        code = main(["diagnose", str(out), "--window", "50"])
        assert code == 0

    def test_config_file_overrides_flags(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"benchmark": "gauss-4", "seed": 9,
                                        "n_burnin": 250,
                                        "out_dir": str(tmp_path / "fromfile")}))
        code = main(["tune", "--benchmark", "gauss-7", "--seed", "1",
                     "--config", str(cfg_file)])
        assert code == 0
        report = json.loads((tmp_path / "fromfile" / "tuning_report.json").read_text())
        assert report["dimension"] == 4
        assert report["seed"] == 9
