import json

import pytest

from fedsim import cli, experiment
from fedsim.errors import ConfigError

FAST_ARGS = ["--clients", "3", "--no-noise", "--iterations", "2",
             "--local-iters", "4", "--synth", "300", "0.1",
             "--synth-features", "3", "--sample-rows", "60",
             "--timing", "fixed", "--seed", "5"]


class TestRunCommand:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run1"
        code = cli.main(["run", *FAST_ARGS, "--out", str(out), "--trace"])
        assert code == 0
        assert (out / "manifest.json").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "timing.csv").exists()
        assert (out / "trace.csv").exists()
        metrics = (out / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "iteration,loss,mcc,tp,fp,tn,fn"
        assert len(metrics) == 3  # header + one row per iteration

    def test_same_seed_byte_identical_metrics(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", *FAST_ARGS, "--out", str(out_a)]) == 0
        assert cli.main(["run", *FAST_ARGS, "--out", str(out_b)]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        manifest_a = json.loads((out_a / "manifest.json").read_text())
        manifest_b = json.loads((out_b / "manifest.json").read_text())
        assert manifest_a["outputs"]["trace_hash"] == manifest_b["outputs"]["trace_hash"]

    def test_manifest_rerun_reproduces_metrics(self, tmp_path):
        out_a = tmp_path / "a"
        assert cli.main(["run", *FAST_ARGS, "--out", str(out_a)]) == 0
        manifest = json.loads((out_a / "manifest.json").read_text())
        manifest["config"]["out_dir"] = str(tmp_path / "b")
        config_path = tmp_path / "replay.json"
        config_path.write_text(json.dumps(manifest))
        assert cli.main(["run", "--config", str(config_path)]) == 0
        assert ((tmp_path / "b" / "metrics.csv").read_bytes()
                == (out_a / "metrics.csv").read_bytes())

    def test_invalid_epsilon_exits_one(self, capsys):
        assert cli.main(["run", "--clients", "2", "--epsilon", "-1"]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_protocol_abort_exits_two(self, tmp_path, capsys):
        config = tmp_path / "cfg.txt"
        config.write_text("event_ceiling = 5\n")
        assert cli.main(["run", *FAST_ARGS, "--config", str(config)]) == 2
        assert "protocol abort" in capsys.readouterr().err

    def test_missing_data_file_exits_one(self, tmp_path):
        assert cli.main(["run", "--data", str(tmp_path / "none.csv"),
                         "--clients", "2"]) == 1


class TestConfigFile:
    def test_key_value_parsing(self, tmp_path):
        config = tmp_path / "cfg.txt"
        config.write_text(
            "# comment line\n"
            "clients = 4\n"
            "epsilon = 0.5\n"
            "neighborhood = logn\n"
            "allow_small = true\n")
        mapping = cli.load_config_file(str(config))
        assert mapping == {"clients": 4, "epsilon": 0.5,
                           "neighborhood": "logn", "allow_small": True}

    def test_flags_override_config(self, tmp_path):
        config = tmp_path / "cfg.txt"
        config.write_text("clients = 4\nseed = 1\n")
        args = cli.build_parser().parse_args(
            ["run", "--config", str(config), "--clients", "7"])
        cfg = cli.config_from_args(args)
        assert cfg.clients == 7 and cfg.seed == 1

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            experiment.config_from_mapping({"not_a_field": 1})

    def test_malformed_line_rejected(self, tmp_path):
        config = tmp_path / "bad.txt"
        config.write_text("clients 4\n")
        with pytest.raises(ConfigError):
            cli.load_config_file(str(config))


class TestSweepCommand:
    def test_small_grid_writes_combined_csv(self, tmp_path):
        out = tmp_path / "sweep"
        code = cli.main(["sweep", *FAST_ARGS, "--out", str(out),
                         "--clients-grid", "2,3",
                         "--epsilon-grid", "none,0.5"])
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("clients,epsilon,neighborhood,timing_mode")
        assert len(lines) == 5  # header + 2x2 grid
        assert all(",ok," in line for line in lines[1:])

    def test_empty_grid_is_a_noop_success(self, tmp_path):
        out = tmp_path / "sweep"
        code = cli.main(["sweep", *FAST_ARGS, "--out", str(out),
                         "--clients-grid", ""])
        assert code == 0
        assert (out / "sweep.csv").read_text().splitlines()[1:] == []

    def test_partial_failure_recorded_and_sweep_continues(self, tmp_path):
        out = tmp_path / "sweep"
        # epsilon=-1 fails validation inside its cell; the noise-off cell passes.
        code = cli.main(["sweep", *FAST_ARGS, "--out", str(out),
                         "--clients-grid", "2",
                         "--epsilon-grid", "none,-1"])
        assert code == 0
        import csv as csvmod

        with open(out / "sweep.csv") as fh:
            rows = list(csvmod.DictReader(fh))
        statuses = [row["status"] for row in rows]
        assert any(s == "ok" for s in statuses)
        assert any(s.startswith("error") for s in statuses)

    def test_epsilon_grid_mcc_degrades_as_epsilon_shrinks(self, tmp_path):
        # Scaled-down version of the accuracy sweep: tighter privacy loses MCC.
        base = experiment.config_from_mapping({
            "clients": 10, "iterations": 3, "local_iterations": 100,
            "synth_rows": 20_000, "sample_rows": 1000,
            "timing_mode": "fixed", "seed": 77})
        rows = experiment.run_sweep(base, [10], epsilon_grid=[5e-3, 5e-7])
        assert [r["status"] for r in rows] == ["ok", "ok"]
        loose, tight = (float(r["final_mcc"]) for r in rows)
        assert tight < loose - 0.2

    def test_default_config_smoke_run(self, tmp_path):
        # Package defaults straight through the CLI: 30 iterations of metrics.
        out = tmp_path / "defaults"
        assert cli.main(["run", "--out", str(out)]) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 31
        assert all(line.split(",")[2] != "" for line in lines[1:])

    def test_parallel_jobs_match_serial(self, tmp_path):
        base = experiment.config_from_mapping({
            "clients": 2, "epsilon": None, "iterations": 1, "local_iterations": 2,
            "synth_rows": 200, "synth_features": 3, "sample_rows": 40,
            "timing_mode": "fixed", "seed": 5})
        serial = experiment.run_sweep(base, [2, 3], jobs=1)
        parallel = experiment.run_sweep(base, [2, 3], jobs=2)
        assert serial == parallel
