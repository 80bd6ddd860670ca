"""Configuration handling, reports, CLI subcommands."""

import json
from pathlib import Path

import numpy as np
import pytest

from snnaccel.cli import main, parameter_memory, build_report, run_training
from snnaccel.config import (RunConfig, ConfigError, parse_config_text,
                             load_config, CONFIG_VERSION)

DATASET = Path(__file__).resolve().parent.parent / "data" / "mnist"

needs_dataset = pytest.mark.skipif(
    not DATASET.exists(), reason="MNIST files not present under data/mnist")


def tiny_cfg(**kw):
    base = dict(dataset_dir=str(DATASET), n_train=100, n_test=50,
                timesteps_train=10, timesteps_eval=10, seeds=1)
    base.update(kw)
    return RunConfig(**base)


class TestConfig:
    def test_round_trip_text(self):
        cfg = RunConfig(seed=9, v_th=0.375, metaplasticity=False)
        parsed = parse_config_text(cfg.to_text())
        assert parsed == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("bogus_knob = 3\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text("n_hidden = many\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_config_text("just words\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config_text("# comment\n\nseed = 4  # trailing\n")
        assert cfg.seed == 4

    def test_version_enforced(self):
        cfg = parse_config_text(f"config_version = {CONFIG_VERSION + 1}\n")
        assert any("config_version" in p for p in cfg.validate())

    def test_validation_collects_all_problems(self):
        cfg = RunConfig(precision="fp64", layout="diagonal", rate_max=2.0)
        problems = cfg.validate()
        assert len(problems) >= 3

    def test_hash_stable_and_sensitive(self):
        a, b = RunConfig(), RunConfig()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != a.replace(seed=2).config_hash()

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 77\nprecision = float\n")
        cfg = load_config(path)
        assert cfg.seed == 77 and cfg.precision == "float"

    def test_defaults_are_valid(self):
        assert RunConfig().validate() == []


class TestParameterMemory:
    def test_synapse_count_for_reference_network(self):
        mem = parameter_memory(RunConfig())
        assert mem["synapse_count"] == 256 * 200 + 200 * 2 == 51600

    def test_fxp16_synapse_array_bytes(self):
        mem = parameter_memory(RunConfig(), "fxp16")
        assert mem["synapse_array_bytes"] == 51600 * 4 == 206400

    def test_float32_is_exactly_double(self):
        fxp = parameter_memory(RunConfig(), "fxp16")
        flt = parameter_memory(RunConfig(), "float")
        assert flt["synapse_array_bytes"] == 2 * fxp["synapse_array_bytes"]

    def test_no_consolidation_halves_synapse_array(self):
        on = parameter_memory(RunConfig(), "fxp16")
        off = parameter_memory(RunConfig(metaplasticity=False), "fxp16")
        assert on["synapse_array_bytes"] == 2 * off["synapse_array_bytes"]


@needs_dataset
class TestTrainEval:
    def test_tiny_training_run_produces_report(self, tmp_path):
        rc = main(["train", "--out", str(tmp_path), "--seed", "1",
                   "--seeds", "1", "--dataset", str(DATASET),
                   "--config", str(self._cfg_file(tmp_path))])
        assert rc == 0
        reports = list(tmp_path.glob("report_*.json"))
        weights = list(tmp_path.glob("weights_*.npz"))
        assert len(reports) == 1 and len(weights) == 1
        payload = json.loads(reports[0].read_text())
        assert len(payload["results"][0]["task_accuracies"]) == 5
        assert "config_hash" in payload

    def test_eval_on_saved_weights(self, tmp_path):
        cfg_file = self._cfg_file(tmp_path)
        assert main(["train", "--out", str(tmp_path), "--config",
                     str(cfg_file), "--dataset", str(DATASET)]) == 0
        weights = sorted(tmp_path.glob("weights_*.npz"))[0]
        rc = main(["eval", "--config", str(cfg_file), "--dataset",
                   str(DATASET), "--weights", str(weights),
                   "--out", str(tmp_path)])
        assert rc == 0

    def test_reports_byte_identical_across_runs(self, tmp_path):
        cfg = tiny_cfg()
        seeds, out1 = run_training(cfg)
        _, out2 = run_training(cfg)
        rep1 = build_report(cfg, seeds, [r for r, _ in out1]).to_json()
        rep2 = build_report(cfg, seeds, [r for r, _ in out2]).to_json()
        assert rep1 == rep2
        for (_r1, w1), (_r2, w2) in zip(out1, out2):
            for key in w1:
                assert np.array_equal(w1[key], w2[key])

    def test_report_embeds_matching_config_hash(self):
        cfg = tiny_cfg()
        seeds, outcomes = run_training(cfg)
        report = build_report(cfg, seeds, [r for r, _ in outcomes])
        payload = json.loads(report.to_json())
        assert payload["config_hash"] == cfg.config_hash()
        embedded = parse_config_text("\n".join(payload["config"]))
        assert embedded.config_hash() == cfg.config_hash()

    @staticmethod
    def _cfg_file(tmp_path) -> Path:
        path = tmp_path / "tiny.cfg"
        path.write_text("n_train = 100\nn_test = 50\ntimesteps_train = 10\n"
                        "timesteps_eval = 10\nseeds = 1\n")
        return path


class TestBenchCommands:
    def test_bench_dataflow_writes_csv(self, tmp_path):
        rc = main(["bench-dataflow", "--out", str(tmp_path)])
        assert rc == 0
        csv_path = tmp_path / "bench_dataflow.csv"
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("style,")
        assert len(lines) > 20

    @needs_dataset
    def test_bench_memory_reports_halved_reads(self, tmp_path):
        cfg_file = tmp_path / "bench.cfg"
        cfg_file.write_text("n_train = 50\nn_test = 50\ntimesteps_train = 10\n"
                            "timesteps_eval = 10\nseeds = 1\n")
        rc = main(["bench-memory", "--out", str(tmp_path), "--config",
                   str(cfg_file), "--dataset", str(DATASET)])
        assert rc == 0
        text = (tmp_path / "bench_memory.csv").read_text()
        ratio_line = [l for l in text.splitlines() if "read ratio" in l][0]
        assert float(ratio_line.rsplit(":", 1)[1]) == pytest.approx(2.0)

    def test_report_memory_exit_code(self, capsys):
        assert main(["report-memory"]) == 0
        out = capsys.readouterr().out
        assert "51600" in out
        assert "206400" in out
        assert "2.00x" in out


class TestCliErrors:
    def test_invalid_config_is_exit_code_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("precision = fp64\n")
        assert main(["report-memory", "--config", str(bad)]) == 2

    def test_missing_config_file_is_exit_code_3(self):
        assert main(["report-memory", "--config", "/nonexistent.cfg"]) == 3

    def test_unknown_key_in_file_is_exit_code_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("who_knows = 1\n")
        assert main(["report-memory", "--config", str(bad)]) == 2
