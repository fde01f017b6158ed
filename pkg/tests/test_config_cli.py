"""YAML config parsing and the command-line entry point end to end."""

import csv
import json

import pytest

from teamran.cli import main
from teamran.config import ConfigError, parse_config


TINY_YAML = """\
params:
  n_bs: 2
  n_users: 4
  n_rbg: 3
traffic_mean: 3.0e6
n_slots: 40
mode: idl
master_seed: 11
train:
  warmup: 16
  batch_size: 8
  epsilon_decay_slots: 20
"""


@pytest.fixture
def tiny_yaml(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML)
    return path


class TestParseConfig:
    def test_no_file_gives_full_scale_defaults(self):
        s = parse_config()
        assert s.params.n_bs == 4
        assert s.params.n_users == 30
        assert s.params.n_rbg == 12
        assert s.params.bandwidth_total == 20e6
        assert s.params.p_max_dbm == 38.0
        assert s.params.p_min_dbm == 1.0
        assert s.params.noise_dbm == -114.0
        assert s.params.slot_duration == 0.1
        assert s.n_slots == 20000
        assert s.mode == "tdl"
        assert s.mobility.speed == 20.0
        assert s.mobility.turn_probability == 0.3

    def test_empty_file_equals_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert parse_config(path) == parse_config()

    def test_file_values(self, tiny_yaml):
        s = parse_config(tiny_yaml)
        assert s.params.n_bs == 2
        assert s.traffic_mean == 3e6
        assert s.mode == "idl"
        assert s.master_seed == 11
        assert s.train_cfg.warmup == 16

    def test_overrides_beat_file(self, tiny_yaml):
        s = parse_config(tiny_yaml, ["mode=tdl", "params.n_users=6",
                                     "train.batch_size=4"])
        assert s.mode == "tdl"
        assert s.params.n_users == 6
        assert s.train_cfg.batch_size == 4

    def test_overrides_without_file(self):
        s = parse_config(None, ["n_slots=7", "mobility.speed=0"])
        assert s.n_slots == 7
        assert s.mobility.speed == 0.0

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("cells: 4\n")
        with pytest.raises(ConfigError, match="cells"):
            parse_config(path)

    def test_unknown_section_key_names_path(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("params:\n  n_cells: 4\n")
        with pytest.raises(ConfigError, match="params.n_cells"):
            parse_config(path)

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, ["params.p_min_dbm=40"])  # above p_max
        with pytest.raises(ConfigError):
            parse_config(None, ["n_slots=0"])
        with pytest.raises(ConfigError):
            parse_config(None, ["mode=friendly"])

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            parse_config(None, ["n_slots"])
        with pytest.raises(ConfigError):
            parse_config(None, ["a.b.c=1"])

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            parse_config(path)


TINY_ARGS = ["--set", "params.n_bs=2", "--set", "params.n_users=4",
             "--set", "params.n_rbg=3", "--set", "train.warmup=16",
             "--set", "train.batch_size=8", "--set", "traffic_mean=3e6"]


class TestCliRun:
    def test_run_writes_csv_and_manifest(self, tmp_path, capsys):
        rc = main(["run", "--slots", "30", "--seed", "3",
                   "--out", str(tmp_path), *TINY_ARGS])
        assert rc == 0
        with open(tmp_path / "run.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["slot", "throughput_bps", "reward",
                           "cumulative_pdr"]
        assert len(rows) == 31
        doc = json.loads((tmp_path / "run_manifest.json").read_text())
        assert doc["schema"] == "run-1"
        assert doc["scenario"]["master_seed"] == 3
        assert doc["scenario"]["n_slots"] == 30
        assert "env_trace_hash" in doc
        out = capsys.readouterr().out
        assert "tail throughput" in out

    def test_run_is_reproducible(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            assert main(["run", "--slots", "25", "--seed", "4",
                         "--out", str(d), *TINY_ARGS]) == 0
        assert (d1 / "run.csv").read_bytes() == (d2 / "run.csv").read_bytes()

    def test_run_mode_flag(self, tmp_path):
        rc = main(["run", "--slots", "10", "--mode", "idl",
                   "--out", str(tmp_path), *TINY_ARGS])
        assert rc == 0
        doc = json.loads((tmp_path / "run_manifest.json").read_text())
        assert doc["scenario"]["mode"] == "idl"

    def test_config_file_plus_flags(self, tmp_path, tiny_yaml):
        rc = main(["run", "--config", str(tiny_yaml), "--slots", "12",
                   "--out", str(tmp_path)])
        assert rc == 0
        doc = json.loads((tmp_path / "run_manifest.json").read_text())
        assert doc["scenario"]["params"]["n_bs"] == 2
        assert doc["scenario"]["n_slots"] == 12

    def test_bad_config_exits_2(self, tmp_path):
        rc = main(["run", "--out", str(tmp_path),
                   "--set", "params.n_cells=9"])
        assert rc == 2

    def test_out_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TEAMRAN_OUT", str(tmp_path / "envout"))
        rc = main(["run", "--slots", "5", *TINY_ARGS])
        assert rc == 0
        assert (tmp_path / "envout" / "run.csv").exists()


class TestCliSweep:
    def test_sweep_outputs(self, tmp_path, capsys):
        rc = main(["sweep", "--axis", "traffic", "--values", "2e6,3e6",
                   "--seeds", "5", "--slots", "20",
                   "--out", str(tmp_path), *TINY_ARGS])
        assert rc == 0
        with open(tmp_path / "sweep.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["axis", "value", "mode", "seed",
                           "tail_throughput_bps", "pdr"]
        assert len(rows) == 1 + 2 * 1 * 2  # header + values x seeds x modes
        doc = json.loads((tmp_path / "sweep_manifest.json").read_text())
        assert doc["schema"] == "sweep-1"
        assert doc["axis"] == "traffic"
        assert doc["values"] == [2e6, 3e6]
        out = capsys.readouterr().out
        assert "gain" in out


class TestCliChecks:
    def test_gradcheck_passes(self, capsys):
        rc = main(["gradcheck", "--networks", "5"])
        assert rc == 0
        assert "max relative gradient error" in capsys.readouterr().out

    def test_oracle_passes(self, capsys):
        rc = main(["oracle", "--instances", "100"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "phy suite" in out
        assert "state suite" in out

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 2
