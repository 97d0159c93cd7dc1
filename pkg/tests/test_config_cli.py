import json

import pytest

from pcdistill.cli import main
from pcdistill.config import from_mapping, load_config
from pcdistill.errors import ConfigError


def minimal(**overrides):
    values = {"config_version": 1}
    values.update(overrides)
    return values


def smoke_config(tmp_path, **overrides):
    """A config small enough for end-to-end CLI runs in a test."""
    values = minimal(**{
        "output_dir": str(tmp_path / "out"),
        "seeds": [0],
        "dataset.num_classes": 4,
        "dataset.dim": 6,
        "dataset.samples_per_class": 15,
        "dataset.noise_std": 0.5,
        "teacher.hidden": [16],
        "student.hidden": [8],
        "teacher_train.epochs": 3,
        "teacher_train.warmup_epochs": 1,
        "teacher_train.lr_decay_epochs": [2],
        "teacher_train.batch_size": 16,
        "student_train.epochs": 3,
        "student_train.warmup_epochs": 1,
        "student_train.lr_decay_epochs": [2],
        "student_train.batch_size": 16,
        "pcd.stages": 3,
    })
    values.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values))
    return path


class TestConfigParsing:
    def test_defaults_fill_in(self):
        cfg = from_mapping(minimal())
        assert cfg.num_classes == 20
        assert cfg.teacher_hidden == (256, 256)
        assert cfg.student_hidden == (32,)
        assert cfg.pcd.tau > 0
        assert cfg.teacher_train.epochs == 60
        assert cfg.grid_kind == "main"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key.*pcd.taus"):
            from_mapping(minimal(**{"pcd.taus": 4.0}))

    def test_missing_version_rejected(self):
        with pytest.raises(ConfigError, match="config_version"):
            from_mapping({})

    def test_wrong_version_rejected(self):
        with pytest.raises(ConfigError, match="config_version"):
            from_mapping({"config_version": 99})

    def test_bad_type_names_field(self):
        with pytest.raises(ConfigError, match="dataset.num_classes"):
            from_mapping(minimal(**{"dataset.num_classes": "twenty"}))

    def test_bool_not_accepted_as_int(self):
        with pytest.raises(ConfigError, match="pcd.stages"):
            from_mapping(minimal(**{"pcd.stages": True}))

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError, match="seeds"):
            from_mapping(minimal(seeds=[]))

    def test_invalid_train_field_reported_with_prefix(self):
        with pytest.raises(ConfigError, match="student_train"):
            from_mapping(minimal(**{"student_train.momentum": 1.5}))

    def test_stages_beyond_classes_rejected(self):
        with pytest.raises(ConfigError, match="stages"):
            from_mapping(minimal(**{"pcd.stages": 30}))

    def test_csv_kind_requires_path(self):
        with pytest.raises(ConfigError, match="csv_path"):
            from_mapping(minimal(**{"dataset.kind": "csv"}))

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_load_config_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)


class TestCli:
    def test_config_error_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"config_version": 1, "bogus_key": 1}))
        code = main(["run", "--config", str(path)])
        assert code == 1
        assert "bogus_key" in capsys.readouterr().err

    def test_gen_data_writes_csv(self, tmp_path, capsys):
        cfg_path = smoke_config(tmp_path)
        assert main(["gen-data", "--config", str(cfg_path)]) == 0
        out = tmp_path / "out" / "dataset.csv"
        assert out.exists()
        assert len(out.read_text().splitlines()) == 60

    def test_full_run_produces_artifacts_and_is_idempotent(self, tmp_path, capsys):
        cfg_path = smoke_config(tmp_path)
        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        out = tmp_path / "out"
        assert (out / "config.json").exists()
        assert (out / "seeds" / "s0" / "teacher" / "teacher.npz").exists()
        assert (out / "seeds" / "s0" / "rows" / "pcd" / "student.npz").exists()
        assert (out / "results.json").exists()
        assert (out / "results.txt").exists()
        assert (out / "results.csv").exists()
        first = json.loads((out / "results.json").read_text())
        capsys.readouterr()

        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        stdout = capsys.readouterr().out
        assert "trained 0 cells" in stdout
        second = json.loads((out / "results.json").read_text())
        assert first == second

    def test_rerun_with_changed_config_rejected(self, tmp_path, capsys):
        cfg_path = smoke_config(tmp_path)
        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        changed = smoke_config(tmp_path, **{"pcd.alpha": 0.5})
        assert main(["run", "--config", str(changed), "--no-figures"]) == 1
        assert "different config" in capsys.readouterr().err

    def test_distill_and_report_subcommands(self, tmp_path, capsys):
        cfg_path = smoke_config(tmp_path)
        assert main(["train-teacher", "--config", str(cfg_path)]) == 0
        assert main(["distill", "--config", str(cfg_path), "--method", "kd"]) == 0
        assert main(["report", "--config", str(cfg_path), "--no-figures"]) == 0
        out = tmp_path / "out"
        table = json.loads((out / "results.json").read_text())
        labels = [r["label"] for r in table["rows"]]
        assert "teacher" in labels and "kd" in labels

    def test_unknown_method_rejected(self, tmp_path, capsys):
        cfg_path = smoke_config(tmp_path)
        assert main(["distill", "--config", str(cfg_path),
                     "--method", "nope"]) == 1

    def test_results_table_mean_within_seed_range(self, tmp_path):
        cfg_path = smoke_config(tmp_path, seeds=[0, 1])
        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        table = json.loads((tmp_path / "out" / "results.json").read_text())
        for row in table["rows"]:
            values = list(row["per_seed"].values())
            assert min(values) <= row["mean"] <= max(values)

    def test_ablation_grid_has_nine_rows(self, tmp_path):
        cfg_path = smoke_config(tmp_path, **{"grid.kind": "ablation"})
        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        table = json.loads((tmp_path / "out" / "results.json").read_text())
        non_teacher = [r for r in table["rows"] if r["label"] != "teacher"]
        assert len(non_teacher) == 9
        flag_combos = {(r["use_ldr"], r["use_f2cl"], r["use_c2fl"])
                       for r in non_teacher}
        assert len(flag_combos) == 8
        assert sum(1 for r in non_teacher if r["use_wdm"] is False
                   and r["use_f2cl"] and r["use_c2fl"] and r["use_ldr"]) == 1


class TestCsvPipeline:
    def test_run_from_csv_dataset(self, tmp_path, capsys):
        # generate a synthetic CSV first, then drive an experiment from it
        gen_cfg = smoke_config(tmp_path)
        assert main(["gen-data", "--config", str(gen_cfg)]) == 0
        csv_path = tmp_path / "out" / "dataset.csv"

        values = json.loads(gen_cfg.read_text())
        values["dataset.kind"] = "csv"
        values["dataset.csv_path"] = str(csv_path)
        values["output_dir"] = str(tmp_path / "from_csv")
        cfg_path = tmp_path / "csv_config.json"
        cfg_path.write_text(json.dumps(values))

        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 0
        table = json.loads((tmp_path / "from_csv" / "results.json").read_text())
        assert {r["label"] for r in table["rows"]} == {
            "teacher", "student_alone", "kd", "pcd"}

    def test_missing_csv_reports_config_error(self, tmp_path, capsys):
        values = json.loads(smoke_config(tmp_path).read_text())
        values["dataset.kind"] = "csv"
        values["dataset.csv_path"] = str(tmp_path / "missing.csv")
        cfg_path = tmp_path / "csv_config.json"
        cfg_path.write_text(json.dumps(values))
        assert main(["run", "--config", str(cfg_path), "--no-figures"]) == 1
