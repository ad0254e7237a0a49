import hashlib
import json
import os

import pytest

from usguide import cli, phantom
from usguide import dataset as ds
from usguide import model as qm


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def phantom_file(tmp_path_factory, phantom_small):
    path = tmp_path_factory.mktemp("cfg") / "phantom.cfg"
    phantom.save_config(phantom_small, path)
    return str(path)


@pytest.fixture(scope="module")
def data_file(tmp_path_factory, phantom_file):
    path = tmp_path_factory.mktemp("data") / "demo.usgd"
    rc = cli.main(["gen-data", "--out", str(path), "--samples", "300",
                   "--steps", "25", "--seed", "5", "--phantom", phantom_file])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def model_file(tmp_path_factory, data_file):
    path = tmp_path_factory.mktemp("model") / "model.usgm"
    rc = cli.main(["train", "--data", str(data_file), "--out", str(path),
                   "--epochs", "1", "--seed", "0",
                   "--report", str(path) + ".csv"])
    assert rc == 0
    return path


class TestGenData:
    def test_writes_dataset_and_manifest(self, data_file):
        data = ds.load(data_file)
        assert len(data) == 300
        assert abs(data.labels.mean() - 0.378) <= 0.01
        man = json.loads((data_file.parent / "demo.usgd.manifest.json").read_text())
        assert man["command"] == "gen-data"
        assert man["seeds"] == {"seed": 5}
        assert man["artifact_hashes"][str(data_file)] == sha256(data_file)
        assert man["stats"]["n"] == 300

    def test_deterministic_across_runs(self, data_file, tmp_path, phantom_file):
        again = tmp_path / "again.usgd"
        rc = cli.main(["gen-data", "--out", str(again), "--samples", "300",
                       "--steps", "25", "--seed", "5", "--phantom", phantom_file])
        assert rc == 0
        assert sha256(again) == sha256(data_file)

    def test_zero_samples_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["gen-data", "--out", str(tmp_path / "x.usgd"),
                      "--samples", "0"])
        assert exc.value.code == 2

    def test_unreachable_balance_exit_code(self, tmp_path, phantom_file,
                                           monkeypatch):
        from usguide.errors import BalancingError

        def refuse(*args, **kwargs):
            raise BalancingError("budget exhausted")

        monkeypatch.setattr(cli.ds, "build_dataset", refuse)
        rc = cli.main(["gen-data", "--out", str(tmp_path / "x.usgd"),
                       "--samples", "75", "--steps", "25", "--pos-frac", "0.99",
                       "--phantom", phantom_file])
        assert rc == cli.EXIT_BALANCING


class TestTrain:
    def test_artifacts(self, model_file):
        model = qm.load_model(model_file)
        assert model.trained_epochs == 1
        assert model.config.input_norm is not None
        csv = (model_file.parent / (model_file.name + ".csv")).read_text()
        assert csv.splitlines()[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
        assert len(csv.strip().splitlines()) == 2
        man = json.loads(
            (model_file.parent / (model_file.name + ".manifest.json")).read_text())
        assert man["artifact_hashes"][str(model_file)] == sha256(model_file)
        assert len(man["input_hashes"]) == 1

    def test_missing_data_file_exit_code(self, tmp_path):
        bogus = tmp_path / "nope.usgd"
        bogus.write_bytes(b"JUNKJUNKJUNK" * 10)
        rc = cli.main(["train", "--data", str(bogus),
                       "--out", str(tmp_path / "m.usgm"), "--epochs", "1"])
        assert rc == cli.EXIT_FILE


class TestAblate:
    def test_rows_and_summary(self, data_file, tmp_path):
        out = tmp_path / "ablation.json"
        rc = cli.main(["ablate", "--data", str(data_file), "--out", str(out),
                       "--repeats", "1", "--epochs", "1", "--seed", "0"])
        assert rc == 0
        result = json.loads(out.read_text())
        assert len(result["rows"]) == len(qm.VARIANTS)
        assert set(result["summary"]) >= set(qm.VARIANTS) | {
            "net4_minus_net3", "majority_baseline"}


class TestGuide:
    def test_rollout_outputs(self, data_file, model_file, tmp_path):
        out_dir = tmp_path / "rollouts"
        rc = cli.main(["guide", "--model", str(model_file),
                       "--data", str(data_file), "--episodes", "2",
                       "--steps", "3", "--n", "100", "--seed", "1",
                       "--out-dir", str(out_dir)])
        assert rc == 0
        csvs = sorted(p for p in os.listdir(out_dir) if p.endswith(".csv"))
        assert csvs == ["rollout_000.csv", "rollout_001.csv"]
        man = json.loads((out_dir / "guide.manifest.json").read_text())
        assert "success_rate" in man
