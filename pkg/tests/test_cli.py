# Unless explicitly stated otherwise all files in this repository are licensed
# under the Apache License 2.0.

"""Tests for the command-line entry point"""

import argparse
import json
import os
from unittest import TestCase

import numpy as np
import pytest

from seriesforge import cli
from seriesforge.data import SeriesBatch
from seriesforge.data import load_csv
from seriesforge.data import scaler_apply
from seriesforge.data import scaler_fit
from seriesforge.metrics import ScorerBudget
from seriesforge.metrics import discriminative_score
from seriesforge.numkit import Rng
from seriesforge.training import NonFiniteLossError
from seriesforge.training import SeriesGAN


TINY_TRAIN = {
    "batch_size": 8,
    "hidden_dim": 4,
    "num_layers": 1,
    "phase1_steps": 3,
    "phase2_steps": 3,
    "phase3_steps": 3,
    "phase4_steps": 3,
    "check_interval": 1,
    "quick_steps": 2,
    "quick_batch_size": 8,
    "early_stop_samples": 20,
}

TINY_EVALUATION = {
    "replications": 2,
    "steps": 2,
    "batch_size": 8,
    "perplexity": 5.0,
    "tsne_iterations": 20,
    "embedding_samples": 20,
}


def write_config(tmp_path, name="run.json", **values):
    settings = {
        "seed": 1,
        "output_dir": str(tmp_path / "out"),
        "data": {"sines": {"n_samples": 20, "seq_len": 6, "dims": 2}},
        "train": TINY_TRAIN,
        "evaluation": TINY_EVALUATION,
    }
    settings.update(values)
    path = tmp_path / name
    path.write_text(json.dumps(settings))
    return str(path)


def read(path):
    with open(path, "rb") as f:
        return f.read()


def data_rows(path):
    with open(path) as f:
        return len(f.read().splitlines()) - 1


class TestAblation(TestCase):
    def test_names(self):
        assert cli.ablation("no-early-stopping") == "early-stop"
        assert cli.ablation("early-stop") == "early-stop"
        assert cli.ablation("no_ts_loss") == "ts-loss"
        assert cli.ablation("dual-discriminators") == "dual-disc"
        assert cli.ablation("Supervised") == "supervised"

    def test_unknown(self):
        with pytest.raises(argparse.ArgumentTypeError):
            cli.ablation("no-generator")

    def test_parser_rejects_unknown_ablation(self):
        with pytest.raises(SystemExit) as excinfo:
            cli.build_parser().parse_args(["train", "--ablate", "everything"])
        assert excinfo.value.code == 2


class TestRunConfig(TestCase):
    def test_defaults(self):
        config = cli.RunConfig()
        assert config.sines is not None
        assert config.csv_path is None
        assert config.evaluation.replications == 8

    def test_seed_propagates(self):
        config = cli.RunConfig.from_dict({"seed": 9, "data": {"sines": {"seed": 3}}})
        assert config.sines.seed == 9
        assert config.train.seed == 9

    def test_round_trip(self):
        values = {
            "seed": 2,
            "data": {"csv": {"path": "series.csv", "window": {"length": 24, "stride": 2}}},
            "train": TINY_TRAIN,
            "evaluation": TINY_EVALUATION,
            "generate_count": 50,
        }
        config = cli.RunConfig.from_dict(values)
        assert config.window == (24, 2)
        assert cli.RunConfig.from_dict(config.to_dict()).to_dict() == config.to_dict()

    def test_invalid(self):
        for values in [
            {"data": {"sines": {}, "csv": {"path": "x.csv"}}},
            {"data": {"csv": {}}},
            {"data": {"csv": {"path": "x.csv", "window": {"stride": 2}}}},
            {"data": {"csv": {"path": "x.csv", "window": {"length": 0}}}},
            {"data": {"sines": {"frequency_range": [1.0, 0.0]}}},
            {"generate_count": 0},
            {"train": {"batch_size": 0}},
            {"evaluation": {"perplexity": -1}},
            {"plots": True},
        ]:
            with pytest.raises(ValueError):
                cli.RunConfig.from_dict(values)


def test_sines(tmp_path, capsys):
    config = write_config(tmp_path, data={"sines": {"n_samples": 10, "seq_len": 24, "dims": 5}})
    assert cli.main(["sines", "--config", config]) == cli.EXIT_OK
    assert "N=10 T=24 F=5" in capsys.readouterr().out
    path = str(tmp_path / "out" / cli.SINES_FILE)
    assert data_rows(path) == 240
    assert load_csv(path).shape == (10, 24, 5)

    first = read(path)
    assert cli.main(["sines", "--config", config]) == cli.EXIT_OK
    assert read(path) == first
    assert cli.main(["sines", "--config", config, "--seed", "2"]) == cli.EXIT_OK
    assert read(path) != first


def test_sines_invalid_range(tmp_path):
    config = write_config(tmp_path, data={"sines": {"phase_range": [1.0, -1.0]}})
    assert cli.main(["sines", "--config", config]) == cli.EXIT_INVALID


def test_missing_config_file(tmp_path):
    assert cli.main(["sines", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_INVALID


def test_train_missing_dataset(tmp_path):
    config = write_config(tmp_path, data={"csv": {"path": str(tmp_path / "missing.csv")}})
    assert cli.main(["train", "--config", config]) == cli.EXIT_INVALID


def test_train_without_early_stopping(tmp_path):
    config = write_config(tmp_path)
    assert cli.main(["train", "--config", config, "--ablate", "no-early-stopping"]) == cli.EXIT_OK
    out = tmp_path / "out"
    assert read(str(out / cli.EARLY_STOP_LOG_FILE)) == b""
    assert os.path.getsize(str(out / cli.CHECKPOINT_FILE)) > 0
    assert data_rows(str(out / cli.SYNTHETIC_FILE)) == 20 * 6


def test_train_is_reproducible(tmp_path):
    config = write_config(tmp_path)
    logs, synthetics = [], []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        assert cli.main(["train", "--config", config, "--out", out]) == cli.EXIT_OK
        logs.append(read(os.path.join(out, cli.EARLY_STOP_LOG_FILE)))
        synthetics.append(read(os.path.join(out, cli.SYNTHETIC_FILE)))
    assert logs[0] == logs[1]
    assert synthetics[0] == synthetics[1]
    entries = [json.loads(line) for line in logs[0].decode().splitlines()]
    assert [entry["epoch"] for entry in entries] == [1, 2, 3]


def test_train_on_windowed_csv(tmp_path):
    series = np.column_stack([np.sin(np.arange(40) / 3.0), np.cos(np.arange(40) / 5.0)])
    path = tmp_path / "long.csv"
    lines = ["sample_id,t,f1,f2"] + ["0,%d,%.17g,%.17g" % (t, a, b) for t, (a, b) in enumerate(series)]
    path.write_text("\n".join(lines) + "\n")
    config = write_config(
        tmp_path, data={"csv": {"path": str(path), "window": {"length": 6, "stride": 2}}}
    )
    config = cli.RunConfig.load(config)
    batch = cli.load_dataset(config)
    assert batch.shape == (18, 6, 2)
    assert np.array_equal(batch.values[1], series[2:8])


def test_train_failure(tmp_path, monkeypatch):
    def fail(self, batch):
        raise NonFiniteLossError(2, "reconstruction", float("nan"))

    monkeypatch.setattr(SeriesGAN, "fit", fail)
    config = write_config(tmp_path)
    assert cli.main(["train", "--config", config]) == cli.EXIT_TRAINING


class TestGenerate(TestCase):
    @pytest.fixture(autouse=True)
    def trained(self, tmp_path):
        self.tmp_path = tmp_path
        self.config = write_config(tmp_path)
        assert cli.main(["train", "--config", self.config, "--ablate", "early-stop"]) == cli.EXIT_OK
        self.out = tmp_path / "out"

    def test_count_and_determinism(self):
        assert cli.main(["generate", "--config", self.config, "--count", "7"]) == cli.EXIT_OK
        path = str(self.out / cli.GENERATED_FILE)
        assert data_rows(path) == 7 * 6
        first = read(path)
        assert cli.main(["generate", "--config", self.config, "--count", "7"]) == cli.EXIT_OK
        assert read(path) == first

    def test_values_within_training_range(self):
        assert cli.main(["generate", "--config", self.config, "--count", "30"]) == cli.EXIT_OK
        generated = load_csv(str(self.out / cli.GENERATED_FILE)).values
        training = load_csv(str(self.out / cli.SYNTHETIC_FILE)).values
        config = cli.RunConfig.load(self.config)
        real = cli.load_dataset(config).values
        for f in range(2):
            assert generated[..., f].min() >= real[..., f].min() - 1e-9
            assert generated[..., f].max() <= real[..., f].max() + 1e-9
        assert training.shape == (20, 6, 2)

    def test_corrupt_checkpoint(self):
        path = self.out / cli.CHECKPOINT_FILE
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        assert cli.main(["generate", "--config", self.config]) == cli.EXIT_CHECKPOINT

    def test_missing_checkpoint(self):
        missing = str(self.tmp_path / "missing.sfck")
        assert cli.main(["generate", "--config", self.config, "--checkpoint", missing]) == cli.EXIT_INVALID


class TestEvaluate(TestCase):
    @pytest.fixture(autouse=True)
    def files(self, tmp_path):
        self.tmp_path = tmp_path
        self.config = write_config(tmp_path)
        assert cli.main(["sines", "--config", self.config]) == cli.EXIT_OK
        assert cli.main(["sines", "--config", self.config, "--seed", "5", "--out", str(tmp_path / "other")]) == 0
        self.real = str(tmp_path / "out" / cli.SINES_FILE)
        self.synthetic = str(tmp_path / "other" / cli.SINES_FILE)

    def test_report(self):
        code = cli.main(["evaluate", "--config", self.config, "--real", self.real, "--synthetic", self.synthetic])
        assert code == cli.EXIT_OK
        out = self.tmp_path / "out"
        with open(str(out / cli.REPORT_FILE)) as f:
            report = json.load(f)
        assert report["replications"] == 2
        assert len(report["discriminative"]["values"]) == 2
        assert set(report["discriminative"]) == {"mean", "std", "values"}
        assert set(report["embeddings"]) == {"pca", "tsne"}
        for method in ("pca", "tsne"):
            assert data_rows(str(out / (cli.EMBEDDING_FILE % method))) == 40

    def test_reproducible(self):
        args = ["evaluate", "--config", self.config, "--real", self.real, "--synthetic", self.synthetic]
        assert cli.main(args) == cli.EXIT_OK
        first = read(str(self.tmp_path / "out" / cli.REPORT_FILE))
        assert cli.main(args) == cli.EXIT_OK
        assert read(str(self.tmp_path / "out" / cli.REPORT_FILE)) == first

    def test_missing_file(self):
        missing = str(self.tmp_path / "missing.csv")
        args = ["evaluate", "--config", self.config, "--real", self.real, "--synthetic", missing]
        assert cli.main(args) == cli.EXIT_INVALID

    def test_shape_mismatch(self):
        wide = {"sines": {"n_samples": 20, "seq_len": 6, "dims": 3}}
        other = write_config(self.tmp_path, name="wide.json", data=wide)
        out = str(self.tmp_path / "wide")
        assert cli.main(["sines", "--config", other, "--out", out]) == cli.EXIT_OK
        synthetic = os.path.join(out, cli.SINES_FILE)
        args = ["evaluate", "--config", self.config, "--real", self.real, "--synthetic", synthetic]
        assert cli.main(args) == cli.EXIT_INVALID


def test_evaluation_keeps_out_of_range_synthetic_values():
    ramps = np.tile(np.arange(6.0).reshape(1, 6, 1) / 5.0, (40, 1, 1))
    overshoot = ramps.copy()
    overshoot[:, -1, 0] = 5.0
    real, synthetic = cli.scale_for_evaluation(SeriesBatch(ramps), SeriesBatch(overshoot))
    assert real.scaled
    assert not synthetic.scaled
    assert np.all(synthetic.values[:, -1, 0] == 5.0)

    budget = ScorerBudget(steps=200, batch_size=32, lr=0.01)
    clamped = scaler_apply(SeriesBatch(overshoot), scaler_fit(SeriesBatch(ramps)))
    assert np.array_equal(clamped.values, real.values)
    assert discriminative_score(real, clamped, budget, Rng(0)) == 0.0
    assert discriminative_score(real, synthetic, budget, Rng(0)) > 0.25
