import json

import numpy as np
import pytest
from click.testing import CliRunner

from flowcast.bundle import BundleError, ModelBundle, load_bundle, save_bundle
from flowcast.cli import main
from flowcast.encoding import FeatureMode
from flowcast.eventlog import write_csv
from flowcast.harness import ExperimentConfig, make_folds, prepare_fold, train_model
from flowcast.neuralnet import PARAM_NAMES, Batch, forward
from flowcast.synthetic import signal_log


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    dataset = root / "signal.csv"
    with open(dataset, "w", newline="") as sink:
        write_csv(signal_log(cases=24, seed=2), sink)
    config = {
        "dataset": str(dataset),
        "features": ["Clust2"],
        "folds": 3,
        "iterations": 2,
        "total_epochs": 1,
        "batch_size": 16,
        "hidden_dim": 4,
        "validation_sample": 50,
        "seed": 5,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config))
    return root, str(dataset), str(config_path), config


def strip_timings(csv_text):
    rows = []
    for line in csv_text.splitlines():
        parts = line.split(",")
        rows.append(",".join(parts[:-2]))
    return "\n".join(rows)


class TestRunCommand:
    def test_writes_expected_rows(self, workspace):
        root, _, config_path, _ = workspace
        out = root / "results.csv"
        result = CliRunner().invoke(main, ["run", config_path, "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 3 + 2  # header, 3 folds, mean + stdev
        assert lines[0].startswith("dataset,features,fold,success_rate")

    def test_iteration_log_written(self, workspace):
        root, _, config_path, _ = workspace
        out = root / "results2.csv"
        iters = root / "iters.csv"
        result = CliRunner().invoke(
            main, ["run", config_path, "--out", str(out), "--iter-log", str(iters)])
        assert result.exit_code == 0, result.output
        lines = iters.read_text().splitlines()
        assert lines[0] == "fold,mode,iteration,validation_accuracy"
        assert len(lines) == 1 + 3 * 2  # 3 folds x 2 iterations

    def test_rerun_is_deterministic_outside_timing_columns(self, workspace):
        root, _, config_path, _ = workspace
        out_a, out_b = root / "a.csv", root / "b.csv"
        assert CliRunner().invoke(main, ["run", config_path, "--out", str(out_a)]).exit_code == 0
        assert CliRunner().invoke(main, ["run", config_path, "--out", str(out_b)]).exit_code == 0
        assert strip_timings(out_a.read_text()) == strip_timings(out_b.read_text())

    def test_invalid_json_exits_2_with_location(self, workspace):
        root, _, _, _ = workspace
        bad = root / "bad.json"
        bad.write_text('{"dataset": "x.csv",')
        result = CliRunner().invoke(main, ["run", str(bad)])
        assert result.exit_code == 2
        assert "line" in result.output and "column" in result.output

    def test_invalid_config_value_exits_2(self, workspace):
        root, dataset, _, config = workspace
        bad = dict(config, folds=0)
        path = root / "bad_folds.json"
        path.write_text(json.dumps(bad))
        result = CliRunner().invoke(main, ["run", str(path)])
        assert result.exit_code == 2
        assert "folds" in result.output

    def test_unknown_config_key_exits_2(self, workspace):
        root, _, _, config = workspace
        bad = dict(config, gpu=True)
        path = root / "bad_key.json"
        path.write_text(json.dumps(bad))
        result = CliRunner().invoke(main, ["run", str(path)])
        assert result.exit_code == 2
        assert "gpu" in result.output

    def test_missing_dataset_exits_3(self, workspace):
        root, _, _, config = workspace
        bad = dict(config, dataset=str(root / "missing.csv"))
        path = root / "bad_data.json"
        path.write_text(json.dumps(bad))
        result = CliRunner().invoke(main, ["run", str(path)])
        assert result.exit_code == 3


@pytest.fixture(scope="module")
def trained_bundle_path(workspace):
    root, _, config_path, _ = workspace
    out = root / "model.bin"
    result = CliRunner().invoke(main, ["train", config_path, "--out", str(out)])
    assert result.exit_code == 0, result.output
    return str(out)


class TestTrainCommand:
    def test_bundle_loads_and_is_consistent(self, trained_bundle_path):
        bundle = load_bundle(trained_bundle_path)
        bundle.check_consistent()
        assert bundle.mode.label == "Clust2"
        assert bundle.clusters is not None
        assert bundle.metadata["seed"] == 5
        assert "config_hash" in bundle.metadata

    def test_corrupted_bundle_is_rejected(self, workspace, trained_bundle_path):
        root = workspace[0]
        blob = bytearray(open(trained_bundle_path, "rb").read())
        blob[len(blob) // 2] ^= 0xFF
        corrupted = root / "corrupted.bin"
        corrupted.write_bytes(bytes(blob))
        with pytest.raises(BundleError, match="checksum"):
            load_bundle(str(corrupted))

    def test_truncated_bundle_is_rejected(self, workspace, trained_bundle_path):
        root = workspace[0]
        blob = open(trained_bundle_path, "rb").read()[:40]
        truncated = root / "truncated.bin"
        truncated.write_bytes(blob)
        with pytest.raises(BundleError):
            load_bundle(str(truncated))


class TestPredictCommand:
    def test_predictions_for_every_prefix(self, workspace, trained_bundle_path):
        root, dataset, _, _ = workspace
        out = root / "predictions.csv"
        result = CliRunner().invoke(
            main, ["predict", trained_bundle_path, dataset, "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "caseid,prefix_length,predicted_activity,probability"
        log = signal_log(cases=24, seed=2)
        expected = sum(max(0, len(c.events) - 3) for c in log.cases)
        assert len(lines) == 1 + expected
        for line in lines[1:]:
            probability = float(line.rsplit(",", 1)[1])
            assert 0.0 <= probability <= 1.0

    def test_unseen_activity_still_predicted(self, workspace, trained_bundle_path):
        root = workspace[0]
        alien = root / "alien.csv"
        rows = ["caseid,activity,time,signal"]
        for minute in range(5):
            rows.append(f"z1,martian,2021-06-01T10:{minute:02d}:00,v{minute}")
        alien.write_text("\n".join(rows) + "\n")
        out = root / "alien_predictions.csv"
        result = CliRunner().invoke(
            main, ["predict", trained_bundle_path, str(alien), "--out", str(out)])
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 2  # prefixes of length 4 and 5

    def test_empty_log_gives_header_only(self, workspace, trained_bundle_path):
        root = workspace[0]
        empty = root / "empty.csv"
        empty.write_text("caseid,activity,time\n")
        out = root / "empty_predictions.csv"
        result = CliRunner().invoke(
            main, ["predict", trained_bundle_path, str(empty), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines() == [
            "caseid,prefix_length,predicted_activity,probability"]

    def test_missing_model_exits_3(self, workspace):
        root, dataset, _, _ = workspace
        result = CliRunner().invoke(main, ["predict", str(root / "nope.bin"), dataset])
        assert result.exit_code == 3


class TestBundleRoundTrip:
    def test_saved_and_loaded_predictions_are_bitwise_identical(self, tmp_path):
        log = signal_log(cases=24, seed=4)
        config = ExperimentConfig(
            dataset="unused.csv", features=["Both2"], iterations=2,
            total_epochs=1, batch_size=16, hidden_dim=4, validation_sample=50,
            seed=9,
        )
        train_cases, test_cases = make_folds(log, 3, seed=1)[0]
        setup = prepare_fold(config, train_cases, 0, FeatureMode("both", 2))
        net, _, _ = train_model(config, setup.training_prefixes,
                                setup.validation_prefixes, setup.encoder, 0)
        bundle = ModelBundle(schema=setup.schema, mode=setup.encoder.mode,
                             clusters=setup.clusters, network=net,
                             metadata={"seed": 9})
        path = tmp_path / "model.bin"
        save_bundle(bundle, path)
        loaded = load_bundle(path)

        for name in PARAM_NAMES:
            assert np.array_equal(loaded.network.params[name], net.params[name])
        prefixes = [p for c in test_cases for p in [c.events[:4]] if len(c.events) >= 4]
        encoder_a, encoder_b = setup.encoder, loaded.encoder()
        for prefix in prefixes:
            steps_a = encoder_a.encode_steps(prefix)
            steps_b = encoder_b.encode_steps(prefix)
            assert np.array_equal(steps_a, steps_b)
            batch_a = Batch(inputs=steps_a[None], mask=np.ones((1, len(prefix))),
                            targets=np.zeros(1, dtype=np.intp))
            batch_b = Batch(inputs=steps_b[None], mask=np.ones((1, len(prefix))),
                            targets=np.zeros(1, dtype=np.intp))
            probs_a, _ = forward(net, batch_a)
            probs_b, _ = forward(loaded.network, batch_b)
            assert np.array_equal(probs_a, probs_b)

    def test_inconsistent_bundle_rejected(self, workspace, trained_bundle_path):
        bundle = load_bundle(trained_bundle_path)
        broken = ModelBundle(
            schema=bundle.schema,
            mode=FeatureMode("none"),  # narrower input than the network expects
            clusters=None,
            network=bundle.network,
            metadata={},
        )
        with pytest.raises(BundleError, match="width"):
            save_bundle(broken, workspace[0] / "broken.bin")
