import json

import pytest
from click.testing import CliRunner

from bytehue.cli import cli, main
from bytehue.ingest import save_dataset
from bytehue.synthetic import multilabel_motif_manifest


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "ds.jsonl"
    save_dataset(multilabel_motif_manifest(n_train=24, n_test=8, side=16, seed=6), path)
    return str(path)


@pytest.fixture(scope="module")
def trained_bundle(runner, dataset_path, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("cli") / "model.bh")
    result = runner.invoke(cli, [
        "train", "--dataset", dataset_path, "--out", out,
        "--epochs", "2", "--lr", "0.01", "--seed", "1", "--input-size", "16",
    ])
    assert result.exit_code == 0, result.output
    return out


class TestEncode:
    def test_encode_hex_file(self, runner, tmp_path):
        hex_file = tmp_path / "code.hex"
        hex_file.write_text("0x" + "606060405260" * 10)
        out = tmp_path / "img.png"
        result = runner.invoke(cli, [
            "encode", "--in", str(hex_file), "--out", str(out),
            "--target", "8x8", "--filter", "nearest",
        ])
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "8x8" in result.output

    def test_width_and_square_conflict(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "encode", "--in", "x", "--out", "y", "--width", "4", "--square",
        ])
        assert result.exit_code == 2

    def test_bad_hex_is_operational_error(self, runner, tmp_path):
        hex_file = tmp_path / "bad.hex"
        hex_file.write_text("60zz")
        result = runner.invoke(cli, [
            "encode", "--in", str(hex_file), "--out", str(tmp_path / "o.png"),
        ])
        assert result.exit_code == 1
        assert "NonHexCharacter" in result.output


class TestTrainEvalScan:
    def test_train_binary_writes_bundle(self, trained_bundle):
        from bytehue.bundle import load_bundle

        bundle = load_bundle(trained_bundle)
        assert bundle.binary_net.head == ("softmax", 2)
        assert bundle.multilabel_net.head == ("sigmoid", 4)

    def test_train_multilabel_from_bundle(self, runner, dataset_path, trained_bundle,
                                          tmp_path):
        out = str(tmp_path / "model2.bh")
        result = runner.invoke(cli, [
            "train", "--dataset", dataset_path, "--stage", "multilabel",
            "--from", trained_bundle, "--freeze-features", "--out", out,
            "--epochs", "2", "--lr", "0.05", "--seed", "2", "--input-size", "16",
        ])
        assert result.exit_code == 0, result.output
        from bytehue.bundle import load_bundle

        a, b = load_bundle(trained_bundle), load_bundle(out)
        assert a.binary_params.checksum() == b.binary_params.checksum()
        assert a.multilabel_params.checksum() != b.multilabel_params.checksum()

    def test_eval_json(self, runner, dataset_path, trained_bundle):
        result = runner.invoke(cli, [
            "eval", "--bundle", trained_bundle, "--dataset", dataset_path,
            "--split", "test", "--json",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert {"accuracy", "precision", "recall"} <= set(payload)

    def test_scan_hex(self, runner, trained_bundle):
        result = runner.invoke(cli, [
            "scan", "--bundle", trained_bundle, "--hex", "0x606060405260", "--json",
        ])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert len(report["labels"]) == 4

    def test_scan_log_output(self, runner, trained_bundle):
        result = runner.invoke(cli, [
            "scan", "--bundle", trained_bundle, "--hex", "6060",
        ])
        assert result.exit_code == 0
        assert "is_buggy" in result.output


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        assert main(["scan", "--no-such-flag"]) == 2

    def test_missing_bundle_is_operational_error(self):
        assert main(["scan", "--bundle", "/nonexistent.bh", "--hex", "6060"]) == 1

    def test_success_exit_zero(self, trained_bundle):
        assert main(["scan", "--bundle", trained_bundle, "--hex", "6060"]) == 0

    def test_help_exit_zero(self):
        assert main(["--help"]) == 0
