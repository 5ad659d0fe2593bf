import json
import math

import pytest

from isoattack.cli import ConfigError, main, parse_angle


class TestParseAngle:
    def test_forms(self):
        assert parse_angle("pi") == pytest.approx(math.pi)
        assert parse_angle("-pi") == pytest.approx(-math.pi)
        assert parse_angle("pi/8") == pytest.approx(math.pi / 8)
        assert parse_angle("2pi") == pytest.approx(2 * math.pi)
        assert parse_angle("0.25") == 0.25
        assert parse_angle("-0.5") == -0.5

    def test_rejects_garbage(self):
        with pytest.raises(ConfigError):
            parse_angle("pie")
        with pytest.raises(ConfigError):
            parse_angle("pi*2")


class TestExitCodes:
    def test_no_args_prints_usage(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag(self, capsys):
        assert main(["gen-data", "--bogus"]) == 1

    def test_missing_checkpoint_is_runtime_error(self, tmp_path, capsys):
        data = tmp_path / "data"
        assert main(["gen-data", "--out", str(data), "--train-count", "1",
                     "--test-count", "1", "--seed", "3"]) == 0
        code = main(["attack-tsi", "--model", str(tmp_path / "nope.mpn"),
                     "--data", str(data / "manifest.json")])
        assert code == 2
        assert "nope.mpn" in capsys.readouterr().err

    def test_bad_config_value_is_config_error(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--classes", "sphere,teapot"]) == 1


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data + train once; the attack tests reuse the artifacts."""
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data"
    victim = root / "victim"
    assert main(["gen-data", "--out", str(data), "--seed", "11",
                 "--train-count", "30", "--test-count", "15"]) == 0
    assert main(["train", "--data", str(data / "manifest.json"), "--out", str(victim),
                 "--seed", "1", "--epochs", "25"]) == 0
    return {"root": root, "manifest": data / "manifest.json", "model": victim / "model.mpn"}


class TestEndToEnd:
    def test_train_writes_report(self, workspace):
        report = json.loads((workspace["model"].parent / "train_report.json").read_text())
        assert report["test_accuracy"] >= 0.8

    def test_attack_tsi_deterministic(self, workspace):
        out_a = workspace["root"] / "tsi_a"
        out_b = workspace["root"] / "tsi_b"
        args = ["attack-tsi", "--model", str(workspace["model"]),
                "--data", str(workspace["manifest"]), "--seed", "21",
                "--s-list", "1,5", "--n-clouds", "30"]
        assert main(args + ["--out", str(out_a)]) == 0
        assert main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "outcomes.jsonl").read_bytes() == (out_b / "outcomes.jsonl").read_bytes()

    def test_attack_ctri_with_config_file(self, workspace):
        ini = workspace["root"] / "run.ini"
        ini.write_text(
            "[global]\nseed = 33\n\n"
            "[attack-ctri]\n"
            f"model = {workspace['model']}\n"
            f"data = {workspace['manifest']}\n"
            "k-list = 5,40\n"
            "ranges = pi,pi/8\n"
            "warm-samples = 10\n"
            "n-clouds = 20\n"
        )
        out = workspace["root"] / "ctri"
        assert main(["attack-ctri", "--config", str(ini), "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 33
        assert len(summary["aggregates"]["sweeps"]) == 2
        # command line wins over the config file
        out2 = workspace["root"] / "ctri2"
        assert main(["attack-ctri", "--config", str(ini), "--out", str(out2),
                     "--ranges", "pi/2"]) == 0
        summary2 = json.loads((out2 / "summary.json").read_text())
        assert len(summary2["aggregates"]["sweeps"]) == 1

    def test_save_clouds_flag(self, workspace):
        out = workspace["root"] / "tsi_clouds"
        assert main(["attack-tsi", "--model", str(workspace["model"]),
                     "--data", str(workspace["manifest"]), "--seed", "21",
                     "--s-list", "2", "--n-clouds", "10",
                     "--save-clouds", "--out", str(out)]) == 0
        adversarial = sorted((out / "adversarial").glob("*.pct"))
        assert len(adversarial) == len((out / "outcomes.jsonl").read_text().splitlines())

    def test_convert_report_json_format(self, workspace):
        run_dir = workspace["root"] / "tsi_a"
        conv = workspace["root"] / "json_out"
        assert main(["convert-report", "--report", str(run_dir / "outcomes.jsonl"),
                     "--out", str(conv), "--format", "json"]) == 0
        data = json.loads((conv / "outcomes.json").read_text())
        assert isinstance(data, list) and data

    def test_heatmap_and_convert_report(self, workspace):
        run_dir = workspace["root"] / "tsi_a"
        maps = workspace["root"] / "maps"
        assert main(["heatmap", "--report", str(run_dir / "summary.json"),
                     "--out", str(maps)]) == 0
        assert (maps / "heatmap_xy.csv").exists()
        assert (maps / "heatmap_yz.pgm").exists()
        conv = workspace["root"] / "csv"
        assert main(["convert-report", "--report", str(run_dir / "outcomes.jsonl"),
                     "--out", str(conv)]) == 0
        lines = (conv / "outcomes.csv").read_text().splitlines()
        assert lines[0].split(",")[0] == "cloud"
        assert len(lines) == 1 + len((run_dir / "outcomes.jsonl").read_text().splitlines())

    def test_transfer_cli(self, workspace):
        victim_b = workspace["root"] / "victim_b"
        assert main(["train", "--data", str(workspace["manifest"]), "--out", str(victim_b),
                     "--seed", "2", "--epochs", "25"]) == 0
        out = workspace["root"] / "transfer"
        assert main(["transfer",
                     "--models", f"{workspace['model']},{victim_b / 'model.mpn'}",
                     "--data", str(workspace["manifest"]),
                     "--warm-samples", "5", "--max-iters", "50",
                     "--n-clouds", "15", "--seed", "4", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["aggregates"]["transfer_matrix"][0][0] is None
