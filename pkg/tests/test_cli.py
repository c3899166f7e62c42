import io
import json

import numpy as np
import pandas as pd
import pytest

from augment import Image
from cli import build_parser, main
from harness import DATA_DIR
from pnm import write_pnm
from synthgen import SyntheticSpec, generate_panel, theoretical_auc, write_panel

SUBCOMMAND_FLAGS = {
    "metrics": ["--bins", "--threshold", "--format", "--seed", "--log-level"],
    "ensemble": ["--strategy", "--net", "--threshold", "--tie-class", "--output", "--seed", "--log-level"],
    "fuse-train": ["--config", "--output-dir", "--seed", "--log-level"],
    "augment": ["--output", "--config", "--ext", "--seed", "--log-level"],
    "synth": ["--spec", "--calibrated", "--temperature", "--output", "--seed", "--log-level"],
    "report": ["--config", "--output-dir", "--format", "--seed", "--log-level"],
    "check-tables": ["--rows", "--format", "--seed", "--log-level"],
}


@pytest.fixture
def perfect_file(write_csv):
    return write_csv("perfect.csv", [("a", 1, 1.0), ("b", 1, 1.0), ("c", 0, 0.0), ("d", 0, 0.0)])


@pytest.fixture
def three_model_files(tmp_path, three_model_panel):
    return [str(p) for p in write_panel(three_model_panel, tmp_path / "panel")]


class TestMetrics:
    def test_perfect_file(self, perfect_file, capsys):
        assert main(["metrics", str(perfect_file)]) == 0
        captured = capsys.readouterr()
        assert "auc=1.0000 f1=1.0000 ece=0.0000 S=2.0000" in captured.out
        assert "seed=" in captured.err

    def test_malformed_file_is_an_input_error(self, write_csv, capsys):
        path = write_csv("bad.csv", [("a", 1, 0.9), ("b", 0, "oops")])
        assert main(["metrics", str(path)]) == 2
        assert "row 2" in capsys.readouterr().err

    def test_missing_file_is_an_input_error(self, tmp_path, capsys):
        assert main(["metrics", str(tmp_path / "nope.csv")]) == 2

    def test_json_includes_bins(self, perfect_file, capsys):
        assert main(["metrics", str(perfect_file), "--format", "json", "--bins", "5"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload[0]["overall"] == 2.0
        assert len(payload[0]["bins"]) == 5

    def test_binormal_fixture_matches_theory(self, tmp_path, capsys):
        spec = SyntheticSpec(n_pos=20_000, n_neg=20_000, separation=2.0, seed=3)
        (path,) = write_panel(generate_panel(spec), tmp_path)
        assert main(["metrics", str(path), "--format", "json"]) == 0
        auc = json.loads(capsys.readouterr().out)[0]["auc"]
        assert abs(auc - theoretical_auc(spec)) < 0.005

    def test_bundled_fixture_matches_the_recorded_value(self, capsys):
        recorded = pd.read_csv(DATA_DIR / "synth" / "theoretical_auc.csv").set_index("model")["theoretical_auc"]
        assert main(["metrics", str(DATA_DIR / "synth" / "model_1.csv"), "--format", "json"]) == 0
        auc = json.loads(capsys.readouterr().out)[0]["auc"]
        assert abs(auc - recorded["model_1"]) < 0.01


class TestEnsemble:
    def test_averaging_to_stdout(self, three_model_files, three_model_panel, capsys):
        assert main(["ensemble", *three_model_files, "--strategy", "averaging"]) == 0
        frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert list(frame.columns) == ["sample_id", "label", "prob"]
        np.testing.assert_allclose(frame["prob"], three_model_panel.matrix().mean(axis=1), atol=1e-12)

    def test_writes_file(self, tmp_path, three_model_files):
        out = tmp_path / "fused.csv"
        assert main(["ensemble", *three_model_files, "--strategy", "plurality", "-o", str(out)]) == 0
        assert out.read_text().startswith("sample_id,label,prob\n")

    def test_label_fusion_needs_a_network(self, three_model_files, capsys):
        assert main(["ensemble", *three_model_files, "--strategy", "label_fusion"]) == 2
        assert "--net" in capsys.readouterr().err

    def test_trained_network_round_trip(self, tmp_path, capsys):
        panel = generate_panel(SyntheticSpec(n_pos=40, n_neg=40, separations=[1.5, 0.5], n_models=2))
        files = [str(p) for p in write_panel(panel, tmp_path / "in")]
        config = tmp_path / "train.json"
        config.write_text(json.dumps({"epochs": 3}))
        out = tmp_path / "out"
        assert main(["fuse-train", *files, "--config", str(config), "--output-dir", str(out), "--seed", "9"]) == 0
        assert "seed=9" in capsys.readouterr().err
        assert (out / "training_log.csv").exists()
        net = str(out / "fusion_net.json")
        assert main(["ensemble", *files, "--strategy", "label_fusion", "--net", net]) == 0
        assert capsys.readouterr().out.startswith("sample_id,label,prob")


class TestAugment:
    def test_same_seed_gives_identical_bytes(self, tmp_path, rng):
        source = write_pnm(Image(rng.integers(0, 256, size=(30, 40, 3)) / 255.0), tmp_path / "fundus.ppm")
        first, second = tmp_path / "a.raw", tmp_path / "b.raw"
        assert main(["augment", str(source), "-o", str(first), "--seed", "7"]) == 0
        assert main(["augment", str(source), "-o", str(second), "--seed", "7"]) == 0
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes().startswith(b"224 224 1\n")

    def test_directory_of_pgm(self, tmp_path, rng):
        sources = [
            str(write_pnm(Image(rng.random((20, 20, 3))), tmp_path / f"img{i}.ppm")) for i in range(2)
        ]
        out = tmp_path / "augmented"
        assert main(["augment", *sources, "-o", str(out), "--ext", ".pgm"]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["img0.pgm", "img1.pgm"]


class TestSynth:
    def test_spec_writes_one_file_per_model(self, tmp_path, capsys):
        spec = tmp_path / "synth.json"
        spec.write_text(json.dumps({"n_pos": 10, "n_neg": 10, "n_models": 3}))
        assert main(["synth", "--spec", str(spec), "-o", str(tmp_path / "out"), "--seed", "4"]) == 0
        captured = capsys.readouterr()
        assert "seed=4" in captured.err
        assert captured.out.count("theoretical_auc=") == 3

    def test_calibrated(self, tmp_path, capsys):
        out = tmp_path / "cal.csv"
        assert main(["synth", "--calibrated", "50", "-o", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 51

    def test_needs_a_source(self, capsys):
        assert main(["synth"]) == 2


class TestCheckTables:
    def test_flags_vgg_and_label_fusion(self, capsys):
        assert main(["check-tables"]) == 0
        out = capsys.readouterr().out
        footnotes = [line for line in out.splitlines() if "disagrees" in line]
        assert len(footnotes) == 2
        assert footnotes[0].startswith("[1] VGG-19")
        assert footnotes[1].startswith("[2] Label Fusion")

    def test_markdown(self, capsys):
        assert main(["check-tables", "--format", "markdown"]) == 0
        assert capsys.readouterr().out.startswith("| Network | AUC | F1 Score | ECE | Overall Score |")


class TestReport:
    def test_full_run(self, tmp_path, capsys):
        panel = generate_panel(SyntheticSpec(n_pos=40, n_neg=40, separations=[2.0, 1.0, 0.0], n_models=3))
        write_panel(panel, tmp_path / "in")
        config = tmp_path / "run.json"
        config.write_text(json.dumps({
            "inputs": [{"path": f"in/model_{i}.csv"} for i in (1, 2, 3)],
            "fusion": {"epochs": 2},
        }))
        out = tmp_path / "out"
        assert main(["report", "--config", str(config), "--output-dir", str(out), "--format", "markdown"]) == 0
        assert "Label Fusion" in capsys.readouterr().out
        assert (out / "report.md").exists()
        assert not (out / "report.csv").exists()


class TestParser:
    @pytest.mark.parametrize("command", sorted(SUBCOMMAND_FLAGS))
    def test_help_lists_every_flag(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in SUBCOMMAND_FLAGS[command]:
            assert flag in text

    def test_unknown_flag_is_rejected(self, perfect_file):
        with pytest.raises(SystemExit) as exc:
            main(["metrics", str(perfect_file), "--bogus"])
        assert exc.value.code == 2

    def test_every_subcommand_is_registered(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert set(sub.choices) == set(SUBCOMMAND_FLAGS)
