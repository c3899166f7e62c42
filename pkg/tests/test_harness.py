import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import db
from fusionnet import TrainConfig
from harness import (
    DATA_DIR,
    PUBLISHED_ROWS,
    PUBLISHED_ROWS_PATH,
    RankedReport,
    ReportRow,
    RunConfig,
    check_published_rows,
    evaluate_panel,
    load_published_rows,
    load_run_config,
    rank_rows,
    report_from_published,
    run_evaluation,
)
from metrics import compute_auc, compute_f1, confusion_from_classes
from predictions import align_panel, load_prediction_set
from settings import OUTPUT_DIR
from synthgen import SyntheticSpec, generate_panel, theoretical_auc, write_panel

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SYNTH_DIR = DATA_DIR / "synth"


@pytest.fixture
def synthetic_panel():
    spec = SyntheticSpec(n_pos=80, n_neg=80, separations=[2.0, 1.0, 0.3], n_models=3, seed=21)
    return generate_panel(spec)


def _row(name, overall_parts):
    auc, f1, ece = overall_parts
    return ReportRow(name=name, kind="model", auc=auc, f1=f1, ece=ece, overall=auc + 0.5 * f1 + 0.5 * (1 - ece))


class TestPublishedRows:
    def test_flags_exactly_two_rows(self):
        checks = check_published_rows(PUBLISHED_ROWS)
        flagged = {c.name: c for c in checks if c.flagged}
        assert set(flagged) == {"VGG-19", "Label Fusion"}
        assert flagged["VGG-19"].recomputed == pytest.approx(1.3731, abs=5e-5)
        assert flagged["Label Fusion"].recomputed == pytest.approx(1.3843, abs=5e-5)

    def test_bundled_file_matches_the_constants(self):
        rows = load_published_rows(PUBLISHED_ROWS_PATH)
        assert [r[0] for r in rows] == [r[0] for r in PUBLISHED_ROWS]
        for got, expected in zip(rows, PUBLISHED_ROWS):
            assert got[1:] == pytest.approx(expected[1:])

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("name,auc,f1\nx,0.5,0.5\n")
        with pytest.raises(ValueError, match="missing column"):
            load_published_rows(path)

    def test_ranked_by_recomputed_score(self):
        report = report_from_published(PUBLISHED_ROWS)
        names = [r.name for r in report.rows]
        assert names[0] == "Densenet-121"
        assert names[-1] == "Averaging"
        assert [f.name for f in report.flags] == ["VGG-19", "Label Fusion"]
        vgg = next(r for r in report.rows if r.name == "VGG-19")
        assert vgg.printed == 1.4231


class TestRanking:
    def test_descending_and_stable(self):
        rows = [_row("a", (0.6, 0.5, 0.2)), _row("b", (0.9, 0.5, 0.2)), _row("c", (0.6, 0.5, 0.2))]
        assert [r.name for r in rank_rows(rows)] == ["b", "a", "c"]

    def test_report_rejects_hand_written_scores(self):
        with pytest.raises(ValueError):
            RankedReport(rows=[ReportRow(name="x", kind="model", auc=0.5, f1=0.5, ece=0.5, overall=9.0)])


class TestEvaluatePanel:
    def test_base_models_and_ensembles_share_the_split(self, synthetic_panel):
        config = RunConfig(inputs=[{"path": "unused.csv"}], fusion=TrainConfig(epochs=4), seed=5)
        result = evaluate_panel(synthetic_panel, config)
        report = result.report
        names = {r.name for r in report.rows}
        assert names == {"model_1", "model_2", "model_3", "Plurality voting", "Averaging", "Label Fusion"}
        assert report.n_validation == result.training_log.val_indices.size == 32
        scores = [r.overall for r in report.rows]
        assert scores == sorted(scores, reverse=True)
        assert report.ensembled == ["model_1", "model_2", "model_3"]

    def test_top_k_limits_the_ensemble(self, synthetic_panel):
        config = RunConfig(inputs=[{"path": "unused.csv"}], fusion=TrainConfig(epochs=2), top_k=2)
        result = evaluate_panel(synthetic_panel, config)
        assert len(result.report.ensembled) == 2
        assert result.network.n_inputs == 2
        assert sum(r.kind == "model" for r in result.report.rows) == 3

    def test_plurality_row_scores_the_majority_class(self, synthetic_panel):
        config = RunConfig(inputs=[{"path": "unused.csv"}], fusion=TrainConfig(epochs=2), threshold=0.7, seed=5)
        result = evaluate_panel(synthetic_panel, config)
        val_panel = synthetic_panel.subset(result.training_log.val_indices)
        votes = (val_panel.matrix() >= 0.7).sum(axis=1)
        majority = 2 * votes > val_panel.n_models
        row = next(r for r in result.report.rows if r.name == "Plurality voting")
        assert row.f1 == compute_f1(confusion_from_classes(majority, val_panel.labels))

    def test_identical_models_average_to_the_member(self):
        member = generate_panel(SyntheticSpec(n_pos=60, n_neg=60, separation=1.5, seed=8)).models[0]
        panel = align_panel([member.renamed(name) for name in ("a", "b", "c")])
        config = RunConfig(inputs=[{"path": "unused.csv"}], fusion=TrainConfig(epochs=2), seed=5)
        rows = {r.name: r for r in evaluate_panel(panel, config).report.rows}
        base, averaged = rows["a"], rows["Averaging"]
        assert (averaged.auc, averaged.f1, averaged.ece, averaged.overall) == (base.auc, base.f1, base.ece, base.overall)


class TestRunEvaluation:
    def test_writes_artifacts_and_records_the_run(self, tmp_path, synthetic_panel):
        paths = write_panel(synthetic_panel, tmp_path / "inputs")
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({
            "inputs": [{"path": f"inputs/{p.name}"} for p in paths],
            "fusion": {"epochs": 3},
            "output_dir": str(tmp_path / "out"),
            "formats": ["text", "csv", "json", "markdown", "docx"],
            "database_url": f"sqlite:///{tmp_path / 'runs.db'}",
        }))
        config = load_run_config(config_path)
        assert config.inputs[0].path == str(tmp_path / "inputs" / "model_1.csv")

        report = run_evaluation(config)
        out = tmp_path / "out"
        for name in ("report.txt", "report.csv", "report.json", "report.md", "report.docx", "fusion_net.json", "training_log.csv"):
            assert (out / name).exists(), name
        assert RankedReport.model_validate_json((out / "report.json").read_text()) == report

        with db.runs_session() as session:
            runs = db.list_runs(session)
        assert len(runs) == 1
        assert runs[0]["best_source"] == report.rows[0].name
        assert [r["rank"] for r in runs[0]["rows"]] == list(range(1, 7))

    def test_output_dir_written_in_the_file_resolves_against_it(self, tmp_path):
        path = tmp_path / "cfg" / "run.json"
        path.parent.mkdir()
        path.write_text(json.dumps({"inputs": [{"path": "m.csv"}], "output_dir": "../out"}))
        assert Path(load_run_config(path).output_dir) == tmp_path / "cfg" / ".." / "out"

    def test_default_output_dir_stays_relative_to_the_cwd(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"inputs": [{"path": "m.csv"}]}))
        assert load_run_config(path).output_dir == OUTPUT_DIR


class TestBundledFixture:
    def test_matches_the_recorded_theoretical_auc(self):
        recorded = pd.read_csv(SYNTH_DIR / "theoretical_auc.csv")
        spec = SyntheticSpec.model_validate_json((CONFIGS / "synth.json").read_text())
        assert list(recorded["model"]) == [spec.model_name(i) for i in range(spec.n_models)]
        for i, row in enumerate(recorded.itertuples(index=False)):
            assert row.theoretical_auc == pytest.approx(theoretical_auc(spec, i), abs=1e-12)
            pset = load_prediction_set(SYNTH_DIR / f"{row.model}.csv")
            assert np.bincount(pset.labels).tolist() == [spec.n_neg, spec.n_pos]
            assert abs(compute_auc(pset.probs, pset.labels) - row.theoretical_auc) < 0.04

    def test_run_config_gives_byte_identical_reports(self, tmp_path):
        config = load_run_config(CONFIGS / "run.json")
        assert all(Path(s.path).exists() for s in config.inputs)
        fusion = config.fusion.model_copy(update={"epochs": 10})
        reports = []
        for out in ("first", "second"):
            run = config.model_copy(update={
                "output_dir": str(tmp_path / out), "formats": ["json", "markdown"], "fusion": fusion, "database_url": None,
            })
            reports.append(run_evaluation(run))
        assert "model_1" in reports[0].ensembled
        for name in ("report.json", "report.md"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()
