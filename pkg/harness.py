"""
End-to-end evaluation: load and align the base models, split off the fusion
validation partition, evaluate every base model and all three ensembles on it,
and rank everything by the composite score S.

Also re-checks published result rows against the score formula.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import pandas as pd
from pydantic import BaseModel, Field, model_validator

import db
from ensembles import STRATEGIES, average_probs, label_fusion_predict, plurality_vote
from fusionnet import FusionNetwork, TrainConfig, TrainingLog, save_network, stratified_split, train, write_training_log
from metrics import SCORE_TOLERANCE, MetricsReport, evaluate, overall_score
from predictions import PredictionPanel, align_panel, load_prediction_sets
from report import REPORT_FILES, emit_report
from settings import DECISION_THRESHOLD, DEFAULT_SEED, ECE_BINS, OUTPUT_DIR, RUNS_DATABASE_URL

logger = logging.getLogger(__name__)

FLAG_TOLERANCE = 5e-4
DATA_DIR = Path(__file__).resolve().parent / "data"
PUBLISHED_ROWS_PATH = DATA_DIR / "published_rows.csv"

NETWORK_FILE = "fusion_net.json"
TRAINING_LOG_FILE = "training_log.csv"

ReportFormat = Literal["text", "csv", "json", "markdown", "docx"]

# (name, auc, f1, ece, printed overall score) from the two result tables
PUBLISHED_ROWS = [
    ("Resnet-50", 0.7233, 0.7778, 0.3346, 1.4449),
    ("Resnet-152", 0.7633, 0.6275, 0.1966, 1.47875),
    ("Densenet-121", 0.7617, 0.7347, 0.2057, 1.5262),
    ("EfficientNet-b7", 0.7467, 0.6780, 0.2449, 1.46325),
    ("VGG-19", 0.7350, 0.6154, 0.3392, 1.4231),
    ("Plurality voting", 0.6517, 0.5714, 0.1023, 1.3862),
    ("Averaging", 0.71885, 0.6862, 0.5361, 1.2939),
    ("Label Fusion", 0.7017, 0.6512, 0.2860, 1.4343),
]


class InputSpec(BaseModel):
    path: str
    name: str | None = None


class RunConfig(BaseModel):
    inputs: list[InputSpec] = Field(min_length=1)
    n_bins: int = Field(ECE_BINS, ge=1)
    threshold: float = Field(DECISION_THRESHOLD, ge=0.0, le=1.0)
    fusion: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: str = OUTPUT_DIR
    seed: int = DEFAULT_SEED
    formats: list[ReportFormat] = ["markdown", "csv", "json"]
    top_k: int | None = Field(None, ge=1)
    database_url: str | None = None


class ReportRow(BaseModel):
    name: str
    kind: Literal["model", "ensemble", "published"]
    auc: float
    f1: float
    ece: float
    overall: float
    printed: float | None = None

    @classmethod
    def from_metrics(cls, report: MetricsReport, kind: str, name: str | None = None) -> "ReportRow":
        return cls(name=name or report.model_name, kind=kind, auc=report.auc, f1=report.f1, ece=report.ece, overall=report.overall)


class Flag(BaseModel):
    name: str
    printed: float
    recomputed: float


class RankedReport(BaseModel):
    rows: list[ReportRow]
    flags: list[Flag] = []
    seed: int | None = None
    n_validation: int = 0
    ensembled: list[str] = []

    @model_validator(mode="after")
    def _scores_are_computed(self):
        for row in self.rows:
            if abs(overall_score(row.auc, row.f1, row.ece) - row.overall) > SCORE_TOLERANCE:
                raise ValueError(f"row {row.name!r} carries a score the formula does not give")
        return self


class RowCheck(BaseModel):
    name: str
    auc: float
    f1: float
    ece: float
    printed: float
    recomputed: float
    flagged: bool


@dataclass(frozen=True)
class RunResult:
    report: RankedReport
    network: FusionNetwork
    training_log: TrainingLog


def rank_rows(rows: Sequence[ReportRow]) -> list[ReportRow]:
    # sorted() is stable, so equal scores keep their input order
    return sorted(rows, key=lambda r: -r.overall)


# ==============================
# Published tables
# ==============================

def check_published_rows(rows: Sequence[tuple[str, float, float, float, float]], tolerance: float = FLAG_TOLERANCE) -> list[RowCheck]:
    checks = []
    for name, auc, f1, ece, printed in rows:
        recomputed = overall_score(auc, f1, ece)
        checks.append(
            RowCheck(
                name=name, auc=auc, f1=f1, ece=ece, printed=printed,
                recomputed=recomputed, flagged=abs(recomputed - printed) > tolerance,
            )
        )
    flagged = [c.name for c in checks if c.flagged]
    if flagged:
        logger.warning(f"Published score disagrees with the formula for: {', '.join(flagged)}")
    return checks


def load_published_rows(path: str | Path = PUBLISHED_ROWS_PATH) -> list[tuple[str, float, float, float, float]]:
    frame = pd.read_csv(path)
    missing = {"name", "auc", "f1", "ece", "overall"} - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    return [
        (str(r.name), float(r.auc), float(r.f1), float(r.ece), float(r.overall))
        for r in frame.itertuples(index=False)
    ]


def report_from_published(rows: Sequence[tuple[str, float, float, float, float]]) -> RankedReport:
    checks = check_published_rows(rows)
    report_rows = [
        ReportRow(name=c.name, kind="published", auc=c.auc, f1=c.f1, ece=c.ece, overall=c.recomputed, printed=c.printed)
        for c in checks
    ]
    flags = [Flag(name=c.name, printed=c.printed, recomputed=c.recomputed) for c in checks if c.flagged]
    return RankedReport(rows=rank_rows(report_rows), flags=flags)


# ==============================
# Evaluation run
# ==============================

def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    config = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
    # relative paths written in the file resolve against the file's directory;
    # an output_dir left to the ENSEMBLE_OUTPUT_DIR default stays relative to the cwd
    for spec in config.inputs:
        if not Path(spec.path).is_absolute():
            spec.path = str(path.parent / spec.path)
    if "output_dir" in config.model_fields_set and not Path(config.output_dir).is_absolute():
        config.output_dir = str(path.parent / config.output_dir)
    return config


def _select_top(panel: PredictionPanel, reports: Sequence[MetricsReport], top_k: int | None) -> list[str]:
    if not top_k or top_k >= panel.n_models:
        return list(panel.model_names)
    best = {r.model_name for r in sorted(reports, key=lambda r: -r.overall)[:top_k]}
    return [name for name in panel.model_names if name in best]


def evaluate_panel(panel: PredictionPanel, config: RunConfig) -> RunResult:
    fusion_config = config.fusion.model_copy(
        update={"seed": config.seed, "n_bins": config.n_bins, "threshold": config.threshold}
    )
    split = stratified_split(panel.labels, fusion_config.validation_fraction, config.seed)
    val_panel = panel.subset(split[1])

    with ThreadPoolExecutor(max_workers=min(8, panel.n_models)) as pool:
        base_reports = list(pool.map(lambda m: evaluate(m, config.n_bins, config.threshold), val_panel.models))

    chosen = _select_top(panel, base_reports, config.top_k)
    if len(chosen) < panel.n_models:
        logger.info(f"Ensembling the top {len(chosen)} model(s): {', '.join(chosen)}")
    train_panel, ensemble_panel = panel.select(chosen), val_panel.select(chosen)

    net, log = train(train_panel, fusion_config, split=split)
    outputs = [
        plurality_vote(ensemble_panel, threshold=config.threshold),
        average_probs(ensemble_panel, threshold=config.threshold),
        label_fusion_predict(net, ensemble_panel, threshold=config.threshold),
    ]

    rows = [ReportRow.from_metrics(r, "model") for r in base_reports]
    for output in outputs:
        # F1 counts each ensemble's own class decisions
        report = evaluate(output.fused, config.n_bins, config.threshold, predicted=output.predicted)
        rows.append(ReportRow.from_metrics(report, "ensemble", STRATEGIES[output.strategy.value]["label"]))

    ranked = RankedReport(rows=rank_rows(rows), seed=config.seed, n_validation=int(split[1].size), ensembled=chosen)
    return RunResult(ranked, net, log)


def write_outputs(result: RunResult, config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_network(result.network, out / NETWORK_FILE)
    write_training_log(result.training_log, out / TRAINING_LOG_FILE)
    for fmt in config.formats:
        emit_report(result.report, fmt, out / REPORT_FILES[fmt])
    logger.info(f"Wrote run artifacts to {out}")
    return out


def _record(report: RankedReport, config: RunConfig) -> None:
    url = config.database_url or RUNS_DATABASE_URL
    if not url:
        return
    if db.runs_db_url() != url:
        db.init_runs_db(url)
    with db.runs_session() as session:
        run_id = db.record_run(session, report, config.model_dump_json())
    logger.info(f"Recorded run {run_id} in the ledger")


def run_evaluation(config: RunConfig) -> RankedReport:
    sets = load_prediction_sets([s.path for s in config.inputs], [s.name for s in config.inputs])
    panel = align_panel(sets)
    logger.info(f"Evaluating {panel.n_models} model(s) over {panel.n_samples} samples (seed {config.seed})")
    result = evaluate_panel(panel, config)
    write_outputs(result, config)
    _record(result.report, config)
    return result.report
