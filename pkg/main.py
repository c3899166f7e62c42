import logging
from typing import Literal

import numpy as np
from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from sqlalchemy.orm import Session

import db
from ensembles import STRATEGIES, run_strategy
from fusionnet import network_from_dict
from harness import PUBLISHED_ROWS, check_published_rows
from metrics import calibration_bins, evaluate
from predictions import PredictionRecord, PredictionSet, align_panel, prediction_rows
from settings import DECISION_THRESHOLD, ECE_BINS, LOG_LEVEL, RUNS_DATABASE_URL

logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
logger = logging.getLogger(__name__)

app = FastAPI(title="Ensemble evaluation service")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)

if RUNS_DATABASE_URL:
    db.init_runs_db(RUNS_DATABASE_URL)


# ==============================
# Payloads
# ==============================

class RecordPayload(BaseModel):
    sample_id: str
    label: int
    prob: float


class PredictionSetPayload(BaseModel):
    model_name: str
    records: list[RecordPayload] = Field(min_length=1)

    def to_set(self) -> PredictionSet:
        return PredictionSet.from_records(
            self.model_name,
            [PredictionRecord(r.sample_id, r.label, r.prob) for r in self.records],
        )


class MetricsPayload(PredictionSetPayload):
    n_bins: int = Field(ECE_BINS, ge=1)
    threshold: float = Field(DECISION_THRESHOLD, ge=0.0, le=1.0)


class EnsemblePayload(BaseModel):
    strategy: Literal["plurality", "averaging", "label_fusion"]
    models: list[PredictionSetPayload] = Field(min_length=1)
    threshold: float = Field(DECISION_THRESHOLD, ge=0.0, le=1.0)
    tie_class: Literal[0, 1] = 1
    network: dict | None = None


class PublishedRowPayload(BaseModel):
    name: str
    auc: float
    f1: float
    ece: float
    overall: float


class CheckTablesPayload(BaseModel):
    rows: list[PublishedRowPayload] | None = None
    tolerance: float = Field(5e-4, gt=0.0)


def ledger_session():
    if not db.is_runs_db_ready():
        raise HTTPException(status_code=503, detail="run ledger not configured")
    yield from db.get_runs_db()


# ==============================
# Routes
# ==============================

@app.get("/")
def root():
    return {"status": "ok", "strategies": {k: v["label"] for k, v in STRATEGIES.items()}}


@app.post("/api/metrics")
def metrics_api(payload: MetricsPayload):
    try:
        pset = payload.to_set()
        report = evaluate(pset, payload.n_bins, payload.threshold)
        bins = calibration_bins(pset.probs, pset.labels, payload.n_bins)
        return {**report.model_dump(), "bins": [b.as_dict() for b in bins]}
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception:
        logger.exception("metrics failed")
        raise HTTPException(status_code=500, detail="server_error")


@app.post("/api/ensemble")
def ensemble_api(payload: EnsemblePayload):
    if payload.strategy == "label_fusion" and payload.network is None:
        raise HTTPException(status_code=400, detail="label_fusion needs a network")
    try:
        panel = align_panel([m.to_set() for m in payload.models])
        net = network_from_dict(payload.network) if payload.network is not None else None
        output = run_strategy(
            payload.strategy, panel, threshold=payload.threshold, tie_class=payload.tie_class, net=net
        )
        return {
            "strategy": output.strategy.value,
            "label": STRATEGIES[output.strategy.value]["label"],
            "records": prediction_rows(output.fused),
            "predicted": np.asarray(output.predicted).astype(int).tolist(),
        }
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception:
        logger.exception("ensemble failed")
        raise HTTPException(status_code=500, detail="server_error")


@app.post("/api/check-tables")
def check_tables_api(payload: CheckTablesPayload):
    rows = PUBLISHED_ROWS if payload.rows is None else [
        (r.name, r.auc, r.f1, r.ece, r.overall) for r in payload.rows
    ]
    checks = check_published_rows(rows, payload.tolerance)
    return {"rows": [c.model_dump() for c in checks], "flagged": [c.name for c in checks if c.flagged]}


@app.get("/api/runs")
def runs_api(limit: int = 50, session: Session = Depends(ledger_session)):
    try:
        return {"runs": db.list_runs(session, limit=limit)}
    except Exception:
        logger.exception("listing runs failed")
        raise HTTPException(status_code=500, detail="server_error")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
