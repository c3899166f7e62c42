from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from predictions import PredictionPanel, PredictionSet, save_prediction_set
from settings import DECISION_THRESHOLD


class Strategy(str, Enum):
    PLURALITY = "plurality"
    AVERAGING = "averaging"
    LABEL_FUSION = "label_fusion"


@dataclass(frozen=True, eq=False)
class EnsembleOutput:
    strategy: Strategy
    fused: PredictionSet
    predicted: np.ndarray

    def __post_init__(self):
        predicted = np.array(self.predicted, dtype=np.int8)
        if predicted.shape != self.fused.probs.shape:
            raise ValueError("predicted classes and fused probs differ in length")
        predicted.setflags(write=False)
        object.__setattr__(self, "predicted", predicted)


def fused_output(
    strategy: Strategy,
    panel: PredictionPanel,
    probs: np.ndarray,
    predicted: np.ndarray | None = None,
    threshold: float = DECISION_THRESHOLD,
) -> EnsembleOutput:
    probs = np.clip(np.asarray(probs, dtype=np.float64), 0.0, 1.0)
    if predicted is None:
        predicted = probs >= threshold
    fused = PredictionSet(strategy.value, panel.sample_ids, panel.labels, probs)
    return EnsembleOutput(strategy, fused, predicted)


def write_output(output: EnsembleOutput, path: str | Path) -> Path:
    return save_prediction_set(output.fused, path)
