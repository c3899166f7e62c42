import numpy as np

from predictions import PredictionPanel
from settings import DECISION_THRESHOLD

from .output import EnsembleOutput, Strategy, fused_output


def average_probs(panel: PredictionPanel, threshold: float = DECISION_THRESHOLD) -> EnsembleOutput:
    # sorted rows: the result does not depend on model order, bit for bit
    # anchored on the row minimum so identical members come back exactly
    probs = np.sort(panel.matrix(), axis=1)
    anchor = probs[:, 0]
    fused = anchor + (probs - anchor[:, None]).mean(axis=1)
    return fused_output(Strategy.AVERAGING, panel, fused, threshold=threshold)


def run(panel: PredictionPanel, threshold: float = DECISION_THRESHOLD, **_) -> EnsembleOutput:
    return average_probs(panel, threshold=threshold)
