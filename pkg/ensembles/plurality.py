import numpy as np

from predictions import PredictionPanel
from settings import DECISION_THRESHOLD

from .output import EnsembleOutput, Strategy, fused_output


def plurality_vote(panel: PredictionPanel, threshold: float = DECISION_THRESHOLD, tie_class: int = 1) -> EnsembleOutput:
    """
    Each model votes 1 iff its prob >= threshold. The fused prob is the share of
    votes for class 1; the predicted class is the majority, exact ties go to tie_class.
    """
    if tie_class not in (0, 1):
        raise ValueError(f"tie_class must be 0 or 1, got {tie_class!r}")
    votes = (panel.matrix() >= threshold).sum(axis=1)
    n_models = panel.n_models
    fraction = votes / n_models
    predicted = np.where(2 * votes == n_models, tie_class, (2 * votes > n_models).astype(np.int8))
    return fused_output(Strategy.PLURALITY, panel, fraction, predicted)


def run(panel: PredictionPanel, threshold: float = DECISION_THRESHOLD, tie_class: int = 1, **_) -> EnsembleOutput:
    return plurality_vote(panel, threshold=threshold, tie_class=tie_class)
