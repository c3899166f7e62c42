from fusionnet import FusionNetwork, forward_batch
from predictions import PredictionPanel
from settings import DECISION_THRESHOLD

from .output import EnsembleOutput, Strategy, fused_output


def _ordered_inputs(net: FusionNetwork, panel: PredictionPanel):
    if net.n_inputs != panel.n_models:
        raise ValueError(
            f"dimension mismatch: network takes {net.n_inputs} models, panel has {panel.n_models}"
        )
    if not net.model_names or net.model_names == panel.model_names:
        return panel.matrix()
    if sorted(net.model_names) != sorted(panel.model_names):
        raise ValueError(
            f"network was trained on models {list(net.model_names)}, panel has {list(panel.model_names)}"
        )
    return panel.select(net.model_names).matrix()


def label_fusion_predict(
    net: FusionNetwork, panel: PredictionPanel, threshold: float = DECISION_THRESHOLD
) -> EnsembleOutput:
    probs = forward_batch(net, _ordered_inputs(net, panel))
    return fused_output(Strategy.LABEL_FUSION, panel, probs, threshold=threshold)


def run(
    panel: PredictionPanel, net: FusionNetwork | None = None, threshold: float = DECISION_THRESHOLD, **_
) -> EnsembleOutput:
    if net is None:
        raise ValueError("label_fusion needs a trained network")
    return label_fusion_predict(net, panel, threshold=threshold)
