from . import averaging, label_fusion, plurality
from .averaging import average_probs
from .label_fusion import label_fusion_predict
from .output import EnsembleOutput, Strategy, write_output
from .plurality import plurality_vote

STRATEGIES = {
    Strategy.PLURALITY.value: {
        "label": "Plurality voting",
        "runner": plurality.run,
    },
    Strategy.AVERAGING.value: {
        "label": "Averaging",
        "runner": averaging.run,
    },
    Strategy.LABEL_FUSION.value: {
        "label": "Label Fusion",
        "runner": label_fusion.run,
    },
}


def run_strategy(name: str, panel, **kwargs) -> EnsembleOutput:
    entry = STRATEGIES.get(name)
    if entry is None:
        raise ValueError(f"Unknown strategy {name!r}, expected one of {', '.join(STRATEGIES)}")
    return entry["runner"](panel, **kwargs)


__all__ = [
    "STRATEGIES",
    "EnsembleOutput",
    "Strategy",
    "average_probs",
    "label_fusion_predict",
    "plurality_vote",
    "run_strategy",
    "write_output",
]
