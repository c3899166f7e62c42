"""
Synthetic prediction panels with known answers.

Scores follow the binormal model: latent = d_m * label + sigma_m * noise, where
noise mixes a shared and a private standard normal with correlation rho, and
probabilities are logistic(latent). A model's AUC is then Phi(d_m / (sigma_m * sqrt(2))).

Normals come from Box-Muller over the uniforms of numpy's Philox counter-based
generator seeded with the spec seed, so fixtures are reproducible bit for bit.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import erf, expit, logit

from predictions import PredictionPanel, PredictionSet, align_panel, save_prediction_set
from settings import DEFAULT_SEED

logger = logging.getLogger(__name__)


class SyntheticSpec(BaseModel):
    n_pos: int = Field(ge=1)
    n_neg: int = Field(ge=1)
    separation: float = 2.0
    separations: list[float] | None = None
    sigma: float = Field(1.0, gt=0.0)
    sigmas: list[float] | None = None
    n_models: int = Field(1, ge=1)
    correlation: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = DEFAULT_SEED
    model_prefix: str = "model"

    @model_validator(mode="after")
    def _check_per_model(self):
        for name in ("separations", "sigmas"):
            values = getattr(self, name)
            if values is not None and len(values) != self.n_models:
                raise ValueError(f"{name} needs {self.n_models} values, got {len(values)}")
        if self.sigmas is not None and any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be positive")
        return self

    def model_separation(self, index: int) -> float:
        return self.separations[index] if self.separations is not None else self.separation

    def model_sigma(self, index: int) -> float:
        return self.sigmas[index] if self.sigmas is not None else self.sigma

    def model_name(self, index: int) -> str:
        return f"{self.model_prefix}_{index + 1}"


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:size]


def sample_ids(n: int, prefix: str = "s") -> np.ndarray:
    width = len(str(max(n - 1, 0)))
    return np.char.add(prefix, np.char.zfill(np.arange(n).astype(str), width))


def generate_panel(spec: SyntheticSpec) -> PredictionPanel:
    rng = philox(spec.seed)
    n = spec.n_pos + spec.n_neg
    labels = np.zeros(n, dtype=np.int8)
    labels[:spec.n_pos] = 1
    labels = rng.permutation(labels)
    ids = sample_ids(n)

    shared = box_muller(rng, n)
    rho = spec.correlation
    sets = []
    for m in range(spec.n_models):
        noise = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * box_muller(rng, n)
        latent = spec.model_separation(m) * labels + spec.model_sigma(m) * noise
        sets.append(PredictionSet(spec.model_name(m), ids, labels, expit(latent)))
    logger.debug(f"Generated {spec.n_models} synthetic model(s) over {n} samples (seed {spec.seed})")
    return align_panel(sets)


def theoretical_auc(spec: SyntheticSpec, model: int = 0) -> float:
    """Phi(d / (sigma * sqrt(2))) for one model's marginal scores."""
    x = spec.model_separation(model) / (spec.model_sigma(model) * math.sqrt(2.0))
    return float(0.5 * (1.0 + erf(x / math.sqrt(2.0))))


def _bernoulli_source(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = philox(seed)
    probs = rng.random(n)
    labels = (rng.random(n) < probs).astype(np.int8)
    return probs, labels


def generate_calibrated_set(n: int, seed: int = DEFAULT_SEED) -> PredictionSet:
    """prob ~ U(0, 1) and label ~ Bernoulli(prob): calibrated in expectation."""
    probs, labels = _bernoulli_source(n, seed)
    return PredictionSet("calibrated", sample_ids(n), labels, probs)


def generate_miscalibrated_set(n: int, seed: int = DEFAULT_SEED, temperature: float = 0.5) -> PredictionSet:
    """Labels stay Bernoulli(p) while the reported prob is logistic(logit(p) / temperature)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    probs, labels = _bernoulli_source(n, seed)
    return PredictionSet("miscalibrated", sample_ids(n), labels, expit(logit(probs) / temperature))


def write_panel(panel: PredictionPanel, directory: str | Path, suffix: str = ".csv") -> list[Path]:
    directory = Path(directory)
    return [save_prediction_set(m, directory / f"{m.model_name}{suffix}") for m in panel.models]
