"""Accuracy penalty, fitness score, and selection-probability normalization.

Accuracies are percentage points in [0, 100]; the exponential cliff below the
accuracy threshold only has the intended magnitude in these units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# The penalty is a divisor and reaches 0 for lossless compression; the floor
# removes that singularity.
PENALTY_FLOOR = 1e-3


@dataclass(frozen=True)
class Evaluation:
    individual_id: int
    accuracy: float
    cost_total: int
    delta_c: float
    penalty: float
    fitness: float


def pen_acc(a_orig: float, a_hat: float, acc_thr: float) -> float:
    """Accuracy-degradation penalty with an exponential cliff below acc_thr."""
    if acc_thr > a_orig:
        raise ConfigError(f"accuracy threshold {acc_thr} exceeds original model accuracy {a_orig}")
    p = a_orig - a_hat
    if a_hat < acc_thr:
        p += math.exp(acc_thr - a_hat)
    return max(p, PENALTY_FLOOR)


def fitness(delta_c: float, penalty: float) -> float:
    """exp(delta_c) / penalty; maximizing this maximizes delta_c - log(penalty)."""
    return math.exp(delta_c) / penalty


def selection_probs(fitnesses) -> np.ndarray:
    """Min-subtracted fitness-proportionate probabilities; the weakest gets 0.

    All-equal fitnesses are a 0/0 case and fall back to the uniform
    distribution.
    """
    f = np.asarray(fitnesses, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("selection needs at least two fitness values")
    shifted = f - f.min()
    total = shifted.sum()
    if total == 0.0:
        return np.full(f.size, 1.0 / f.size)
    return shifted / total
