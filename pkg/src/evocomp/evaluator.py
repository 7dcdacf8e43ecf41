"""Accuracy-oracle abstraction and the deterministic in-process surrogate.

The engine never sees model weights or data; it only consumes accuracies for
decoded compression specs. Tests and benchmarks run against the surrogate;
deployments point the same interface at external evaluator workers.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .arch import ModelArch
from .errors import ConfigError
from .genotype import CompressedModelSpec, Pruned, SvdFactored, TuckerFactored


class AccuracyOracle(ABC):
    """Maps compressed-model specs to validation accuracies (percentage points)."""

    @abstractmethod
    def evaluate_batch(self, specs: Sequence[CompressedModelSpec]) -> list[float]:
        """Order-aligned accuracies; must be deterministic per spec within a run."""

    def close(self) -> None:  # pragma: no cover - default no-op
        pass


def intensity_terms(arch: ModelArch, spec: CompressedModelSpec) -> list[tuple[str, float]]:
    """Canonical (key, intensity) list for a spec: layers ascending, transforms in order.

    Keys are "<layer>:<term>" with term one of prune/svd/tucker_in/tucker_out.
    Intensity is the pruning rate for pruning and 1 - r/R for ranks. The
    ordering is normative: reimplementations must accumulate terms in exactly
    this sequence to reproduce bit-identical accuracies.
    """
    terms: list[tuple[str, float]] = []
    for layer, transforms in zip(arch.layers, spec.layers):
        for t in transforms:
            if isinstance(t, Pruned):
                terms.append((f"{layer.index}:prune", t.rate))
            elif isinstance(t, SvdFactored):
                terms.append((f"{layer.index}:svd", 1.0 - t.rank / min(layer.c, layer.f)))
            elif isinstance(t, TuckerFactored):
                terms.append((f"{layer.index}:tucker_in", 1.0 - t.rank_in / layer.c))
                terms.append((f"{layer.index}:tucker_out", 1.0 - t.rank_out / layer.f))
    return terms


@dataclass(frozen=True)
class SurrogateModel:
    """Deterministic accuracy stand-in: base accuracy minus weighted intensities.

    accuracy = clamp(a0 - sum_i w_i*g_i - sum_ij v_ij*g_i*g_j, 0, 100).
    Weights are keyed like intensity_terms; interaction entries may be
    negative (sub-additive degradation) but never enough to break
    monotonicity.
    """

    base_accuracy: float
    weights: dict[str, float] = field(default_factory=dict)
    interactions: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.base_accuracy <= 100.0:
            raise ConfigError(f"base accuracy {self.base_accuracy} outside [0, 100]")
        for key, w in self.weights.items():
            if w < 0:
                raise ConfigError(f"surrogate weight for {key!r} must be non-negative, got {w}")
        # Monotonicity: dA/dg_i = -(w_i + sum_j v_ij g_j) must stay <= 0 over
        # the unit box, i.e. w_i has to cover the negative interaction mass.
        keys = set(self.weights)
        for k1, k2, _v in self.interactions:
            keys.update((k1, k2))
        for key in keys:
            neg = sum(max(-v, 0.0) for k1, k2, v in self.interactions if key in (k1, k2))
            if self.weights.get(key, 0.0) < neg:
                raise ConfigError(
                    f"surrogate term {key!r}: weight {self.weights.get(key, 0.0)} cannot cover "
                    f"negative interaction mass {neg}; accuracy would not be monotone"
                )


def surrogate_accuracy(model: SurrogateModel, arch: ModelArch, spec: CompressedModelSpec) -> float:
    """Evaluate the surrogate in the canonical term order (bit-reproducible)."""
    terms = intensity_terms(arch, spec)
    acc = model.base_accuracy
    for key, g in terms:
        acc -= model.weights.get(key, 0.0) * g
    gmap = dict(terms)
    for k1, k2, v in model.interactions:
        acc -= v * gmap.get(k1, 0.0) * gmap.get(k2, 0.0)
    return min(max(acc, 0.0), 100.0)


class SurrogateOracle(AccuracyOracle):
    def __init__(self, model: SurrogateModel, arch: ModelArch):
        self.model = model
        self.arch = arch

    def evaluate_batch(self, specs: Sequence[CompressedModelSpec]) -> list[float]:
        return [surrogate_accuracy(self.model, self.arch, s) for s in specs]


def surrogate_from_dict(doc: dict) -> SurrogateModel:
    if not isinstance(doc, dict) or "base_accuracy" not in doc:
        raise ConfigError("surrogate document needs a 'base_accuracy' field")
    weights = doc.get("weights", {})
    if not isinstance(weights, dict):
        raise ConfigError("surrogate 'weights' must be an object of term -> weight")
    interactions = doc.get("interactions", [])
    parsed = []
    for entry in interactions:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
            raise ConfigError(f"surrogate interaction {entry!r} must be [term, term, value]")
        parsed.append((str(entry[0]), str(entry[1]), float(entry[2])))
    return SurrogateModel(
        base_accuracy=float(doc["base_accuracy"]),
        weights={str(k): float(v) for k, v in weights.items()},
        interactions=tuple(parsed),
    )


def load_surrogate(path: str | Path) -> SurrogateModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read surrogate file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return surrogate_from_dict(doc)
