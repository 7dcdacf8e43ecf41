"""Per-gene feasibility boundaries under the accuracy threshold, and directed sampling.

Each gene is probed in isolation (all other genes at identity) with a binary
search that assumes monotone accuracy: more compression never helps. Probes
for distinct genes are batched into single oracle calls per search round and
merged by gene index, so results are deterministic regardless of oracle
parallelism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arch import ModelArch
from .errors import ConfigError
from .evaluator import AccuracyOracle
from .genotype import SearchSpace, decode, identity_spec

DEFAULT_RESOLUTION = 64  # grid divisions for continuous genes


@dataclass(frozen=True)
class BoundsVector:
    """theta[i]: max feasible pruning rate, or min feasible encoded rank."""

    theta: np.ndarray


class _GeneSearch:
    """Binary-search state for one gene over its feasibility grid."""

    def __init__(self, gene_index: int, space: SearchSpace, divisions: int):
        gene = space.genes[gene_index]
        self.gene_index = gene_index
        self.discrete = gene.is_discrete
        self.divisions = gene.k_max - 1 if gene.is_discrete else divisions
        self.lo = 0  # known feasible (identity end)
        self.hi = self.divisions  # candidate extreme
        self.probes = 0
        self.done = False
        self.theta: float | None = None
        self._space = space
        self._gene = gene

    def value_at(self, step: int) -> float:
        # step 0 is the identity end of the grid, step `divisions` the most
        # aggressive compression.
        if self.discrete:
            return float(self._gene.k_max - step)
        return step / self.divisions

    def next_probe(self) -> float:
        if self.probes == 0:
            return self.value_at(self.divisions)
        return self.value_at((self.lo + self.hi) // 2)

    def record(self, probed_step: int, feasible: bool) -> None:
        self.probes += 1
        if probed_step == self.divisions and feasible:
            self.theta = self.value_at(self.divisions)
            self.done = True
            return
        if feasible:
            self.lo = probed_step
        else:
            self.hi = probed_step
        if self.hi - self.lo <= 1:
            self.theta = self.value_at(self.lo)
            self.done = True

    def step_of(self, value: float) -> int:
        if self.discrete:
            return self._gene.k_max - int(value)
        return round(value * self.divisions)


def characterize_bounds(
    space: SearchSpace,
    oracle: AccuracyOracle,
    acc_thr: float,
    resolution: int | float = DEFAULT_RESOLUTION,
) -> tuple[BoundsVector, np.ndarray]:
    """Boundary vector theta plus per-gene probe counts.

    Feasibility is strict: a probe passes only when accuracy > acc_thr.
    The identity compression must pass, otherwise the threshold is
    unreachable and the configuration is rejected.
    """
    if resolution <= 0:
        raise ConfigError(f"resolution must be positive, got {resolution!r}")
    divisions = int(resolution) if resolution >= 2 else round(1.0 / float(resolution))
    if divisions < 1:
        raise ConfigError(f"resolution {resolution!r} yields no grid")

    identity_acc = oracle.evaluate_batch([identity_spec(space.arch)])[0]
    if not identity_acc > acc_thr:
        raise ConfigError(
            f"accuracy threshold {acc_thr} is not met even by the uncompressed model ({identity_acc})"
        )

    identity = space.identity_vector()
    searches = [_GeneSearch(i, space, divisions) for i in range(space.d)]
    while any(not s.done for s in searches):
        active = [s for s in searches if not s.done]
        probes = [(s, s.next_probe()) for s in active]
        specs = []
        for s, value in probes:
            x = identity.copy()
            x[s.gene_index] = value
            specs.append(decode(space, x))
        accuracies = oracle.evaluate_batch(specs)
        for (s, value), acc in zip(probes, accuracies):
            s.record(s.step_of(value), acc > acc_thr)

    theta = np.array([s.theta for s in searches])
    counts = np.array([s.probes for s in searches])
    return BoundsVector(theta=theta), counts


def search_volume_reduction(space: SearchSpace, bounds: BoundsVector) -> float:
    """Fraction of the original search volume admitted by the bounds.

    Continuous genes contribute theta[i]; discrete genes the count of
    admissible encoded ranks {theta[i]..K_i} over K_i.
    """
    frac = 1.0
    for gene, t in zip(space.genes, bounds.theta):
        if gene.is_discrete:
            frac *= (gene.k_max - t + 1) / gene.k_max
        else:
            frac *= t
    return frac


def sample_initial(space: SearchSpace, bounds: BoundsVector, n: int, rng: np.random.Generator) -> np.ndarray:
    """Directed initial population inside the characterized region.

    Pruning genes draw from Normal(theta/2, theta/2) clipped to [0, theta];
    rank genes draw uniformly from the admissible encoded set.
    """
    out = np.empty((n, space.d))
    for i, (gene, t) in enumerate(zip(space.genes, bounds.theta)):
        if gene.is_discrete:
            out[:, i] = rng.integers(int(t), gene.k_max + 1, size=n).astype(float)
        else:
            col = rng.normal(t / 2.0, t / 2.0, size=n) if t > 0 else np.zeros(n)
            out[:, i] = np.clip(col, 0.0, t)
    return out


def sample_naive(space: SearchSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sampling over the full gene domains (the undirected baseline)."""
    out = np.empty((n, space.d))
    for i, gene in enumerate(space.genes):
        if gene.is_discrete:
            out[:, i] = rng.integers(1, gene.k_max + 1, size=n).astype(float)
        else:
            out[:, i] = rng.random(size=n)
    return out


def save_bounds(path: str | Path, space: SearchSpace, bounds: BoundsVector, probe_counts=None) -> None:
    doc = {
        "arch": space.arch.name,
        "genes": [
            {"layer": g.layer_index, "role": g.role, "theta": float(t)}
            for g, t in zip(space.genes, bounds.theta)
        ],
    }
    if probe_counts is not None:
        doc["probe_counts"] = [int(c) for c in probe_counts]
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_bounds(path: str | Path, space: SearchSpace) -> BoundsVector:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read bounds file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    genes = doc.get("genes")
    if not isinstance(genes, list) or len(genes) != space.d:
        raise ConfigError(f"{path}: bounds cover {len(genes or [])} genes, space has {space.d}")
    theta = np.empty(space.d)
    for i, (gene, entry) in enumerate(zip(space.genes, genes)):
        if entry.get("layer") != gene.layer_index or entry.get("role") != gene.role:
            raise ConfigError(f"{path}: gene {i} is ({entry.get('layer')}, {entry.get('role')}), "
                              f"space expects ({gene.layer_index}, {gene.role})")
        theta[i] = float(entry["theta"])
    bounds = BoundsVector(theta=theta)
    for gene, t in zip(space.genes, theta):
        if gene.is_discrete and not (1 <= t <= gene.k_max):
            raise ConfigError(f"{path}: theta {t} outside 1..{gene.k_max}")
        if not gene.is_discrete and not (0.0 <= t <= 1.0):
            raise ConfigError(f"{path}: theta {t} outside [0, 1]")
    return bounds
