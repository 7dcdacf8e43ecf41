"""Selection, distance-paired crossover, diversity, and diversity-adaptive mutation.

All operations are pure given an explicit numpy Generator; the engine owns the
single stochastic stream, so identical seeds give identical populations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .genotype import SearchSpace
from .scoring import selection_probs


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    iterations: int = 50
    p_cross: float = 0.8
    p_swap: float = 0.2
    p_tweak: float = 0.05
    sigma_eta_sq: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2 != 0:
            raise ConfigError(f"population_size must be a positive even integer, got {self.population_size}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be non-negative, got {self.iterations}")
        for name in ("p_cross", "p_swap", "p_tweak"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.sigma_eta_sq <= 0.0:
            raise ConfigError(f"sigma_eta_sq must be positive, got {self.sigma_eta_sq}")


def select(fitnesses, rng: np.random.Generator) -> np.ndarray:
    """N index draws with replacement; the weakest individual is never drawn."""
    probs = selection_probs(fitnesses)
    return rng.choice(probs.size, size=probs.size, replace=True, p=probs)


def distance(x1: np.ndarray, x2: np.ndarray, space: SearchSpace) -> float:
    """(1/d) * sqrt(sum_i ((x1[i]-x2[i]) / K_i)^2), K_i the gene's maximum value."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (space.d,) or x2.shape != (space.d,):
        raise ValueError("individuals do not match the search space dimension")
    scaled = (x1 - x2) / space.k_norm
    return math.sqrt(float(np.dot(scaled, scaled))) / space.d


def pair_parents(members: np.ndarray, fitnesses: np.ndarray, space: SearchSpace) -> list[tuple[int, int]]:
    """Greedy pairing: fittest remaining first, its farthest remaining partner second.

    Ties (equal fitness or equal distance) break toward the lower index, so
    pairing is deterministic. Every member appears in exactly one pair.
    """
    n = len(members)
    if n % 2 != 0:
        raise ValueError("pairing requires an even population")
    order = sorted(range(n), key=lambda i: (-fitnesses[i], i))
    remaining = list(order)
    pairs = []
    while remaining:
        p1 = remaining.pop(0)
        dists = [distance(members[p1], members[j], space) for j in remaining]
        far = remaining[max(range(len(remaining)), key=lambda idx: (dists[idx], -remaining[idx]))]
        remaining.remove(far)
        pairs.append((p1, far))
    return pairs


def crossover(p1: np.ndarray, p2: np.ndarray, cfg: GAConfig, rng: np.random.Generator):
    """With probability p_cross, swap each position independently with probability p_swap."""
    c1 = np.array(p1, dtype=float, copy=True)
    c2 = np.array(p2, dtype=float, copy=True)
    if rng.random() < cfg.p_cross:
        mask = rng.random(c1.size) < cfg.p_swap
        swapped = c1[mask].copy()
        c1[mask] = c2[mask]
        c2[mask] = swapped
    return c1, c2


def diversity(members) -> float:
    """Mean squared dispersion of the population around its per-gene mean."""
    x = np.asarray(members, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("diversity needs a non-empty 2-D population")
    centered = x - x.mean(axis=0)
    return float((centered * centered).sum() / x.shape[0])


def effective_perturbation_variance(space: SearchSpace, cfg: GAConfig) -> float:
    """Per-gene mean mutation variance: sigma_eta_sq for continuous genes, 1 for +/-1 steps."""
    per_gene = [1.0 if g.is_discrete else cfg.sigma_eta_sq for g in space.genes]
    return sum(per_gene) / len(per_gene)


def adapt_mutation_rate(div_current: float, div_target: float, space: SearchSpace, cfg: GAConfig) -> float:
    """Invert the diversity recurrence div' = div + d * P_M * sigma^2 for the deficit."""
    sigma_sq = effective_perturbation_variance(space, cfg)
    p_m = max(0.0, (div_target - div_current) / (space.d * sigma_sq))
    return min(p_m / cfg.p_tweak, 1.0)


def mutate(x: np.ndarray, space: SearchSpace, p_mutate: float, cfg: GAConfig, rng: np.random.Generator) -> np.ndarray:
    """Tweak each gene with probability p_tweak once the individual-level gate fires.

    Continuous genes add Normal(0, sigma_eta_sq) noise and clip to [0, 1];
    discrete genes step +/-1 and clamp to 1..K. The output always stays
    in-domain (closure).
    """
    out = np.array(x, dtype=float, copy=True)
    if rng.random() >= p_mutate:
        return out
    tweak = rng.random(space.d) < cfg.p_tweak
    eta = rng.normal(0.0, math.sqrt(cfg.sigma_eta_sq), space.d)
    steps = rng.integers(0, 2, space.d) * 2 - 1
    for i, gene in enumerate(space.genes):
        if not tweak[i]:
            continue
        if gene.is_discrete:
            out[i] = min(max(out[i] + steps[i], 1.0), float(gene.k_max))
        else:
            out[i] = min(max(out[i] + eta[i], 0.0), 1.0)
    return out
