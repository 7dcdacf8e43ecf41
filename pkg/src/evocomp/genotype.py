"""Search-space definition and the bijective genotype -> compressed-architecture decoding.

A genotype is a length-d float vector. Pruning genes are continuous rates in
[0, 1] (fraction of channels/weights removed); rank genes are integer-valued
bins in 1..K that dequantize to concrete decomposition ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arch import CONV, DEPTHWISE_CONV, FULLY_CONNECTED, POINTWISE_CONV, ModelArch
from .errors import ConfigError, DomainError

# Compression methods requestable when building a space.
PRUNE_STRUCTURED = "prune_structured"
PRUNE_NONSTRUCTURED = "prune_nonstructured"
SVD = "svd"
TUCKER = "tucker"
METHODS = (PRUNE_STRUCTURED, PRUNE_NONSTRUCTURED, SVD, TUCKER)

# Per-gene roles; tucker contributes an (input-rank, output-rank) gene pair.
GENE_PRUNE_STRUCTURED = "prune_structured"
GENE_PRUNE_NONSTRUCTURED = "prune_nonstructured"
GENE_SVD = "svd"
GENE_TUCKER_IN = "tucker_in"
GENE_TUCKER_OUT = "tucker_out"

SVD_BINS = 64
TUCKER_BINS = 8


@dataclass(frozen=True)
class GeneSpec:
    layer_index: int
    role: str
    k_max: int | None  # None for continuous pruning genes, else 8 or 64

    @property
    def is_discrete(self) -> bool:
        return self.k_max is not None

    @property
    def is_pruning(self) -> bool:
        return self.role in (GENE_PRUNE_STRUCTURED, GENE_PRUNE_NONSTRUCTURED)


@dataclass(frozen=True)
class SearchSpace:
    arch: ModelArch
    genes: tuple[GeneSpec, ...]

    @property
    def d(self) -> int:
        return len(self.genes)

    @property
    def k_norm(self) -> np.ndarray:
        """Per-gene normalization constant: 1.0 for continuous genes, K for discrete."""
        return np.array([float(g.k_max) if g.is_discrete else 1.0 for g in self.genes])

    def identity_vector(self) -> np.ndarray:
        """The genotype decoding to the unmodified network: rate 0, full rank."""
        return np.array([float(g.k_max) if g.is_discrete else 0.0 for g in self.genes])


@dataclass(frozen=True)
class Pruned:
    rate: float
    structured: bool = True


@dataclass(frozen=True)
class SvdFactored:
    rank: int


@dataclass(frozen=True)
class TuckerFactored:
    rank_in: int
    rank_out: int


Transform = Pruned | SvdFactored | TuckerFactored


@dataclass(frozen=True)
class CompressedModelSpec:
    """Per-layer transformation lists, decomposition first, then pruning.

    An empty per-layer tuple leaves that layer unmodified.
    """

    arch_name: str
    layers: tuple[tuple[Transform, ...], ...]


def identity_spec(arch: ModelArch) -> CompressedModelSpec:
    return CompressedModelSpec(arch_name=arch.name, layers=tuple(() for _ in arch.layers))


def svd_eligible(layer) -> bool:
    return layer.kind in (FULLY_CONNECTED, POINTWISE_CONV)


def tucker_eligible(layer) -> bool:
    # Depthwise kernels have no c x f core to factor.
    return layer.kind == CONV and layer.k > 1


def build_search_space(arch: ModelArch, methods) -> SearchSpace:
    """One gene per (layer, hyperparameter); decomposition genes precede pruning genes.

    Gene order is fixed (decomposition in layer order, then pruning in layer
    order) so encodings are reproducible across runs.
    """
    methods = tuple(dict.fromkeys(methods))
    if not methods:
        raise ConfigError("no compression methods requested")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown compression method {m!r}; expected one of {METHODS}")
    if PRUNE_STRUCTURED in methods and PRUNE_NONSTRUCTURED in methods:
        raise ConfigError("structured and non-structured pruning cannot be combined in one space")

    genes: list[GeneSpec] = []
    if SVD in methods or TUCKER in methods:
        for layer in arch.layers:
            if SVD in methods and svd_eligible(layer):
                genes.append(GeneSpec(layer.index, GENE_SVD, SVD_BINS))
            if TUCKER in methods and tucker_eligible(layer):
                genes.append(GeneSpec(layer.index, GENE_TUCKER_IN, TUCKER_BINS))
                genes.append(GeneSpec(layer.index, GENE_TUCKER_OUT, TUCKER_BINS))
    for m in methods:
        if m in (PRUNE_STRUCTURED, PRUNE_NONSTRUCTURED):
            role = GENE_PRUNE_STRUCTURED if m == PRUNE_STRUCTURED else GENE_PRUNE_NONSTRUCTURED
            for layer in arch.layers:
                genes.append(GeneSpec(layer.index, role, None))

    for m in methods:
        eligible = {
            SVD: svd_eligible,
            TUCKER: tucker_eligible,
            PRUNE_STRUCTURED: lambda _l: True,
            PRUNE_NONSTRUCTURED: lambda _l: True,
        }[m]
        if not any(eligible(l) for l in arch.layers):
            raise ConfigError(f"method {m!r} applies to no layer of {arch.name!r}")

    return SearchSpace(arch=arch, genes=tuple(genes))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def dequantize_rank(bin_value: int, full_rank: int, bins: int) -> int:
    """Map an encoded bin b in 1..bins to a realizable rank, floored at 1."""
    return max(1, _round_half_up(bin_value * full_rank / bins))


def validate_individual(space: SearchSpace, x: np.ndarray) -> None:
    x = np.asarray(x, dtype=float)
    if x.shape != (space.d,):
        raise DomainError(f"genotype length {x.shape} does not match d={space.d}")
    for i, gene in enumerate(space.genes):
        v = x[i]
        if gene.is_discrete:
            if v != math.floor(v) or not (1 <= v <= gene.k_max):
                raise DomainError(f"gene {i}: {v!r} outside discrete domain 1..{gene.k_max}")
        elif not (0.0 <= v <= 1.0):
            raise DomainError(f"gene {i}: {v!r} outside [0, 1]")


def clamp_to_domain(space: SearchSpace, raw: np.ndarray) -> np.ndarray:
    """Clip continuous entries to [0,1]; round (half-up) and clamp discrete entries."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (space.d,):
        raise DomainError(f"vector length {raw.shape} does not match d={space.d}")
    out = raw.copy()
    for i, gene in enumerate(space.genes):
        if gene.is_discrete:
            out[i] = min(max(float(_round_half_up(out[i])), 1.0), float(gene.k_max))
        else:
            out[i] = min(max(out[i], 0.0), 1.0)
    return out


def decode(space: SearchSpace, x: np.ndarray) -> CompressedModelSpec:
    """Deterministically translate a genotype into per-layer transformations."""
    validate_individual(space, x)
    x = np.asarray(x, dtype=float)
    decomposition: dict[int, Transform] = {}
    pruning: dict[int, Pruned] = {}
    for i, gene in enumerate(space.genes):
        layer = space.arch.layers[gene.layer_index]
        v = x[i]
        if gene.role == GENE_SVD:
            r_full = min(layer.c, layer.f)
            decomposition[gene.layer_index] = SvdFactored(dequantize_rank(int(v), r_full, SVD_BINS))
        elif gene.role == GENE_TUCKER_IN:
            r1 = dequantize_rank(int(v), layer.c, TUCKER_BINS)
            cur = decomposition.get(gene.layer_index)
            r2 = cur.rank_out if isinstance(cur, TuckerFactored) else layer.f
            decomposition[gene.layer_index] = TuckerFactored(r1, r2)
        elif gene.role == GENE_TUCKER_OUT:
            r2 = dequantize_rank(int(v), layer.f, TUCKER_BINS)
            cur = decomposition.get(gene.layer_index)
            r1 = cur.rank_in if isinstance(cur, TuckerFactored) else layer.c
            decomposition[gene.layer_index] = TuckerFactored(r1, r2)
        else:
            pruning[gene.layer_index] = Pruned(float(v), structured=gene.role == GENE_PRUNE_STRUCTURED)

    layers = []
    for layer in space.arch.layers:
        transforms: list[Transform] = []
        if layer.index in decomposition:
            transforms.append(decomposition[layer.index])
        if layer.index in pruning:
            transforms.append(pruning[layer.index])
        layers.append(tuple(transforms))
    return CompressedModelSpec(arch_name=space.arch.name, layers=tuple(layers))
