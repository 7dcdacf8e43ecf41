"""Analytical hardware-cost accounting for original and compressed architectures.

FLOPs use the MAC convention (1 multiply-accumulate = 1 FLOP); the normalized
cost delta is convention-invariant, so ratios are unaffected by that choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .arch import DEPTHWISE_CONV, LayerSpec, ModelArch
from .genotype import CompressedModelSpec, Pruned, SvdFactored, TuckerFactored

FLOPS = "flops"
PARAMS = "params"
METRICS = (FLOPS, PARAMS)


@dataclass(frozen=True)
class CostReport:
    total: int
    per_layer: tuple[int, ...]
    delta_c: float  # (C(M) - C(compressed)) / C(M)


def _dense_cost(layer: LayerSpec, c_eff: int, f_eff: int, metric: str) -> int:
    spatial = layer.h_out * layer.w_out if metric == FLOPS else 1
    if layer.kind == DEPTHWISE_CONV:
        # One k x k kernel per surviving channel; inherited and own pruning
        # both shrink the channel count.
        return layer.k * layer.k * min(c_eff, f_eff) * spatial
    return layer.k * layer.k * c_eff * f_eff * spatial


def layer_cost(layer: LayerSpec, metric: str) -> int:
    """Cost of one uncompressed layer under the chosen metric."""
    if metric not in METRICS:
        raise ValueError(f"unknown cost metric {metric!r}")
    return _dense_cost(layer, layer.c, layer.f, metric)


def _factored_cost(layer: LayerSpec, t, c_eff: int, f_eff: int, metric: str) -> int:
    spatial = layer.h_out * layer.w_out if metric == FLOPS else 1
    if isinstance(t, SvdFactored):
        return t.rank * (c_eff + f_eff) * spatial
    return (c_eff * t.rank_in + layer.k * layer.k * t.rank_in * t.rank_out + t.rank_out * f_eff) * spatial


def compressed_cost(arch: ModelArch, spec: CompressedModelSpec, metric: str) -> CostReport:
    """Per-layer and total cost of a compressed architecture plus its delta_c.

    Structured pruning removes floor(p*f) output channels and, when the
    predecessor propagates, the successor's matching input channels. A
    factored layer costing at least its dense equivalent is charged the dense
    cost (a deployment would skip the factorization). Non-structured pruning
    only reduces parameter counts, never dense FLOPs.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown cost metric {metric!r}")
    if len(spec.layers) != len(arch.layers):
        raise ValueError(
            f"spec has {len(spec.layers)} layers but architecture {arch.name!r} has {len(arch.layers)}"
        )

    per_layer = []
    prev_f_eff: int | None = None
    prev_propagates = False
    for layer, transforms in zip(arch.layers, spec.layers):
        c_eff = prev_f_eff if prev_propagates and prev_f_eff is not None else layer.c
        prune = next((t for t in transforms if isinstance(t, Pruned)), None)
        factored = next((t for t in transforms if not isinstance(t, Pruned)), None)

        f_eff = layer.f
        if prune is not None and prune.structured:
            f_eff = layer.f - math.floor(prune.rate * layer.f)

        cost = _dense_cost(layer, c_eff, f_eff, metric)
        if factored is not None:
            cost = min(cost, _factored_cost(layer, factored, c_eff, f_eff, metric))
        if prune is not None and not prune.structured and metric == PARAMS:
            cost = cost - math.floor(prune.rate * cost)

        per_layer.append(cost)
        prev_f_eff = f_eff
        prev_propagates = layer.propagate_pruning

    original = sum(layer_cost(l, metric) for l in arch.layers)
    total = sum(per_layer)
    return CostReport(total=total, per_layer=tuple(per_layer), delta_c=(original - total) / original)


def model_cost(arch: ModelArch, metric: str) -> CostReport:
    per_layer = tuple(layer_cost(l, metric) for l in arch.layers)
    return CostReport(total=sum(per_layer), per_layer=per_layer, delta_c=0.0)
