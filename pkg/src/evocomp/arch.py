"""Layer descriptors for the uncompressed network and the architecture file parser."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

CONV = "conv"
POINTWISE_CONV = "pointwise_conv"
DEPTHWISE_CONV = "depthwise_conv"
FULLY_CONNECTED = "fully_connected"

LAYER_KINDS = (CONV, POINTWISE_CONV, DEPTHWISE_CONV, FULLY_CONNECTED)


@dataclass(frozen=True)
class LayerSpec:
    """One weighted layer: kernel k, in/out channels c/f, output spatial extent.

    propagate_pruning marks whether removing this layer's output channels
    shrinks the next layer's effective inputs (off across skip connections
    or other chain breaks not modelled here).
    """

    index: int
    kind: str
    k: int
    c: int
    f: int
    h_out: int
    w_out: int
    propagate_pruning: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"layer {self.index}: unknown kind {self.kind!r}")
        for name in ("k", "c", "f", "h_out", "w_out"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"layer {self.index}: {name} must be a positive integer, got {v!r}")
        if self.kind == POINTWISE_CONV and self.k != 1:
            raise ConfigError(f"layer {self.index}: pointwise_conv requires k=1, got k={self.k}")
        if self.kind == FULLY_CONNECTED and (self.k != 1 or self.h_out != 1 or self.w_out != 1):
            raise ConfigError(f"layer {self.index}: fully_connected requires k=1 and 1x1 output")


@dataclass(frozen=True)
class ModelArch:
    """Ordered chain of weighted layers."""

    name: str
    layers: tuple[LayerSpec, ...] = field(default=())

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("architecture has no layers")
        for i, layer in enumerate(self.layers):
            if layer.index != i:
                raise ConfigError(f"layer indices must be contiguous from 0, got {layer.index} at position {i}")
        # A propagating predecessor feeds its outputs straight into the next
        # layer, so the declared widths must agree or pruned-channel
        # accounting would corrupt even the uncompressed cost.
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.propagate_pruning and prev.f != cur.c:
                raise ConfigError(
                    f"layer {cur.index}: in_channels {cur.c} != predecessor out_channels "
                    f"{prev.f} while layer {prev.index} has propagate_pruning=true"
                )

    def __len__(self) -> int:
        return len(self.layers)


_LAYER_FIELDS = {"kind", "k", "c", "f", "h_out", "w_out", "propagate_pruning"}
_LAYER_DEFAULTS = {"k": 1, "h_out": 1, "w_out": 1, "propagate_pruning": True}


def arch_from_dict(doc: dict, name: str = "model") -> ModelArch:
    if not isinstance(doc, dict):
        raise ConfigError("architecture document must be a JSON object")
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise ConfigError("architecture document needs a non-empty 'layers' array")
    layers = []
    for i, entry in enumerate(layers_doc):
        if not isinstance(entry, dict):
            raise ConfigError(f"layer {i}: expected an object, got {type(entry).__name__}")
        unknown = set(entry) - _LAYER_FIELDS
        if unknown:
            raise ConfigError(f"layer {i}: unknown fields {sorted(unknown)}")
        if "kind" not in entry:
            raise ConfigError(f"layer {i}: missing 'kind'")
        fields = dict(_LAYER_DEFAULTS)
        fields.update(entry)
        layers.append(LayerSpec(index=i, **fields))
    return ModelArch(name=str(doc.get("name", name)), layers=tuple(layers))


def load_arch(path: str | Path) -> ModelArch:
    """Parse an architecture JSON file; syntax errors carry line/column info."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read architecture file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return arch_from_dict(doc, name=path.stem)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def arch_to_dict(arch: ModelArch) -> dict:
    return {
        "name": arch.name,
        "layers": [
            {
                "kind": l.kind,
                "k": l.k,
                "c": l.c,
                "f": l.f,
                "h_out": l.h_out,
                "w_out": l.w_out,
                "propagate_pruning": l.propagate_pruning,
            }
            for l in arch.layers
        ],
    }
