"""Line-delimited JSON wire protocol between the engine and evaluator workers.

One request object per line, one response per line:

    request:  {"arch": "<name>", "id": <int>, "spec": [[<transform>...], ...]}
    response: {"accuracy": <number>, "id": <int>}
              {"error": "<message>", "id": <int or null>}

Transforms: {"op":"prune_structured"|"prune_nonstructured","rate":<float>},
{"op":"svd","rank":<int>}, {"op":"tucker","rank_in":<int>,"rank_out":<int>}.
An empty per-layer list leaves the layer unmodified. Messages are encoded
canonically (sorted keys, no whitespace), so encode(decode(line)) is
byte-identical.
"""

from __future__ import annotations

import json

from .errors import ProtocolError
from .genotype import CompressedModelSpec, Pruned, SvdFactored, TuckerFactored


def canonical_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def spec_to_wire(spec: CompressedModelSpec) -> list:
    layers = []
    for transforms in spec.layers:
        entries = []
        for t in transforms:
            if isinstance(t, Pruned):
                op = "prune_structured" if t.structured else "prune_nonstructured"
                entries.append({"op": op, "rate": t.rate})
            elif isinstance(t, SvdFactored):
                entries.append({"op": "svd", "rank": t.rank})
            elif isinstance(t, TuckerFactored):
                entries.append({"op": "tucker", "rank_in": t.rank_in, "rank_out": t.rank_out})
            else:
                raise ProtocolError(f"unencodable transform {t!r}")
        layers.append(entries)
    return layers


def spec_from_wire(arch_name: str, layers) -> CompressedModelSpec:
    if not isinstance(layers, list):
        raise ProtocolError("spec must be a list of per-layer transform lists")
    decoded = []
    for i, entries in enumerate(layers):
        if not isinstance(entries, list):
            raise ProtocolError(f"layer {i}: transforms must be a list")
        transforms = []
        for entry in entries:
            if not isinstance(entry, dict) or "op" not in entry:
                raise ProtocolError(f"layer {i}: transform {entry!r} missing 'op'")
            op = entry["op"]
            try:
                if op in ("prune_structured", "prune_nonstructured"):
                    transforms.append(Pruned(float(entry["rate"]), structured=op == "prune_structured"))
                elif op == "svd":
                    transforms.append(SvdFactored(int(entry["rank"])))
                elif op == "tucker":
                    transforms.append(TuckerFactored(int(entry["rank_in"]), int(entry["rank_out"])))
                else:
                    raise ProtocolError(f"layer {i}: unknown op {op!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"layer {i}: bad transform {entry!r}: {exc}") from exc
        decoded.append(tuple(transforms))
    return CompressedModelSpec(arch_name=arch_name, layers=tuple(decoded))


def encode_request(request_id: int, arch_name: str, spec: CompressedModelSpec) -> str:
    return canonical_line({"arch": arch_name, "id": request_id, "spec": spec_to_wire(spec)})


def decode_request(line: str) -> tuple[int, str, CompressedModelSpec]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"request is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("request must be a JSON object")
    if not isinstance(obj.get("id"), int):
        raise ProtocolError("request 'id' must be an integer")
    if not isinstance(obj.get("arch"), str):
        raise ProtocolError("request 'arch' must be a string")
    spec = spec_from_wire(obj["arch"], obj.get("spec"))
    return obj["id"], obj["arch"], spec


def encode_response(request_id: int, accuracy: float) -> str:
    return canonical_line({"accuracy": accuracy, "id": request_id})


def encode_error(request_id: int | None, message: str) -> str:
    return canonical_line({"error": message, "id": request_id})


def decode_response(line: str) -> tuple[int | None, float | None, str | None]:
    """Return (id, accuracy, error); raises ProtocolError on malformed replies."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict) or "id" not in obj:
        raise ProtocolError("response must be an object with an 'id'")
    rid = obj["id"]
    if rid is not None and not isinstance(rid, int):
        raise ProtocolError(f"response id {rid!r} must be an integer or null")
    if "error" in obj:
        return rid, None, str(obj["error"])
    acc = obj.get("accuracy")
    if not isinstance(acc, (int, float)) or isinstance(acc, bool) or not 0.0 <= float(acc) <= 100.0:
        raise ProtocolError(f"response accuracy {acc!r} must be a number in [0, 100]")
    return rid, float(acc), None
