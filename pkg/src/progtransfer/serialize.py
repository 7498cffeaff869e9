"""Bit-exact binary serialization for networks and progressive models.

Layout: 4-byte magic, u32 format version, u32 header length, a JSON
header (sorted keys, no whitespace), then the raw float64 little-endian
row-major weight and bias arrays in header order. Identical parameters
always produce identical bytes, so frozen-column preservation can be
checked by byte comparison.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .nncore import LayerParams, NetworkParams
from .prognet import Column, ProgNetModel

MAGIC = b"PTNB"
FORMAT_VERSION = 1


def _array_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _net_header(params: NetworkParams) -> dict:
    return {
        "hidden_activation": params.hidden_activation,
        "output_activation": params.output_activation,
        "layers": [[lp.weights.shape[0], lp.weights.shape[1]] for lp in params.layers],
    }


def _net_payload(params: NetworkParams) -> bytes:
    chunks = []
    for lp in params.layers:
        chunks.append(_array_bytes(lp.weights))
        chunks.append(_array_bytes(lp.bias))
    return b"".join(chunks)


def _pack(header: dict, payload: bytes) -> bytes:
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(raw)) + raw + payload


def _unpack(data: bytes) -> tuple[dict, bytes]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise ParseError("not a model file: bad magic")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported model format version {version}")
    if len(data) < 12 + header_len:
        raise ParseError("truncated model file: header incomplete")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"corrupt model header: {exc}") from exc
    return header, data[12 + header_len:]


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        end = self.offset + count * 8
        if end > len(self.payload):
            raise ParseError("truncated model file: array data incomplete")
        arr = np.frombuffer(self.payload, dtype="<f8", count=count, offset=self.offset)
        self.offset = end
        return arr.reshape(shape).astype(np.float64)


def _read_net(header: dict, reader: _Reader) -> NetworkParams:
    layers = []
    for out_dim, in_dim in header["layers"]:
        w = reader.take((out_dim, in_dim))
        b = reader.take((out_dim,))
        layers.append(LayerParams(w, b))
    return NetworkParams(layers, header["hidden_activation"], header["output_activation"])


def network_to_bytes(params: NetworkParams) -> bytes:
    header = {"kind": "network", **_net_header(params)}
    return _pack(header, _net_payload(params))


def network_from_bytes(data: bytes) -> NetworkParams:
    header, payload = _unpack(data)
    if header.get("kind") != "network":
        raise ParseError(f"expected a network file, got kind={header.get('kind')!r}")
    return _read_net(header, _Reader(payload))


def model_to_bytes(model: ProgNetModel) -> bytes:
    header = {
        "kind": "prognet",
        "lateral_to_output": model.lateral_to_output,
        "dropout_on_laterals": model.dropout_on_laterals,
        "columns": [
            {"task_name": col.task_name, "frozen": col.frozen, **_net_header(col.params)}
            for col in model.columns
        ],
    }
    payload = b"".join(_net_payload(col.params) for col in model.columns)
    return _pack(header, payload)


def model_from_bytes(data: bytes) -> ProgNetModel:
    header, payload = _unpack(data)
    if header.get("kind") != "prognet":
        raise ParseError(f"expected a progressive model file, got kind={header.get('kind')!r}")
    reader = _Reader(payload)
    columns = [
        Column(_read_net(ch, reader), ch["frozen"], ch["task_name"])
        for ch in header["columns"]
    ]
    return ProgNetModel(columns, header["lateral_to_output"], header["dropout_on_laterals"])


def save_model(obj: NetworkParams | ProgNetModel, path: str | Path) -> None:
    if isinstance(obj, ProgNetModel):
        data = model_to_bytes(obj)
    elif isinstance(obj, NetworkParams):
        data = network_to_bytes(obj)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    Path(path).write_bytes(data)


def load_model(path: str | Path) -> NetworkParams | ProgNetModel:
    data = Path(path).read_bytes()
    header, _ = _unpack(data)
    kind = header.get("kind")
    if kind == "network":
        return network_from_bytes(data)
    if kind == "prognet":
        return model_from_bytes(data)
    raise ParseError(f"unknown model kind {kind!r}")
