"""Flat binary checkpoint of named float64 tensors.

Layout (all integers little-endian)::

    bytes 0-7    magic b"OVAIBCKP"
    bytes 8-11   uint32 format version (1)
    bytes 12-19  uint64 header length H
    next H bytes UTF-8 JSON header
    remainder    tensor payloads, float64 little-endian, C order

The header holds ``{"version", "seed", "meta", "tensors": [{"name", "shape",
"offset"}]}`` where ``offset`` counts bytes from the start of the payload.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import MlpParams
from .errors import ConfigError

MAGIC = b"OVAIBCKP"
VERSION = 1


def write_tensors(path, tensors, seed=None, meta=None):
    """Write an ordered mapping ``name -> array``."""
    entries, payload, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        payload.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps(
        {"version": VERSION, "seed": seed, "meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for chunk in payload:
            fh.write(chunk)
    return path


def read_tensors(path):
    """Return ``(tensors, header)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path} is not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = base + entry["offset"]
        if start + 8 * count > len(raw):
            raise ConfigError(f"{path} is truncated (tensor {entry['name']!r})")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    return tensors, header


def _mlp_tensors(prefix, params):
    out = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}.layer{i}.weight"] = w
        out[f"{prefix}.layer{i}.bias"] = b
    return out


def _mlp_from(tensors, prefix, activations, slope):
    weights = [tensors[f"{prefix}.layer{i}.weight"] for i in range(len(activations))]
    biases = [tensors[f"{prefix}.layer{i}.bias"] for i in range(len(activations))]
    return MlpParams(weights, biases, list(activations), slope)


def save_models(path, encoders, projectors=None, seed=None, config=None):
    tensors, meta = {}, {"encoders": [], "projectors": [], "config": config}
    for m, enc in enumerate(encoders):
        tensors.update(_mlp_tensors(f"encoder{m}", enc))
        meta["encoders"].append({"activations": enc.activations, "slope": enc.slope})
    for m, proj in enumerate(projectors or []):
        tensors.update(_mlp_tensors(f"projector{m}", proj))
        meta["projectors"].append({"activations": proj.activations, "slope": proj.slope})
    return write_tensors(path, tensors, seed=seed, meta=meta)


def load_models(path):
    """Return ``(encoders, projectors, header)``."""
    tensors, header = read_tensors(path)
    meta = header["meta"]
    encoders = [
        _mlp_from(tensors, f"encoder{m}", e["activations"], e["slope"])
        for m, e in enumerate(meta["encoders"])
    ]
    projectors = [
        _mlp_from(tensors, f"projector{m}", p["activations"], p["slope"])
        for m, p in enumerate(meta["projectors"])
    ] or None
    return encoders, projectors, header
