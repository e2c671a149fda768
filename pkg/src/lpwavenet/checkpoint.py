"""Checkpoint container: JSON header line + raw little-endian payload.

The first line of the file is a compact JSON object describing the
format version, the full training configuration (with its hash), the
step count, optional feature normalization stats, and a tensor
directory (name, shape, dtype, byte offset).  Everything after the
newline is the concatenated tensor payload.  Round trips are bit-exact
because tensors are written and read as raw bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .features import NormStats
from .net import config_hash

CHECKPOINT_VERSION = 1
_DTYPES = {"float64": "<f8", "float32": "<f4"}


@dataclass
class Checkpoint:
    config: dict           # full training/model config dict
    params: dict           # name -> np.ndarray
    opt_state: dict        # name -> np.ndarray ("adam.m.*", "adam.v.*")
    step: int
    stats: NormStats | None
    hash: str


def save_checkpoint(path, config: dict, params: dict, opt_state: dict | None,
                    step: int, stats: NormStats | None = None) -> str:
    path = Path(path)
    tensors = dict(params)
    if opt_state:
        tensors.update(opt_state)
    directory = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.float64:
            dtype = "float64"
        elif arr.dtype == np.float32:
            dtype = "float32"
        else:
            raise FormatError(f"unsupported tensor dtype {arr.dtype} for {name}")
        blob = arr.astype(_DTYPES[dtype], copy=False).tobytes()
        directory.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype,
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": config,
        "config_hash": config_hash(config),
        "step": step,
        "stats": stats.to_dict() if stats is not None else None,
        "tensors": directory,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)
    return header["config_hash"]


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a checkpoint file ({exc})") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version")
    if config_hash(header["config"]) != header["config_hash"]:
        raise FormatError(f"{path}: config hash mismatch; file corrupted or edited")
    params, opt_state = {}, {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise FormatError(f"{path}: truncated payload at {entry['name']}")
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]])
        arr = arr.reshape(entry["shape"]).copy()
        if entry["name"].startswith("adam."):
            opt_state[entry["name"]] = arr
        else:
            params[entry["name"]] = arr
    stats = header.get("stats")
    return Checkpoint(
        config=header["config"],
        params=params,
        opt_state=opt_state,
        step=header["step"],
        stats=NormStats.from_dict(stats) if stats else None,
        hash=header["config_hash"],
    )
