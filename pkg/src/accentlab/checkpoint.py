"""Single-file checkpoint archive.

Layout: 8-byte magic, 8-byte little-endian header length, a JSON header
(embedded model config, metadata, and an array directory with offsets),
then the raw little-endian array bytes in directory order. Writing the
same state twice produces byte-identical files, which the training loop
relies on for its save/load/save regression check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DataError

MAGIC = b"ACLCKPT1"


@dataclass
class Archive:
    arrays: dict[str, np.ndarray]
    config: dict
    meta: dict


def save_archive(path, arrays: dict[str, np.ndarray], config: dict,
                 meta: dict | None = None) -> None:
    directory = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        blob = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
        directory.append({"name": name, "dtype": arr.dtype.str,
                          "shape": list(arr.shape), "offset": offset,
                          "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config": config, "meta": meta or {},
                         "arrays": directory},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_archive(path) -> Archive:
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}")
    with fh:
        if fh.read(8) != MAGIC:
            raise DataError(f"{path} is not a checkpoint archive")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    arrays = {}
    for item in header["arrays"]:
        start, nbytes = item["offset"], item["nbytes"]
        arr = np.frombuffer(payload[start:start + nbytes],
                            dtype=np.dtype(item["dtype"]))
        arrays[item["name"]] = arr.reshape(item["shape"]).copy()
    return Archive(arrays=arrays, config=header["config"], meta=header["meta"])


def module_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {name: tensor.detach().cpu().numpy()
            for name, tensor in module.state_dict().items()}


def load_module_arrays(module: torch.nn.Module,
                       arrays: dict[str, np.ndarray]) -> None:
    """Load arrays into a module, reporting every name/shape mismatch at once."""
    state = module.state_dict()
    problems = []
    for name, tensor in state.items():
        if name not in arrays:
            problems.append(f"missing array {name!r}")
        elif tuple(arrays[name].shape) != tuple(tensor.shape):
            problems.append(
                f"shape mismatch for {name!r}: archive "
                f"{tuple(arrays[name].shape)} vs model {tuple(tensor.shape)}")
    for name in arrays:
        if name not in state:
            problems.append(f"unexpected array {name!r}")
    if problems:
        raise DataError("checkpoint does not match model: " + "; ".join(problems))
    module.load_state_dict({
        name: torch.as_tensor(arrays[name]).to(state[name].dtype)
        for name in state
    })
