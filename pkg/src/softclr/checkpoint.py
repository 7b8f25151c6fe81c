"""Versioned binary checkpoint container with bit-exact round trips.

Layout: magic, format version, a JSON header (config, model spec, counters,
array manifest), then the raw little-endian float64 array bytes in manifest
order.  Every byte is a pure function of the run state, so identical runs
write identical files.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .membank import MemoryBank
from .model import MlpSpec, ModelParams
from .optim import OptimizerState

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"SCLRCKP1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    params: ModelParams
    optimizer: OptimizerState
    bank: MemoryBank | None
    epoch: int  # number of completed epochs
    step: int  # number of completed optimizer steps


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    arrays: dict[str, np.ndarray] = {}
    for key in sorted(ckpt.params.tensors):
        arrays[f"param/{key}"] = ckpt.params.tensors[key]
    for key in sorted(ckpt.optimizer.velocities):
        arrays[f"vel/{key}"] = ckpt.optimizer.velocities[key]
    bank_header = None
    if ckpt.bank is not None:
        arrays["bank/entries"] = ckpt.bank.snapshot()
        bank_header = {"capacity": ckpt.bank.capacity, "dim": ckpt.bank.dim}
    manifest = [
        {"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()
    ]
    header = {
        "config": ckpt.config.to_dict(),
        "spec": ckpt.params.spec.to_dict(),
        "bank": bank_header,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "optimizer_step": ckpt.optimizer.step,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for name in arrays:
            f.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        version, header_len = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(header_len).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            arrays[entry["name"]] = (
                np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            )
    config = RunConfig.from_dict(header["config"])
    spec = MlpSpec.from_dict(header["spec"])
    tensors = {
        name[len("param/") :]: arr
        for name, arr in arrays.items()
        if name.startswith("param/")
    }
    velocities = {
        name[len("vel/") :]: arr for name, arr in arrays.items() if name.startswith("vel/")
    }
    params = ModelParams(spec, tensors)
    optimizer = OptimizerState(velocities, step=int(header["optimizer_step"]))
    bank = None
    if header["bank"] is not None:
        bank = MemoryBank(header["bank"]["capacity"], header["bank"]["dim"])
        entries = arrays.get("bank/entries")
        if entries is not None and entries.size:
            bank.enqueue_batch(entries)
    return Checkpoint(
        config=config,
        params=params,
        optimizer=optimizer,
        bank=bank,
        epoch=int(header["epoch"]),
        step=int(header["step"]),
    )
