"""ParamBlock checkpoints: a text header of names and shapes, then raw '<f8' data."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .mlp import ParamBlock

MAGIC = "TRAMLAB-PARAMS 1"


def dumps(blocks: dict[str, ParamBlock]) -> bytes:
    lines = [MAGIC]
    chunks = []
    for block_name, block in blocks.items():
        for name, arr in block.items():
            shape = ",".join(str(s) for s in arr.shape)
            lines.append(f"{block_name}/{name} {shape}")
            chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("ascii") + b"".join(chunks)


def loads(data: bytes) -> dict[str, ParamBlock]:
    buf = io.BytesIO(data)
    if buf.readline().decode("ascii").strip() != MAGIC:
        raise ValueError("not a parameter checkpoint")
    entries = []
    while True:
        line = buf.readline().decode("ascii")
        if not line:
            raise ValueError("truncated header")
        line = line.strip()
        if line == "END":
            break
        key, shape = line.rsplit(" ", 1)
        entries.append((key, tuple(int(s) for s in shape.split(",") if s)))
    blocks: dict[str, ParamBlock] = {}
    for key, shape in entries:
        count = int(np.prod(shape, dtype=int))
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"truncated data for {key}")
        block_name, name = key.split("/", 1)
        arr = np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)
        blocks.setdefault(block_name, ParamBlock()).arrays[name] = arr
    if buf.read(1):
        raise ValueError("trailing bytes after parameter data")
    return blocks


def save(path: str | Path, blocks: dict[str, ParamBlock]) -> None:
    Path(path).write_bytes(dumps(blocks))


def load(path: str | Path) -> dict[str, ParamBlock]:
    return loads(Path(path).read_bytes())
