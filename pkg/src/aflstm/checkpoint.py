"""Versioned binary checkpoints.

Layout::

    b"AFLSTM-CKPT\\n"
    uint64 little-endian header length
    header: UTF-8 JSON (sorted keys) with format_version, model config,
            majority class, vocabulary, label names, tensor table, sha256
    payload: concatenated little-endian float64 tensors in table order

The same model state always serializes to the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Vocabulary
from .model import Model, ModelConfig

MAGIC = b"AFLSTM-CKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dumps(model: Model, vocab: Vocabulary | None = None,
          labels: Sequence[str] | None = None) -> bytes:
    table, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "majority_class": model.majority_class,
        "vocab": None if vocab is None else vocab.tokens,
        "labels": None if labels is None else list(labels),
        "tensors": table,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def save_checkpoint(path, model: Model, vocab: Vocabulary | None = None,
                    labels: Sequence[str] | None = None) -> None:
    atomic_write(path, dumps(model, vocab, labels))


def loads(blob: bytes) -> tuple[Model, Vocabulary | None, list[str] | None]:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
        start = len(MAGIC) + 8
        header = json.loads(blob[start:start + n].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    payload = blob[start + n:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError("checkpoint payload checksum mismatch")

    config = ModelConfig.from_dict(header["config"])
    model = Model(config)
    state = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        state[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
    expected = {name for name, _ in model.named_parameters()}
    if set(state) != expected:
        raise CheckpointError(f"tensor names {sorted(state)} do not match model {sorted(expected)}")
    try:
        model.load_state(state)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    model.majority_class = header["majority_class"]
    vocab = None
    if header["vocab"] is not None:
        vocab = Vocabulary(header["vocab"][2:])
    return model, vocab, header["labels"]


def load_checkpoint(path) -> tuple[Model, Vocabulary | None, list[str] | None]:
    return loads(Path(path).read_bytes())
