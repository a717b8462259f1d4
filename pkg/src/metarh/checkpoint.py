"""Single-file binary checkpoints.

Layout (all integers little-endian):

    magic  b"MRH1"
    header uint32 x5: dim, n_entities, n_relations, depth, n_heads
    vocab  32-byte SHA-256 of the canonical vocabulary JSON
    config uint32 length + UTF-8 JSON (model config, step, extras)
    blocks uint32 tensor count, then per tensor:
             uint16 name length + name bytes
             uint32 ndim + uint32 per axis
             raw float64 little-endian data
    trailer 32-byte SHA-256 of everything before it

Round-trips are bit-identical; loading verifies the trailer checksum and,
when the caller supplies one, the vocabulary hash.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .exceptions import CheckpointError
from .model import MetaRHModule

MAGIC = b"MRH1"


def _pack_tensor(buf: io.BytesIO, name: str, tensor: torch.Tensor) -> None:
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f8")
    buf.write(struct.pack("<I", array.ndim))
    for size in array.shape:
        buf.write(struct.pack("<I", size))
    buf.write(array.tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(model: MetaRHModule, vocab_hash: bytes,
                    path: str | Path, step: int = 0,
                    extra: dict | None = None) -> None:
    if len(vocab_hash) != 32:
        raise CheckpointError("vocabulary hash must be 32 bytes")
    cfg = model.config()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<5I", cfg["dim"], cfg["n_entities"],
                          cfg["n_relations"], cfg["depth"], cfg["n_heads"]))
    buf.write(vocab_hash)
    payload = json.dumps(
        {"model": cfg, "step": step, "extra": extra or {}},
        sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(payload)))
    buf.write(payload)
    state = model.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        _pack_tensor(buf, name, tensor)
    body = buf.getvalue()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_checkpoint(path: str | Path,
                    expected_vocab_hash: bytes | None = None
                    ) -> tuple[MetaRHModule, dict]:
    """Restore a model plus its metadata {model, step, extra, vocab_hash}."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 32:
        raise CheckpointError(f"{path}: not a checkpoint (too short)")
    body, trailer = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != trailer:
        raise CheckpointError(f"{path}: trailer checksum mismatch")
    reader = _Reader(body)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    dim, n_entities, n_relations, depth, n_heads = reader.unpack("<5I")
    vocab_hash = reader.take(32)
    if expected_vocab_hash is not None and vocab_hash != expected_vocab_hash:
        raise CheckpointError(
            f"{path}: checkpoint was trained on a different vocabulary")
    (cfg_len,) = reader.unpack("<I")
    meta = json.loads(reader.take(cfg_len).decode("utf-8"))
    cfg = meta["model"]
    header = (dim, n_entities, n_relations, depth, n_heads)
    config_header = (cfg["dim"], cfg["n_entities"], cfg["n_relations"],
                     cfg["depth"], cfg["n_heads"])
    if header != config_header:
        raise CheckpointError(f"{path}: header disagrees with config block")

    model = MetaRHModule.from_config(cfg)
    (n_tensors,) = reader.unpack("<I")
    state = {}
    for _ in range(n_tensors):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<I")
        shape = tuple(reader.unpack(f"<{ndim}I")) if ndim else ()
        count = 1
        for size in shape:
            count *= size
        array = np.frombuffer(reader.take(count * 8), dtype="<f8").reshape(shape)
        state[name] = torch.from_numpy(array.copy())
    if reader.pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes after tensor blocks")
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: tensor blocks do not fit model: {exc}") from exc
    meta["vocab_hash"] = vocab_hash.hex()
    return model, meta
