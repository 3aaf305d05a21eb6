"""Binary checkpoint format.

Layout (little endian)::

    "DEMO" | u32 version=1 | u32 tensor_count
    per tensor: u32 name_len | utf-8 name | u32 ndim | ndim x u32 dims | f32 data
    u64 FNV-1a over every preceding byte

The architecture descriptor and run metadata travel as one extra tensor
named ``__meta__``: a 1-D float32 vector of UTF-8 JSON byte values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..hashing import fnv1a64
from ..errors import BadMagic, ChecksumMismatch, MissingParameter, ShapeMismatch, TruncatedFile, VersionMismatch
from .resnet import ResNet, build_model

MAGIC = b"DEMO"
VERSION = 1
META_KEY = "__meta__"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    architecture: dict
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: ResNet, **metadata) -> "Checkpoint":
        params = {k: np.array(v, dtype=np.float32) for k, v in model.state_dict().items()}
        return cls(params, model.descriptor(), dict(metadata))

    def build(self, backbone_only=False) -> ResNet:
        """Instantiate the described architecture and load these tensors into it."""
        arch = self.architecture
        model = build_model(arch["arch"], arch["num_classes"], arch.get("in_channels", 3),
                            seed=self.metadata.get("seed"))
        return model.load_state(self.params, backbone_only=backbone_only)


def encode_checkpoint(cp: Checkpoint) -> bytes:
    meta = json.dumps({"architecture": cp.architecture, "metadata": cp.metadata}, sort_keys=True)
    tensors = dict(cp.params)
    tensors[META_KEY] = np.frombuffer(meta.encode("utf-8"), dtype=np.uint8).astype(np.float32)
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a64(body))


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic("not a DEMO checkpoint (bad magic)")
    if len(raw) < 20:
        raise TruncatedFile("checkpoint shorter than header and checksum")
    version, count = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    body, (checksum,) = raw[:-8], struct.unpack("<Q", raw[-8:])
    if fnv1a64(body) != checksum:
        raise ChecksumMismatch("checkpoint checksum does not match contents")
    pos = 12
    tensors = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", body, pos)
            name = body[pos + 4:pos + 4 + name_len].decode("utf-8")
            pos += 4 + name_len
            (ndim,) = struct.unpack_from("<I", body, pos)
            dims = struct.unpack_from(f"<{ndim}I", body, pos + 4)
            pos += 4 + 4 * ndim
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(body):
                raise TruncatedFile(f"tensor {name!r} runs past end of file")
            tensors[name] = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * n
    except struct.error as exc:
        raise TruncatedFile(f"checkpoint header truncated: {exc}") from exc
    if META_KEY not in tensors:
        raise MissingParameter(f"checkpoint lacks {META_KEY!r} record")
    meta = json.loads(tensors.pop(META_KEY).astype(np.uint8).tobytes().decode("utf-8"))
    return Checkpoint(tensors, meta["architecture"], meta["metadata"])


def save_checkpoint(cp: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(cp))
    tmp.replace(path)


def load_checkpoint(path: str | Path, model: ResNet | None = None, backbone_only=False) -> Checkpoint:
    """Read a checkpoint; with ``model`` given, validate and copy tensors into it.

    ``backbone_only`` skips the ``fc.*`` head so a checkpoint trained for a
    different class count can seed a new model before ``replace_final_layer``.
    """
    cp = decode_checkpoint(Path(path).read_bytes())
    if model is not None:
        validate_against(cp, model, backbone_only)
        model.load_state(cp.params, backbone_only=backbone_only)
    return cp


def validate_against(cp: Checkpoint, model: ResNet, backbone_only=False) -> None:
    for name, target in model.state_dict().items():
        if backbone_only and name.startswith("fc."):
            continue
        if name not in cp.params:
            raise MissingParameter(f"checkpoint lacks parameter {name!r}")
        if cp.params[name].shape != target.shape:
            raise ShapeMismatch(
                f"parameter {name!r}: checkpoint {cp.params[name].shape} vs model {target.shape}")
