"""
JCL1 checkpoint format.

    magic "JCL1" | version u8
    metadata: count u32, then (key_len u16, key, value_len u32, value) UTF-8
    tensors:  count u32, then (name_len u16, name, ndim u8, dims u32*ndim,
              little-endian float32 data)

Adam moments are stored as extra tensors named `adam.m:<name>` and
`adam.v:<name>`; per-parameter step counts go in the `jcl.adam_steps`
metadata entry as JSON. Metadata keys under the `jcl.` prefix are reserved.
"""

import json
import struct
from typing import Dict, Tuple

import numpy as np

from joint_cache_lab.errors import CheckpointFormatError, ConfigError
from joint_cache_lab.nnkit.params import ParamStore

MAGIC = b"JCL1"
VERSION = 1

_M_PREFIX = "adam.m:"
_V_PREFIX = "adam.v:"
RESERVED_PREFIX = "jcl."
_STEPS_KEY = RESERVED_PREFIX + "adam_steps"


def _encode_text(text: str, width: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack(f"<{width}", len(raw)) + raw


def _encode_tensor(name: str, value: np.ndarray) -> bytes:
    data = np.ascontiguousarray(value, dtype="<f4")
    header = _encode_text(name, "H") + struct.pack("<B", data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    return header + data.tobytes()


def save_checkpoint(
    params: ParamStore, meta: Dict[str, str], include_optimizer: bool = True
) -> bytes:
    """
    Serialize parameters (and optionally Adam state) with metadata.

    Raises:
        ConfigError: A metadata key uses the reserved `jcl.` prefix
    """
    reserved = sorted(k for k in meta if k.startswith(RESERVED_PREFIX))
    if reserved:
        raise ConfigError(f"metadata keys {reserved} use the reserved prefix {RESERVED_PREFIX!r}")
    meta = dict(meta)
    tensors = list(params.items())
    if include_optimizer and params.adam_m:
        meta[_STEPS_KEY] = json.dumps(params.steps, sort_keys=True)
        for name in params.params:
            if name in params.adam_m:
                tensors.append((_M_PREFIX + name, params.adam_m[name]))
                tensors.append((_V_PREFIX + name, params.adam_v[name]))

    chunks = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(meta))]
    for key in sorted(meta):
        chunks.append(_encode_text(key, "H"))
        chunks.append(_encode_text(str(meta[key]), "I"))
    chunks.append(struct.pack("<I", len(tensors)))
    for name, value in tensors:
        chunks.append(_encode_tensor(name, value))
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointFormatError(f"truncated while reading {what}", self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def text(self, width: str, what: str) -> str:
        (length,) = self.unpack(f"<{width}", what)
        start = self.offset
        try:
            return self.take(length, what).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"invalid UTF-8 in {what}", start) from None


def _decode_steps(text: str, offset: int) -> Dict[str, int]:
    try:
        steps = json.loads(text)
    except json.JSONDecodeError:
        raise CheckpointFormatError("optimizer step counts are not valid JSON", offset) from None
    if not isinstance(steps, dict) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in steps.values()
    ):
        raise CheckpointFormatError("optimizer step counts must map names to non-negative integers", offset)
    return steps


def load_checkpoint(data: bytes) -> Tuple[ParamStore, Dict[str, str]]:
    """
    Parse checkpoint bytes.

    Returns:
        (float32 ParamStore with Adam state restored, metadata without the
        internal optimizer entry)

    Raises:
        CheckpointFormatError: Bad magic, unknown version, truncated data or
            malformed optimizer state
    """
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("bad magic", 0)
    (version,) = reader.unpack("<B", "version")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}", 4)

    meta: Dict[str, str] = {}
    value_offsets: Dict[str, int] = {}
    (count,) = reader.unpack("<I", "metadata count")
    for _ in range(count):
        key = reader.text("H", "metadata key")
        value_offsets[key] = reader.offset
        meta[key] = reader.text("I", "metadata value")

    store = ParamStore(np.float32)
    moments: Dict[str, np.ndarray] = {}
    (count,) = reader.unpack("<I", "tensor count")
    for _ in range(count):
        name = reader.text("H", "tensor name")
        (ndim,) = reader.unpack("<B", "tensor rank")
        dims = reader.unpack(f"<{ndim}I", "tensor dims")
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = reader.take(4 * size, f"tensor {name}")
        value = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if name.startswith(_M_PREFIX) or name.startswith(_V_PREFIX):
            moments[name] = value
        else:
            store.add(name, value)
    if reader.offset != len(data):
        raise CheckpointFormatError("trailing bytes after last tensor", reader.offset)

    steps = _decode_steps(meta.pop(_STEPS_KEY, "{}"), value_offsets.get(_STEPS_KEY, 0))
    for name in store.params:
        if _M_PREFIX + name in moments:
            store.adam_m[name] = moments[_M_PREFIX + name]
            store.adam_v[name] = moments[_V_PREFIX + name]
            store.steps[name] = steps.get(name, 0)
    return store, meta
