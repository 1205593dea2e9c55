"""Binary model-checkpoint container.

Layout (all integers little-endian):

    bytes 0..3   magic, 4 ASCII bytes ("SPDN" for the feed-forward SPD
                 network, "SPDG" for the recurrent model)
    bytes 4..7   u32 format version (currently 1)
    bytes 8..11  u32 byte length of the config block
    ...          config block: UTF-8 JSON object
    ...          parameter tensors: raw float64 little-endian values,
                 concatenated in the model's declaration order

Shapes are not stored; the reader reconstructs them from the config.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import FormatError, UnsupportedVersion

CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sII")


def write_checkpoint(
    path: str | Path, magic: bytes, config: dict, tensors: Sequence[np.ndarray]
) -> None:
    if len(magic) != 4:
        raise FormatError("magic must be exactly 4 bytes")
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for t in tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path, magic: bytes) -> Tuple[dict, np.ndarray]:
    """Return the config dict and the flat float64 parameter vector."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("checkpoint file is truncated")
    got_magic, version, blob_len = _HEADER.unpack_from(raw)
    if got_magic != magic:
        raise FormatError(f"bad checkpoint magic {got_magic!r}, expected {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersion(f"checkpoint version {version} not supported")
    if len(raw) < _HEADER.size + blob_len:
        raise FormatError("checkpoint config block is truncated")
    try:
        config = json.loads(raw[_HEADER.size : _HEADER.size + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("checkpoint config block is not valid JSON") from exc
    payload = raw[_HEADER.size + blob_len :]
    if len(payload) % 8 != 0:
        raise FormatError("checkpoint parameter payload is truncated")
    return config, np.frombuffer(payload, dtype="<f8").astype(np.float64)


def take_tensors(flat: np.ndarray, shapes: Sequence[Tuple[int, ...]]) -> List[np.ndarray]:
    """Split a flat parameter vector into tensors of the given shapes."""
    out = []
    pos = 0
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        if pos + n > flat.size:
            raise FormatError("checkpoint has fewer parameters than the config implies")
        out.append(flat[pos : pos + n].reshape(shape).copy())
        pos += n
    if pos != flat.size:
        raise FormatError("checkpoint has more parameters than the config implies")
    return out
