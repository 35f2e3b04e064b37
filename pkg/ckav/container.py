"""Provides reading and writing of the ``.ckav`` checkpoint container.

A container is a single file laid out as follows (all integers little-endian):

* bytes 0-3: the magic ``CKAV``
* bytes 4-7: the format version as an unsigned 32-bit integer
* bytes 8-15: the header length ``H`` as an unsigned 64-bit integer
* the next ``H`` bytes: a UTF-8 JSON header holding the metadata and a tensor table
* the payload: raw float32 tensor data, one contiguous region per table entry

Table entries are sorted by ``(kind, name)`` and their offsets are relative to the
start of the payload. Gradients share the container with parameters under the
``"grad"`` kind.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from collections.abc import Mapping
from os import PathLike
from pathlib import Path
from typing import Any, Union

import numpy as np

from ckav.checkpoint import STORAGE_DTYPE, Checkpoint, CheckpointMeta, TensorMap
from ckav.exceptions import CheckpointFormatError, CompatibilityError

logger = logging.getLogger(__name__)

PathType = Union[str, "PathLike[str]"]

#: Container magic bytes
MAGIC = b"CKAV"

#: Container format version written by this module
VERSION = 1

#: File extension of checkpoint containers
EXTENSION = ".ckav"

_PREAMBLE = struct.Struct("<4sIQ")
_PAYLOAD_DTYPE = np.dtype("<f4")
_KINDS = ("param", "grad")
_RESERVED_KINDS = ("m1", "m2")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serializes a checkpoint to container bytes.

    Encoding is deterministic: the same checkpoint always yields the same bytes.

    Args:
        ckpt: The checkpoint to serialize.

    Returns:
        The complete container contents.
    """
    groups: list[tuple[str, TensorMap]] = [("param", ckpt.params)]
    if ckpt.grads is not None:
        groups.append(("grad", ckpt.grads))

    entries = sorted(
        ((kind, name, tensors[name]) for kind, tensors in groups for name in tensors),
        key=lambda entry: (entry[0], entry[1]),
    )
    table, chunks, offset = [], [], 0
    for kind, name, tensor in entries:
        data = np.ascontiguousarray(tensor, dtype=_PAYLOAD_DTYPE).tobytes()
        table.append(
            {
                "name": name,
                "kind": kind,
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": len(data),
            }
        )
        chunks.append(data)
        offset += len(data)

    header = json.dumps(
        {"meta": ckpt.meta.to_dict(), "tensors": table},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def decode_checkpoint(raw: bytes, allow_nonfinite: bool = False) -> Checkpoint:
    """Parses container bytes into a checkpoint.

    Args:
        raw: The complete container contents.
        allow_nonfinite: Whether NaN and infinite tensor values are accepted.

    Returns:
        The decoded checkpoint.

    Raises:
        CheckpointFormatError: If the bytes do not form a valid container.
    """
    if len(raw) < _PREAMBLE.size:
        if raw[: len(MAGIC)] != MAGIC[: len(raw)]:
            raise CheckpointFormatError("bad magic")
        raise CheckpointFormatError("truncated: file shorter than the preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"version {version} unsupported")
    payload_start = _PREAMBLE.size + header_len
    if payload_start > len(raw):
        raise CheckpointFormatError("truncated: header extends past end of file")

    try:
        header = json.loads(raw[_PREAMBLE.size : payload_start].decode("utf-8"))
        meta = CheckpointMeta.from_dict(header["meta"])
        table = list(header["tensors"])
    except (UnicodeDecodeError, KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"malformed header: {e}") from e

    payload = memoryview(raw)[payload_start:]
    tensors: dict[str, dict[str, np.ndarray]] = {kind: {} for kind in _KINDS}
    expected_offset = 0
    for entry in table:
        kind, name, shape = _parse_entry(entry)
        offset, nbytes = entry.get("offset"), entry.get("nbytes")
        if offset != expected_offset:
            raise CheckpointFormatError(
                f"tensor {name!r}: offset {offset} breaks contiguous layout"
            )
        if nbytes != math.prod(shape) * _PAYLOAD_DTYPE.itemsize:
            raise CheckpointFormatError(
                f"tensor {name!r}: nbytes {nbytes} does not match shape {shape}"
            )
        if offset + nbytes > len(payload):
            raise CheckpointFormatError(
                f"truncated: tensor {name!r} ends at byte {offset + nbytes} "
                f"of a {len(payload)}-byte payload"
            )
        if name in tensors[kind]:
            raise CheckpointFormatError(f"duplicate {kind} tensor {name!r}")
        count = math.prod(shape)
        array = np.frombuffer(payload, _PAYLOAD_DTYPE, count=count, offset=offset)
        array = array.astype(STORAGE_DTYPE).reshape(shape)
        if not allow_nonfinite and not np.isfinite(array).all():
            raise CheckpointFormatError(f"non-finite values in {kind} tensor {name!r}")
        tensors[kind][name] = array
        expected_offset += nbytes
    if expected_offset != len(payload):
        raise CheckpointFormatError(
            f"payload has {len(payload) - expected_offset} unaccounted trailing bytes"
        )

    try:
        return Checkpoint(
            params=TensorMap(tensors["param"]),
            grads=TensorMap(tensors["grad"]) if tensors["grad"] else None,
            meta=meta,
        )
    except (CompatibilityError, ValueError) as e:
        raise CheckpointFormatError(str(e)) from e


def _parse_entry(entry: Any) -> tuple[str, str, list[int]]:
    if not isinstance(entry, Mapping):
        raise CheckpointFormatError("malformed header: tensor entry is not an object")
    kind, name, shape = entry.get("kind"), entry.get("name"), entry.get("shape")
    if kind in _RESERVED_KINDS:
        raise CheckpointFormatError(f"tensor kind {kind!r} is reserved, not supported")
    if kind not in _KINDS:
        raise CheckpointFormatError(f"unknown tensor kind {kind!r}")
    if not isinstance(name, str) or not name:
        raise CheckpointFormatError("malformed header: tensor without a name")
    if not isinstance(shape, list) or not all(
        isinstance(dim, int) and not isinstance(dim, bool) and dim >= 1
        for dim in shape
    ):
        raise CheckpointFormatError(f"tensor {name!r}: invalid shape {shape!r}")
    return kind, name, shape


def write_checkpoint(path: PathType, ckpt: Checkpoint) -> None:
    """Writes a checkpoint to a container file.

    Args:
        path: Destination file; its parent directory must exist.
        ckpt: The checkpoint to write.
    """
    Path(path).write_bytes(encode_checkpoint(ckpt))
    logger.debug("wrote checkpoint step=%d to %s", ckpt.meta.step, path)


def read_checkpoint(path: PathType, allow_nonfinite: bool = False) -> Checkpoint:
    """Reads a checkpoint from a container file.

    Args:
        path: The container file.
        allow_nonfinite: Whether NaN and infinite tensor values are accepted.

    Returns:
        The checkpoint stored in the file.

    Raises:
        CheckpointFormatError: If the file is not a valid container.
    """
    try:
        return decode_checkpoint(Path(path).read_bytes(), allow_nonfinite)
    except CheckpointFormatError as e:
        raise CheckpointFormatError(f"{path}: {e}") from e


def read_series(
    paths: list[PathType], allow_nonfinite: bool = False
) -> list[Checkpoint]:
    """Reads several checkpoints and orders them by training step.

    Args:
        paths: The container files.
        allow_nonfinite: Whether NaN and infinite tensor values are accepted.

    Returns:
        The checkpoints sorted by step (stable for equal steps).
    """
    ckpts = [read_checkpoint(path, allow_nonfinite) for path in paths]
    return sorted(ckpts, key=lambda ckpt: ckpt.meta.step)

