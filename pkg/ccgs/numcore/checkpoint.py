"""
Binary checkpoint codec.

Layout (all integers little-endian u32, except the optimizer step which is u64)::

    b"CCGS" | version | count | count x record | step | count x record (m) | count x record (v)

    record = name_len | name (UTF-8) | ndim | ndim x dim | row-major values

Version 1 stores values as little-endian 32-bit floats and version 2 as
little-endian 64-bit floats. Moment records carry the parameter names.
"""
from __future__ import annotations

import io
import numpy as np

from pathlib import Path
from typing import BinaryIO

from .optim import ParameterSet
from ..core.constants import Precision
from ..errors import CheckpointError



MAGIC = b'CCGS'

#: Checkpoint format version for each value precision
VERSIONS = {Precision.float32: 1, Precision.float64: 2}
_VALUE_TYPES = {1: np.dtype('<f4'), 2: np.dtype('<f8')}

_U32 = np.dtype('<u4')
_U64 = np.dtype('<u8')



### Encoding

def _write_u32(stream: BinaryIO, value: int):
    stream.write(np.asarray(value, dtype=_U32).tobytes())

def _write_record(stream: BinaryIO, name: str, array: np.ndarray, value_type: np.dtype):
    encoded = name.encode('utf-8')
    _write_u32(stream, len(encoded))
    stream.write(encoded)
    _write_u32(stream, array.ndim)
    stream.write(np.asarray(array.shape, dtype=_U32).tobytes())
    stream.write(np.ascontiguousarray(array, dtype=value_type).tobytes())

def encode_checkpoint(
    params: ParameterSet,
    precision: Precision | str = Precision.float32) -> bytes:
    """
    Serialize parameter values and optimizer state.

    Parameters
    ----------
    params : ParameterSet
        Parameters to serialize
    precision : Precision
        Value precision (float32 -> version 1, float64 -> version 2)
    """
    version = VERSIONS[Precision.parse(precision)]
    value_type = _VALUE_TYPES[version]
    names = params.names()

    stream = io.BytesIO()
    stream.write(MAGIC)
    _write_u32(stream, version)
    _write_u32(stream, len(names))
    for name in names:
        _write_record(stream, name, params[name].data, value_type)

    stream.write(np.asarray(params.step, dtype=_U64).tobytes())
    for moments in (params.m, params.v):
        _write_u32(stream, len(names))
        for name in names:
            _write_record(stream, name, moments[name], value_type)

    return stream.getvalue()

def save_checkpoint(
    params: ParameterSet,
    path: str | Path,
    precision: Precision | str = Precision.float32):
    """
    Write a checkpoint file.
    """
    Path(path).write_bytes(encode_checkpoint(params, precision))



### Decoding

class _Reader:
    """
    Bounds-checked cursor over a checkpoint payload.
    """

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, num_bytes: int) -> bytes:
        end = self.offset + num_bytes
        if num_bytes < 0 or end > len(self.payload):
            raise CheckpointError(
                f"truncated checkpoint: need {num_bytes} bytes at offset {self.offset}")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return int(np.frombuffer(self.take(4), dtype=_U32)[0])

    def u64(self) -> int:
        return int(np.frombuffer(self.take(8), dtype=_U64)[0])

    def record(self, value_type: np.dtype) -> tuple[str, np.ndarray]:
        try:
            name = self.take(self.u32()).decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointError(f"invalid parameter name at offset {self.offset}") from e
        shape = tuple(int(d) for d in np.frombuffer(self.take(4 * self.u32()), dtype=_U32))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(self.take(count * value_type.itemsize), dtype=value_type)
        return name, values.reshape(shape).copy()

def decode_checkpoint(
    payload: bytes,
    dtype: np.dtype | type | None = None) -> ParameterSet:
    """
    Deserialize a checkpoint into a new parameter set.

    Parameters
    ----------
    payload : bytes
        Checkpoint bytes
    dtype : np.dtype or None
        Floating point type of the returned parameters
        (defaults to the stored precision)

    Raises
    ------
    CheckpointError
        If the payload is corrupt or truncated
    """
    reader = _Reader(payload)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a CCGS checkpoint (bad magic bytes)")
    version = reader.u32()
    if version not in _VALUE_TYPES:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    value_type = _VALUE_TYPES[version]

    params = ParameterSet(dtype or value_type.newbyteorder('='))
    for _ in range(reader.u32()):
        name, values = reader.record(value_type)
        if name in params:
            raise CheckpointError(f"duplicate parameter {name!r} in checkpoint")
        params.add(name, values)

    params.step = reader.u64()
    for moments in (params.m, params.v):
        count = reader.u32()
        if count != len(params):
            raise CheckpointError(
                f"optimizer state holds {count} records for {len(params)} parameters")
        for _ in range(count):
            name, values = reader.record(value_type)
            if name not in params or values.shape != params[name].shape:
                raise CheckpointError(f"optimizer state does not match parameter {name!r}")
            moments[name] = values.astype(params.dtype)

    if reader.offset != len(payload):
        raise CheckpointError(f"{len(payload) - reader.offset} trailing bytes in checkpoint")

    return params

def load_checkpoint(path: str | Path, dtype: np.dtype | type | None = None) -> ParameterSet:
    """
    Read a checkpoint file.
    """
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(payload, dtype=dtype)

def restore_into(target: ParameterSet, source: ParameterSet):
    """
    Copy values and optimizer state from a loaded checkpoint into an
    initialized parameter set, checking that names and shapes agree.

    Raises
    ------
    CheckpointError
        If the parameter names or shapes differ
    """
    if set(target.names()) != set(source.names()):
        missing = sorted(set(target.names()) - set(source.names()))
        extra = sorted(set(source.names()) - set(target.names()))
        raise CheckpointError(
            f"checkpoint does not match model (missing: {missing}, unexpected: {extra})")

    for name in target.names():
        if target[name].shape != source[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: "
                f"model {target[name].shape} vs checkpoint {source[name].shape}")
        target[name].data[...] = source[name].data
        target.m[name] = source.m[name].astype(target.dtype)
        target.v[name] = source.v[name].astype(target.dtype)
        target[name].grad = None
    target.step = source.step
