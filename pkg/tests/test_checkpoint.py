from __future__ import annotations

import numpy as np
import pytest

from ccgs.core.constants import Precision
from ccgs.errors import CheckpointError
from ccgs.numcore import (
    ParameterSet,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore_into,
    save_checkpoint,
)
from ccgs.numcore.checkpoint import MAGIC
from ccgs.utils.random import np_random



@pytest.fixture
def params() -> ParameterSet:
    rng = np_random(0)
    params = ParameterSet()
    params.add('text.table', rng.normal(size=(4, 3)))
    params.add('span.es.bias', rng.normal(size=(1, 6)))
    params.add('fusion.condense.bias', rng.normal(size=(1, 1)))
    for name in params.names():
        params.m[name] = rng.normal(size=params[name].shape)
        params.v[name] = rng.random(size=params[name].shape)
    params.step = 17
    return params


def test_float64_round_trip_is_exact(params, tmp_path):
    path = tmp_path / 'checkpoint.bin'
    save_checkpoint(params, path, Precision.float64)
    loaded = load_checkpoint(path)
    assert loaded.dtype == np.float64
    assert loaded.equals(params)
    assert loaded.names() == params.names()


def test_float32_layout(params):
    payload = encode_checkpoint(params, 'float32')
    assert payload[:4] == MAGIC
    assert np.frombuffer(payload[4:8], dtype='<u4')[0] == 1

    loaded = decode_checkpoint(payload)
    assert loaded.dtype == np.float32
    assert loaded.step == 17
    for name in params.names():
        np.testing.assert_array_equal(loaded[name].data, params[name].data.astype(np.float32))

    widened = decode_checkpoint(payload, dtype=np.float64)
    assert widened['text.table'].dtype == np.float64


def test_header_size(params):
    payload = encode_checkpoint(params, 'float32')
    values = sum(params[name].size for name in params.names())
    names = sum(len(name) for name in params.names())
    ndims = sum(params[name].ndim for name in params.names())
    record_bytes = 3 * 4 * 2 + names + 4 * ndims + 4 * values
    assert len(payload) == 4 + 4 + 4 + record_bytes + 8 + 2 * (4 + record_bytes)


@pytest.mark.parametrize('corrupt', [
    lambda p: b'XXXX' + p[4:],
    lambda p: p[:4] + np.array([9], dtype='<u4').tobytes() + p[8:],
    lambda p: p[:-3],
    lambda p: p + b'\x00',
    lambda p: p[:40],
])
def test_corrupt_payloads(params, corrupt):
    payload = encode_checkpoint(params, 'float64')
    with pytest.raises(CheckpointError):
        decode_checkpoint(corrupt(payload))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'nope.bin')


def test_restore_into(params):
    target = ParameterSet()
    for name in params.names():
        target.add(name, np.zeros(params[name].shape))

    restore_into(target, decode_checkpoint(encode_checkpoint(params, 'float64')))
    assert target.equals(params)

    wrong = ParameterSet()
    wrong.add('text.table', np.zeros((4, 3)))
    with pytest.raises(CheckpointError):
        restore_into(wrong, params)

    reshaped = ParameterSet()
    for name in params.names():
        reshaped.add(name, np.zeros(params[name].shape))
    reshaped['text.table'].data = np.zeros((5, 3))
    with pytest.raises(CheckpointError):
        restore_into(reshaped, params)
