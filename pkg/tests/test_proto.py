import hashlib
import json
from unittest import TestCase

import numpy as np
import pytest

from seriesforge.data import ScalerParams
from seriesforge.nets import NetworkBundle
from seriesforge.numkit import Rng
from seriesforge.pb import checkpoint_pb2 as pb
from seriesforge.pb.proto import MAGIC
from seriesforge.pb.proto import CheckpointError
from seriesforge.pb.proto import CheckpointProto
from seriesforge.pb.proto import NamedArrayProto
from seriesforge.pb.proto import decode_checkpoint
from seriesforge.pb.proto import encode_checkpoint
from seriesforge.training import Checkpoint
from seriesforge.training import TrainConfig


class TestNamedArrayProto(TestCase):
    def test_round_trip(self):
        arrays = [
            np.array([1.0, -2.5, np.pi]),
            np.arange(12.0).reshape(3, 4) / 7.0,
            np.array([[1e-300, 1e300]]),
            np.zeros((0, 3)),
        ]
        for array in arrays:
            name, value = NamedArrayProto.from_proto(NamedArrayProto.to_proto("w", array))
            assert name == "w"
            assert value.shape == array.shape
            assert np.array_equal(value, array)

    def test_size_mismatch(self):
        proto = pb.NamedArray(name="w", shape=[2, 2], values=[1.0, 2.0, 3.0])
        with pytest.raises(CheckpointError):
            NamedArrayProto.from_proto(proto)


def _checkpoint(scaler=True):
    config = TrainConfig(seed=3, seq_len=6, hidden_dim=4, num_layers=1)
    rng = Rng(config.seed)
    bundle = NetworkBundle.create(NetworkBundle.specs(2, hidden_dim=4, num_layers=1), rng)
    return Checkpoint(
        params=bundle.snapshot(),
        config=config,
        scaler=ScalerParams([-1.0, 0.0], [1.0, 2.0]) if scaler else None,
        feature_dim=2,
        phase=4,
        epoch=17,
        rng_state=rng.state,
    )


class TestCheckpointProto(TestCase):
    def test_round_trip(self):
        checkpoint = _checkpoint()
        loaded = decode_checkpoint(encode_checkpoint(checkpoint))
        assert sorted(loaded.params) == sorted(checkpoint.params)
        for name, value in checkpoint.params.items():
            assert np.array_equal(loaded.params[name], value)
        assert loaded.config == checkpoint.config
        assert np.array_equal(loaded.scaler.min, [-1.0, 0.0])
        assert np.array_equal(loaded.scaler.max, [1.0, 2.0])
        assert (loaded.feature_dim, loaded.phase, loaded.epoch) == (2, 4, 17)
        assert loaded.rng_state == checkpoint.rng_state

    def test_rng_state_resumes_stream(self):
        checkpoint = _checkpoint()
        loaded = decode_checkpoint(encode_checkpoint(checkpoint))
        first, second = Rng(0), Rng(0)
        first.state = checkpoint.rng_state
        second.state = loaded.rng_state
        assert np.array_equal(first.uniform(size=5), second.uniform(size=5))

    def test_without_scaler(self):
        loaded = decode_checkpoint(encode_checkpoint(_checkpoint(scaler=False)))
        assert loaded.scaler is None

    def test_encoding_is_deterministic(self):
        assert encode_checkpoint(_checkpoint()) == encode_checkpoint(_checkpoint())

    def test_params_are_sorted_by_name(self):
        proto = CheckpointProto.to_proto(_checkpoint())
        names = [array.name for array in proto.params]
        assert names == sorted(names)
        assert json.loads(proto.config_json)["seq_len"] == 6


class TestCheckpointErrors(TestCase):
    def setUp(self):
        self.blob = encode_checkpoint(_checkpoint())

    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            decode_checkpoint(b"XXXX" + self.blob[len(MAGIC) :])

    def test_truncated(self):
        for size in (0, 10, len(self.blob) // 2, len(self.blob) - 1):
            with pytest.raises(CheckpointError):
                decode_checkpoint(self.blob[:size])

    def test_corrupted_payload(self):
        blob = bytearray(self.blob)
        blob[-5] ^= 0xFF
        with pytest.raises(CheckpointError, match="digest"):
            decode_checkpoint(bytes(blob))

    def _framed(self, proto):
        payload = proto.SerializeToString()
        return MAGIC + hashlib.sha256(payload).digest() + payload

    def test_unsupported_version(self):
        proto = CheckpointProto.to_proto(_checkpoint())
        proto.version = 99
        with pytest.raises(CheckpointError, match="version"):
            decode_checkpoint(self._framed(proto))

    def test_undecodable_payload(self):
        payload = b"\xff\xff\xff\xff"
        blob = MAGIC + hashlib.sha256(payload).digest() + payload
        with pytest.raises(CheckpointError):
            decode_checkpoint(blob)

    def test_duplicate_parameter(self):
        proto = CheckpointProto.to_proto(_checkpoint())
        proto.params.add().CopyFrom(proto.params[0])
        with pytest.raises(CheckpointError, match="Duplicate"):
            decode_checkpoint(self._framed(proto))

    def test_invalid_config(self):
        proto = CheckpointProto.to_proto(_checkpoint())
        proto.config_json = json.dumps({"epochs": 3})
        with pytest.raises(CheckpointError):
            decode_checkpoint(self._framed(proto))
