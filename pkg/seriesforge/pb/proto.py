"""Conversion between checkpoints and their protobuf container.

A checkpoint file is framed as

    b"SFCK" | sha256(payload) | payload

where the payload is a serialized ``Checkpoint`` message.
"""
import hashlib
import json

from google.protobuf.message import DecodeError
import numpy as np

import seriesforge.pb.checkpoint_pb2 as pb


MAGIC = b"SFCK"
CHECKPOINT_VERSION = 1
_DIGEST_SIZE = hashlib.sha256().digest_size


class CheckpointError(ValueError):
    """Raised when a checkpoint file is truncated, corrupted or of an
    unsupported version."""


class NamedArrayProto:
    @classmethod
    def to_proto(cls, name, array):
        """serialize to protobuf"""
        array = np.asarray(array, dtype=np.float64)
        return pb.NamedArray(name=name, shape=list(array.shape), values=array.ravel().tolist())

    @classmethod
    def from_proto(cls, proto):
        """deserialize from protobuf"""
        shape = tuple(int(s) for s in proto.shape)
        values = np.array(proto.values, dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(
                "Array %r holds %d values, shape %r needs %d"
                % (proto.name, values.size, shape, int(np.prod(shape, dtype=np.int64)))
            )
        return proto.name, values.reshape(shape)


def _arrays_from_proto(protos, kind):
    arrays = {}
    for proto in protos:
        name, value = NamedArrayProto.from_proto(proto)
        if name in arrays:
            raise CheckpointError("Duplicate %s array %r" % (kind, name))
        arrays[name] = value
    return arrays


class CheckpointProto:
    @classmethod
    def to_proto(cls, checkpoint):
        """serialize to protobuf"""
        scaler = []
        if checkpoint.scaler is not None:
            scaler = [
                NamedArrayProto.to_proto("min", checkpoint.scaler.min),
                NamedArrayProto.to_proto("max", checkpoint.scaler.max),
            ]
        return pb.Checkpoint(
            version=CHECKPOINT_VERSION,
            config_json=json.dumps(checkpoint.config.to_dict(), sort_keys=True),
            params=[NamedArrayProto.to_proto(name, checkpoint.params[name]) for name in sorted(checkpoint.params)],
            scaler=scaler,
            phase=checkpoint.phase,
            epoch=checkpoint.epoch,
            rng_state=json.dumps(checkpoint.rng_state, sort_keys=True),
            feature_dim=checkpoint.feature_dim,
        )

    @classmethod
    def from_proto(cls, proto):
        """deserialize from protobuf"""
        from ..data import ScalerParams
        from ..training import Checkpoint
        from ..training import TrainConfig

        if proto.version != CHECKPOINT_VERSION:
            raise CheckpointError(
                "Unsupported checkpoint version %r, expected %r" % (proto.version, CHECKPOINT_VERSION)
            )
        try:
            config = TrainConfig.from_dict(json.loads(proto.config_json))
            rng_state = json.loads(proto.rng_state)
        except ValueError as e:
            raise CheckpointError("Invalid checkpoint configuration: %s" % e)

        scaler_arrays = _arrays_from_proto(proto.scaler, "scaler")
        scaler = None
        if scaler_arrays:
            if set(scaler_arrays) != {"min", "max"}:
                raise CheckpointError("Scaler arrays must be 'min' and 'max', got %r" % sorted(scaler_arrays))
            scaler = ScalerParams(scaler_arrays["min"], scaler_arrays["max"])

        return Checkpoint(
            params=_arrays_from_proto(proto.params, "parameter"),
            config=config,
            scaler=scaler,
            feature_dim=proto.feature_dim,
            phase=proto.phase,
            epoch=proto.epoch,
            rng_state=rng_state,
        )


def encode_checkpoint(checkpoint):
    """Frame a checkpoint as bytes."""
    payload = CheckpointProto.to_proto(checkpoint).SerializeToString()
    return MAGIC + hashlib.sha256(payload).digest() + payload


def decode_checkpoint(blob):
    """Parse bytes produced by ``encode_checkpoint``."""
    header = len(MAGIC) + _DIGEST_SIZE
    if len(blob) < header:
        raise CheckpointError("Checkpoint truncated: %d bytes" % len(blob))
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a checkpoint file: bad magic %r" % blob[: len(MAGIC)])
    digest, payload = blob[len(MAGIC) : header], blob[header:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("Checkpoint digest mismatch: file is truncated or corrupted")
    proto = pb.Checkpoint()
    try:
        proto.ParseFromString(payload)
    except DecodeError as e:
        raise CheckpointError("Cannot decode checkpoint payload: %s" % e)
    return CheckpointProto.from_proto(proto)
