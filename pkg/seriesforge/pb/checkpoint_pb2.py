# -*- coding: utf-8 -*-
"""Protocol buffer messages of the checkpoint container.

    syntax = "proto3";
    package seriesforge;

    message NamedArray {
      string name = 1;
      repeated uint64 shape = 2;
      repeated double values = 3;
    }

    message Checkpoint {
      uint32 version = 1;
      string config_json = 2;
      repeated NamedArray params = 3;
      repeated NamedArray scaler = 4;
      uint32 phase = 5;
      uint64 epoch = 6;
      string rng_state = 7;
      uint32 feature_dim = 8;
    }

The descriptor is assembled at import time in a private pool.
"""
from google.protobuf import descriptor_pb2 as _descriptor_pb2
from google.protobuf import descriptor_pool as _descriptor_pool
from google.protobuf import message_factory as _message_factory


_FIELD = _descriptor_pb2.FieldDescriptorProto


def _file_proto():
    file_proto = _descriptor_pb2.FileDescriptorProto(
        name="seriesforge/checkpoint.proto",
        package="seriesforge",
        syntax="proto3",
    )

    named_array = file_proto.message_type.add(name="NamedArray")
    named_array.field.add(name="name", number=1, type=_FIELD.TYPE_STRING, label=_FIELD.LABEL_OPTIONAL)
    named_array.field.add(name="shape", number=2, type=_FIELD.TYPE_UINT64, label=_FIELD.LABEL_REPEATED)
    named_array.field.add(name="values", number=3, type=_FIELD.TYPE_DOUBLE, label=_FIELD.LABEL_REPEATED)

    checkpoint = file_proto.message_type.add(name="Checkpoint")
    checkpoint.field.add(name="version", number=1, type=_FIELD.TYPE_UINT32, label=_FIELD.LABEL_OPTIONAL)
    checkpoint.field.add(name="config_json", number=2, type=_FIELD.TYPE_STRING, label=_FIELD.LABEL_OPTIONAL)
    checkpoint.field.add(
        name="params",
        number=3,
        type=_FIELD.TYPE_MESSAGE,
        type_name=".seriesforge.NamedArray",
        label=_FIELD.LABEL_REPEATED,
    )
    checkpoint.field.add(
        name="scaler",
        number=4,
        type=_FIELD.TYPE_MESSAGE,
        type_name=".seriesforge.NamedArray",
        label=_FIELD.LABEL_REPEATED,
    )
    checkpoint.field.add(name="phase", number=5, type=_FIELD.TYPE_UINT32, label=_FIELD.LABEL_OPTIONAL)
    checkpoint.field.add(name="epoch", number=6, type=_FIELD.TYPE_UINT64, label=_FIELD.LABEL_OPTIONAL)
    checkpoint.field.add(name="rng_state", number=7, type=_FIELD.TYPE_STRING, label=_FIELD.LABEL_OPTIONAL)
    checkpoint.field.add(name="feature_dim", number=8, type=_FIELD.TYPE_UINT32, label=_FIELD.LABEL_OPTIONAL)
    return file_proto


_pool = _descriptor_pool.DescriptorPool()
DESCRIPTOR = _pool.AddSerializedFile(_file_proto().SerializeToString())
if not hasattr(DESCRIPTOR, "message_types_by_name"):
    DESCRIPTOR = _pool.FindFileByName("seriesforge/checkpoint.proto")

_NAMEDARRAY = DESCRIPTOR.message_types_by_name["NamedArray"]
_CHECKPOINT = DESCRIPTOR.message_types_by_name["Checkpoint"]

if hasattr(_message_factory, "GetMessageClass"):
    NamedArray = _message_factory.GetMessageClass(_NAMEDARRAY)
    Checkpoint = _message_factory.GetMessageClass(_CHECKPOINT)
else:
    _factory = _message_factory.MessageFactory(_pool)
    NamedArray = _factory.GetPrototype(_NAMEDARRAY)
    Checkpoint = _factory.GetPrototype(_CHECKPOINT)
