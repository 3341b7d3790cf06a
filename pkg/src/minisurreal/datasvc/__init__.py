"""Experience buffer shards, routing and the parameter server."""

from .buffer import (
    FIFO,
    UNIFORM,
    BufferShard,
    ExperienceBatch,
    SampleTimeout,
    SequenceError,
    ShardClosed,
    ShardFull,
)
from .params import (
    PARAMS_TOPIC,
    CorruptSnapshot,
    NotReady,
    ParameterCache,
    ParameterPublisher,
    ParameterSnapshot,
    params_checksum,
)
from .routing import HASH, ROUND_ROBIN, Router, route, stable_hash
from .service import (
    ExperienceProducer,
    Mailbox,
    ParameterServer,
    ShardClient,
    ShardService,
    request_service,
)
