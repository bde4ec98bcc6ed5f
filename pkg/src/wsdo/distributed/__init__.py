from .protocol import (
    MAX_BODY_BYTES,
    MESSAGE_TYPES,
    DirectionGuard,
    Framer,
    MessageCounter,
    WireMessage,
    decode_message,
    encode_message,
    recv_message,
    send_message,
    try_decode,
)
from .worker import WorkerServer, worker_serve
from .dispatch import (
    DEFAULT_SOLVE_TIMEOUT,
    RemoteDispatcher,
    WorkerClient,
    WorkerEndpoint,
    WorkerRegistry,
    load_worker_config,
)

__all__ = [
    "DEFAULT_SOLVE_TIMEOUT",
    "MAX_BODY_BYTES",
    "MESSAGE_TYPES",
    "DirectionGuard",
    "Framer",
    "MessageCounter",
    "RemoteDispatcher",
    "WireMessage",
    "WorkerClient",
    "WorkerEndpoint",
    "WorkerRegistry",
    "WorkerServer",
    "decode_message",
    "encode_message",
    "load_worker_config",
    "recv_message",
    "send_message",
    "try_decode",
    "worker_serve",
]
