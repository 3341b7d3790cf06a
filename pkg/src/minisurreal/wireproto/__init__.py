"""Binary framing, value codec and messaging channels."""

from .codec import MAX_DEPTH, deserialize, pack_array, serialize, unpack_array, values_equal
from .errors import (
    CodecError,
    DepthError,
    FrameError,
    FrameSizeError,
    IncompleteFrame,
    PipelineBroken,
    ProtocolError,
    TransportError,
    VersionError,
    WireError,
)
from .frame import MAX_PAYLOAD, Frame, FrameBuffer, MsgKind, decode_frame, encode_frame, frame_bytes, split_frame
from .offload import OffloadFetcher, spawn_offload_fetcher
from .transport import (
    BINDER,
    CONNECTOR,
    PUB_SUB,
    PUSH_PULL,
    Backoff,
    ChannelEndpoint,
    Publisher,
    Puller,
    Pusher,
    Subscriber,
    parse_address,
)
