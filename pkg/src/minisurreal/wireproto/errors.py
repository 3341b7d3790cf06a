"""Exception hierarchy for the wire protocol."""


class WireError(Exception):
    """Base class for all wire protocol errors."""


class FrameError(WireError):
    pass


class ProtocolError(FrameError):
    """Bad magic, unknown message kind or trailing garbage."""


class VersionError(FrameError):
    pass


class IncompleteFrame(FrameError):
    """Not enough bytes yet; the caller may buffer more and retry."""

    def __init__(self, needed=None):
        self.needed = needed
        msg = "incomplete frame" if needed is None else f"incomplete frame: need {needed} more byte(s)"
        super().__init__(msg)


class FrameSizeError(FrameError):
    pass


class CodecError(WireError):
    pass


class DepthError(CodecError):
    pass


class TransportError(WireError):
    """Socket level failure.

    ``retry_after`` is a hint in seconds for the next attempt, taken from the
    connector's backoff schedule.
    """

    def __init__(self, message, retry_after=None):
        super().__init__(message)
        self.retry_after = retry_after


class PipelineBroken(WireError):
    """A background worker of an offload pipeline died."""
