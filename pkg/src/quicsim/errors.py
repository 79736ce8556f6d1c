"""Exception hierarchy shared across the simulator."""


class QuicSimError(Exception):
    """Base class for all quicsim errors."""


class ScheduleError(QuicSimError):
    """Attempt to schedule an event in the simulated past."""


class ConfigError(QuicSimError):
    """Invalid topology or experiment configuration."""


class EncodeError(QuicSimError):
    """A value cannot be represented in the wire format."""


class ParseError(QuicSimError):
    """Malformed wire bytes. Carries the byte offset of the failure."""

    def __init__(self, message, offset=0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ProtocolError(QuicSimError):
    """Peer behaviour that violates the protocol contract."""


class FlowControlError(ProtocolError):
    """Received data exceeding advertised flow-control credit."""


class LogicError(QuicSimError):
    """Internal invariant violation; indicates a simulator bug."""
