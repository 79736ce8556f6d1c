"""Transport parameters and endpoint configuration.

The handshake models the cryptographic exchange with an opaque 64-byte blob;
the server appends its transport parameters to the blob so the client can
adopt them. Both endpoints of a simulated connection are configured from the
same `QuicConfig`, so the received parameters are checked for equality with
the local ones rather than merged.
"""

import struct
from dataclasses import dataclass, field

from quicsim.errors import ConfigError, ProtocolError
from quicsim.sim.engine import ms, sec
from quicsim.buffers import DEFAULT_SOCKET_BUFFER, DEFAULT_STREAM_BUFFER
from quicsim.wire import SUPPORTED_VERSIONS

# Opaque stand-in for the cryptographic handshake payload; never interpreted.
CRYPTO_BLOB = bytes(64)

_PARAMS = struct.Struct("!QQIQIB")


@dataclass
class TransportParameters:
    max_data: int = DEFAULT_SOCKET_BUFFER
    max_stream_data: int = DEFAULT_STREAM_BUFFER
    max_streams: int = 8
    idle_timeout: int = sec(300)
    initial_version: int = SUPPORTED_VERSIONS[0]
    omit_connection_id: bool = True

    def validate(self):
        if min(self.max_data, self.max_stream_data, self.max_streams,
               self.idle_timeout) <= 0:
            raise ConfigError("transport parameters must be positive")

    def encode(self):
        return _PARAMS.pack(self.max_data, self.max_stream_data,
                            self.max_streams, self.idle_timeout,
                            self.initial_version,
                            1 if self.omit_connection_id else 0)


PARAMS_SIZE = _PARAMS.size


def decode_params(data):
    if len(data) != PARAMS_SIZE:
        raise ProtocolError(f"transport parameter blob of {len(data)} bytes")
    md, msd, streams, idle, version, omit = _PARAMS.unpack(data)
    return TransportParameters(md, msd, streams, idle, version, bool(omit))


@dataclass
class QuicConfig:
    """Everything an endpoint needs: negotiated limits, buffer sizes,
    congestion control selection, and ACK emission policy."""

    params: TransportParameters = field(default_factory=TransportParameters)
    cc: object = "newreno"  # algorithm name or instance
    initial_ssthresh: int | None = None
    socket_snd: int = DEFAULT_SOCKET_BUFFER
    socket_rcv: int = DEFAULT_SOCKET_BUFFER
    stream_snd: int = DEFAULT_STREAM_BUFFER
    stream_rcv: int = DEFAULT_STREAM_BUFFER
    supported_versions: tuple = SUPPORTED_VERSIONS
    force_0rtt: bool = False
    ack_window: int = ms(1)
    ack_packet_threshold: int | None = None
    drain_rto_multiplier: int = 3
