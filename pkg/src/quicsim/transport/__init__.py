from quicsim.transport.connection import ConnectionState, QuicConnection
from quicsim.transport.endpoint import EndpointRegistry, QuicEndpoint
from quicsim.transport.params import QuicConfig, TransportParameters
from quicsim.transport.stream import Stream

__all__ = [
    "ConnectionState", "QuicConnection", "EndpointRegistry", "QuicEndpoint",
    "QuicConfig", "TransportParameters", "Stream",
]
