"""UDP-level adapter: binds a port on a simulated node, demultiplexes
datagrams to connections by peer address, forks server connections for
incoming handshakes, and answers version mismatches with a negotiation
packet. Also owns the registry of previously authenticated endpoints that
enables 0-RTT handshakes."""

import logging

from quicsim import wire
from quicsim.errors import ConfigError
from quicsim.sim.network import Address, Datagram
from quicsim.transport.connection import ConnectionState, QuicConnection
from quicsim.wire import LT_CLIENT_INITIAL, LT_VERSION_NEGOTIATION, LT_ZRTT_PROTECTED

logger = logging.getLogger(__name__)


class EndpointRegistry:
    """Previously authenticated remote endpoints, per node."""

    def __init__(self):
        self._known = {}

    def known(self, address):
        return address in self._known

    def connection_id(self, address):
        return self._known.get(address)

    def register(self, address, connection_id):
        self._known[address] = connection_id


class QuicEndpoint:
    def __init__(self, sim, node, port, config):
        self.sim = sim
        self.node = node
        self.config = config
        self.address = Address(node.name, port)
        self.registry = EndpointRegistry()
        self._connections = {}  # peer Address -> QuicConnection
        self.listener = None
        self.on_connection = None
        self.closed = False
        self.stray_packets = 0
        node.bind(port, self._handle_datagram)

    # -- connection creation -------------------------------------------------

    def connect(self, remote, connect_now=True):
        """Create a client connection to `remote`; starts the handshake
        unless `connect_now` is false (so data can be staged first)."""
        if remote in self._connections:
            raise ConfigError(f"connection to {remote} already exists")
        conn = QuicConnection(self.sim, self, remote, "client", self.config,
                              connection_id=self.sim.rng.getrandbits(64),
                              version=self.config.params.initial_version)
        self._connections[remote] = conn
        if connect_now:
            conn.connect()
        return conn

    def listen(self, on_connection=None):
        """Accept incoming connections, forking one socket per client."""
        if self.listener is not None:
            raise ConfigError("endpoint is already listening")
        self.on_connection = on_connection
        self.listener = QuicConnection(self.sim, self, None, "listener",
                                       self.config, connection_id=0,
                                       version=self.config.params.initial_version)
        self.listener.listen()
        return self.listener

    def forked_connections(self):
        return [c for c in self._connections.values() if c.role == "server"]

    def connections(self):
        return list(self._connections.values())

    # -- datagram plumbing -----------------------------------------------------

    def send(self, remote, payload):
        self.node.send(Datagram(self.address, remote, payload))

    def _handle_datagram(self, datagram):
        conn = self._connections.get(datagram.src)
        if conn is not None:
            conn.handle_datagram(datagram)
            return
        if self.listener is not None and \
                self.listener.state == ConnectionState.LISTENING:
            self._accept(datagram)
        else:
            self.stray_packets += 1

    def _accept(self, datagram):
        try:
            header, _ = wire.parse_packet(datagram.payload)
        except Exception:
            self.stray_packets += 1
            return
        if header.form != wire.FORM_LONG:
            self.stray_packets += 1
            return
        if header.long_type == LT_CLIENT_INITIAL:
            if header.version not in self.config.supported_versions:
                self._send_version_negotiation(datagram.src, header.connection_id)
                return
            cid = self.sim.rng.getrandbits(64)
        elif header.long_type == LT_ZRTT_PROTECTED:
            if not (self.config.force_0rtt or self.registry.known(datagram.src)):
                self.stray_packets += 1
                return
            cid = header.connection_id
        else:
            self.stray_packets += 1
            return
        conn = QuicConnection(self.sim, self, datagram.src, "server", self.config,
                              connection_id=cid, version=header.version)
        self._connections[datagram.src] = conn
        if self.on_connection is not None:
            self.on_connection(conn)
        conn.handle_datagram(datagram)

    def _send_version_negotiation(self, remote, client_cid):
        logger.debug("version negotiation with %s", remote)
        header = wire.long_header(LT_VERSION_NEGOTIATION, client_cid,
                                  wire.QUIC_VERSION_NEGOTIATION, 0)
        frame = wire.VersionNegotiationFrame(tuple(self.config.supported_versions))
        self.send(remote, wire.serialize_packet(header, [frame]))

    # -- teardown ------------------------------------------------------------

    def remove_connection(self, conn):
        if conn.role == "listener":
            self.listener = conn  # stays for state inspection; now CLOSED
        else:
            self._connections.pop(conn.peer, None)
        self._maybe_close()

    def _maybe_close(self):
        if self.closed or self._connections:
            return
        if self.listener is not None and \
                self.listener.state != ConnectionState.CLOSED:
            return
        self.node.unbind(self.address.port)
        self.closed = True

    def close(self):
        if self.listener is not None:
            self.listener.close()
        for conn in list(self._connections.values()):
            conn.close()
        self._maybe_close()
