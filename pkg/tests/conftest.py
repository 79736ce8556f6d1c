"""Shared helpers: a direct two-node topology with QUIC endpoints on both
ends, used by transport, reliability, and acceptance tests."""

from quicsim.sim import Address, Network, Simulator, ms
from quicsim.transport import QuicConfig, QuicEndpoint

SERVER_PORT = 4433
CLIENT_PORT = 5000


class TwoNodeLab:
    """client node a <-> server node b over a single configurable link."""

    def __init__(self, seed=1, rate=None, delay=ms(10), queue=1000,
                 client_cfg=None, server_cfg=None):
        self.sim = Simulator(seed=seed)
        self.net = Network(self.sim)
        a = self.net.add_node("a")
        b = self.net.add_node("b")
        self.ab, self.ba = self.net.connect(a, b, rate, delay, queue)
        a.default_route = self.ab
        b.default_route = self.ba
        self.client_cfg = client_cfg or QuicConfig()
        self.server_cfg = server_cfg or self.client_cfg
        self.server_ep = QuicEndpoint(self.sim, b, SERVER_PORT, self.server_cfg)
        self.client_ep = QuicEndpoint(self.sim, a, CLIENT_PORT, self.client_cfg)
        self.deliveries = []  # (time, stream_id, bytes)
        self.server_conns = []
        self.server_ep.listen(self._on_connection)
        self.server_addr = Address("b", SERVER_PORT)

    def _on_connection(self, conn):
        self.server_conns.append(conn)
        conn.on_data = self._on_data

    def _on_data(self, conn):
        for sid, data in conn.recv():
            self.deliveries.append((self.sim.now, sid, data))

    def connect(self, connect_now=True):
        self.client = self.client_ep.connect(self.server_addr,
                                             connect_now=connect_now)
        return self.client

    @property
    def server(self):
        return self.server_conns[0]

    def run(self, until):
        self.sim.run_until(until)

    def delivered_bytes(self, stream_id=None):
        return b"".join(d for _, sid, d in self.deliveries
                        if stream_id is None or sid == stream_id)
