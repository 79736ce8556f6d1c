"""Traffic applications: a round-robin multi-stream client and a sink
server that reassembles and accounts each stream independently."""

import logging

logger = logging.getLogger(__name__)


class RoundRobinClient:
    """Sends fixed-size application packets at a fixed interval, scheduling
    the i-th packet on stream (i mod n) + 1. A packet the transport cannot
    fully accept (buffer or credit exhaustion) is retried before any new
    packet is generated, so offered load is preserved without unbounded
    application-side queueing."""

    def __init__(self, sim, connection, streams=1, packet_bytes=1000,
                 interval=2000, total_bytes=0, start_at=0):
        self.sim = sim
        self.conn = connection
        self.streams = streams
        self.packet_bytes = packet_bytes
        self.interval = interval
        self.total_bytes = total_bytes  # 0 means unlimited
        self.start_at = start_at
        self.generated_packets = 0
        self.accepted_bytes = 0
        self.sent_per_stream = {}
        self._pending = None  # (stream_hint, remaining bytes)
        self._payload = b"\xa5" * packet_bytes

    def start(self):
        self.sim.schedule(self.start_at, self._begin)

    def _begin(self):
        self.conn.connect()
        self._tick()

    def _tick(self):
        self._flush_pending()
        if self._pending is None and not self._done_generating():
            hint = (self.generated_packets % self.streams) + 1
            self.generated_packets += 1
            self._pending = (hint, self._payload)
            self._flush_pending()
        if self._pending is not None or not self._done_generating():
            self.sim.schedule_in(self.interval, self._tick)

    def _flush_pending(self):
        if self._pending is None:
            return
        hint, data = self._pending
        accepted = self.conn.send(data, stream_hint=hint)
        self.accepted_bytes += accepted
        self.sent_per_stream[hint] = self.sent_per_stream.get(hint, 0) + accepted
        if accepted == len(data):
            self._pending = None
        else:
            self._pending = (hint, data[accepted:])

    def _done_generating(self):
        return self.total_bytes and \
            self.generated_packets * self.packet_bytes >= self.total_bytes


class SinkServer:
    """Reads every delivery immediately and keeps per-stream byte counts and
    delivery timestamps."""

    def __init__(self, sim, record_deliveries=False):
        self.sim = sim
        self.record_deliveries = record_deliveries
        self.delivered_bytes = 0
        self.per_stream = {}
        self.deliveries = []  # (time, stream_id, nbytes) when recording
        self.first_delivery_at = None
        self.connections = []

    def on_connection(self, conn):
        self.connections.append(conn)
        conn.on_data = self._on_data

    def _on_data(self, conn):
        for sid, data in conn.recv():
            if self.first_delivery_at is None:
                self.first_delivery_at = self.sim.now
            self.delivered_bytes += len(data)
            self.per_stream[sid] = self.per_stream.get(sid, 0) + len(data)
            if self.record_deliveries:
                self.deliveries.append((self.sim.now, sid, len(data)))
