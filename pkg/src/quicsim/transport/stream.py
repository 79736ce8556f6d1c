"""A single bidirectional data stream: offset-addressed buffers plus the
stream-level flow-control counters. Stream 0 is reserved for handshake and
control traffic and never materializes as a Stream instance."""

from quicsim.buffers import StreamRxBuffer, StreamTxBuffer


class Stream:
    def __init__(self, stream_id, config):
        self.id = stream_id
        self.tx = StreamTxBuffer(config.stream_snd)
        self.rx = StreamRxBuffer(config.stream_rcv)
        # Credit we may send into (grows via MAX_STREAM_DATA from the peer).
        self.send_credit = config.params.max_stream_data
        # Credit we have advertised to the peer.
        self.recv_credit = config.params.max_stream_data
        self.rx_high = 0        # highest received offset+length
        self.consumed = 0       # bytes the application has read
        self.fin_pending = False
        self.fin_sent = False

    def write(self, data, fin=False):
        """Buffer application data, gated by stream credit. Returns bytes
        accepted; the FIN is only recorded once all of `data` is in."""
        credit_room = max(0, self.send_credit - self.tx.next_offset)
        accepted = self.tx.write(data[:credit_room])
        if fin and accepted == len(data):
            self.fin_pending = True
        return accepted

    @property
    def fin_received(self):
        return self.rx.fin_offset is not None
