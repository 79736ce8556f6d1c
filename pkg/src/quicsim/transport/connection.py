"""Connection socket: handshake state machine, send/receive paths,
acknowledgment generation and processing, retransmission orchestration,
flow control, and termination with a draining period.

All processing happens inside simulator event callbacks; a connection is
owned by exactly one endpoint and never shared.
"""

import enum
import logging

from quicsim import wire
from quicsim.buffers import SocketRxBuffer, SocketTxBuffer, StreamRxBuffer
from quicsim.cc import MSS, CongestionController, create_algorithm
from quicsim.errors import FlowControlError, LogicError, ParseError, ProtocolError
from quicsim.transport.params import (
    CRYPTO_BLOB,
    PARAMS_SIZE,
    decode_params,
)
from quicsim.transport.stream import Stream
from quicsim.wire import (
    LT_CLIENT_INITIAL,
    LT_HANDSHAKE,
    LT_VERSION_NEGOTIATION,
    LT_ZRTT_PROTECTED,
    MAX_PACKET_SIZE,
    QUIC_VERSION_NEGOTIATION,
    AckFrame,
    ConnectionCloseFrame,
    MaxDataFrame,
    MaxStreamDataFrame,
    PaddingFrame,
    StreamFrame,
    VersionNegotiationFrame,
)

logger = logging.getLogger(__name__)


class ConnectionState(enum.Enum):
    IDLE = "idle"
    LISTENING = "listening"
    CONNECTING_1RTT = "connecting_1rtt"
    CONNECTING_2RTT = "connecting_2rtt"
    OPEN = "open"
    CLOSING = "closing"
    CLOSED = "closed"


S = ConnectionState

# Legal state-machine edges. CLOSING always precedes CLOSED except for a
# listener, which has no draining period of its own.
TRANSITIONS = {
    S.IDLE: {S.CONNECTING_1RTT, S.CONNECTING_2RTT, S.OPEN, S.LISTENING},
    S.LISTENING: {S.CLOSED},
    S.CONNECTING_2RTT: {S.CONNECTING_1RTT, S.CLOSING},
    S.CONNECTING_1RTT: {S.OPEN, S.CLOSING},
    S.OPEN: {S.CLOSING},
    S.CLOSING: {S.CLOSED},
    S.CLOSED: set(),
}

_DATA_STATES = (S.CONNECTING_1RTT, S.CONNECTING_2RTT, S.OPEN)

# Header selection phases for the handshake.
_HS_INITIAL = "initial"        # client initial (possibly re-sent after version bounce)
_HS_ZRTT = "zrtt"              # first packet of a 0-RTT connection
_HS_COMPLETING = "completing"  # client hello completing the 1-RTT handshake
_HS_SERVER = "server"          # server handshake packets
_HS_DONE = "done"              # short headers from here on

ERR_NONE = 0
ERR_PROTOCOL = 1
ERR_FLOW_CONTROL = 2
ERR_INTERNAL = 3


class QuicConnection:
    def __init__(self, sim, endpoint, peer, role, config, connection_id, version):
        self.sim = sim
        self.endpoint = endpoint
        self.peer = peer
        self.role = role  # "client" | "server" | "listener"
        self.config = config
        self.params = config.params
        self.connection_id = connection_id
        self.version = version
        self.state = S.IDLE
        self.transitions = []

        self._sock_tx = SocketTxBuffer(config.socket_snd)
        self._sock_rx = SocketRxBuffer(config.socket_rcv)
        self._rx_backlog = []
        self._streams = {}
        self.cc = CongestionController(create_algorithm(config.cc),
                                       config.initial_ssthresh)

        self._next_pn = 0
        self.emitted_pns = []
        self.largest_received_pn = -1

        # Acknowledgment state over ACK-eliciting packets only.
        self._rx_ranges = []       # ascending inclusive [lo, hi] ranges
        self._ack_largest = -1
        self._ack_largest_time = 0
        self._ack_pending = 0
        self._ack_timer = None

        # Connection-level flow control (stream payload bytes, stream 0 exempt).
        self._peer_max_data = config.params.max_data
        self._conn_flow_sent = 0
        self._conn_rx_credit = config.params.max_data
        self._conn_rx_high = 0
        self._conn_consumed = 0

        self._hs_phase = _HS_INITIAL
        self._stream0_tx_offset = 0
        self._stream0_rx = None     # created lazily (mirrors StreamRxBuffer)
        self._stream0_in = b""
        self._params_verified = role != "client"

        self._idle_timer = None
        self._rto_timer = None
        self._drain_timer = None

        self.on_data = None          # callable(conn), invoked on new app data
        self.trace_hook = None       # callable(kind: str, conn)
        self._notify_pending = False

        self.packets_sent = 0
        self.packets_lost = 0
        self.retransmitted_packets = 0
        self.parse_errors = 0
        self.rtt_samples = []        # raw (time, sample) pairs in ticks
        self.error = None

    # ------------------------------------------------------------------
    # state machine
    # ------------------------------------------------------------------

    def _transition(self, new_state):
        if new_state not in TRANSITIONS[self.state]:
            raise LogicError(f"illegal transition {self.state.name} -> {new_state.name}")
        logger.debug("%s %s: %s -> %s", self.role, self.connection_id,
                     self.state.name, new_state.name)
        self.transitions.append((self.sim.now, self.state, new_state))
        self.state = new_state
        self._trace("state")

    def _trace(self, kind):
        if self.trace_hook is not None:
            self.trace_hook(kind, self)

    # ------------------------------------------------------------------
    # connection establishment
    # ------------------------------------------------------------------

    def listen(self):
        if self.role != "listener" or self.state != S.IDLE:
            raise ProtocolError("listen() requires an idle listener")
        self._transition(S.LISTENING)

    def connect(self):
        """Start the handshake. 0-RTT when the peer is already authenticated
        (or forced); otherwise 1-RTT, or 2-RTT when the configured version
        first has to be negotiated."""
        if self.role != "client" or self.state != S.IDLE:
            raise ProtocolError("connect() requires an idle client connection")
        registry = self.endpoint.registry
        if self.config.force_0rtt or registry.known(self.peer):
            previous = registry.connection_id(self.peer)
            if previous is not None:
                self.connection_id = previous
            self._hs_phase = _HS_ZRTT
            self._transition(S.OPEN)
            self._queue_stream0(CRYPTO_BLOB)
            self._touch_idle()
            self._pump_streams()
            self._try_transmit()
        else:
            self._hs_phase = _HS_INITIAL
            if self.version == QUIC_VERSION_NEGOTIATION:
                self._transition(S.CONNECTING_2RTT)
            else:
                self._transition(S.CONNECTING_1RTT)
            self._queue_stream0(CRYPTO_BLOB)
            self._touch_idle()
            self._try_transmit()

    def _queue_stream0(self, blob):
        frame = StreamFrame(0, self._stream0_tx_offset, blob, False)
        self._stream0_tx_offset += len(blob)
        if not self._sock_tx.add(frame, priority=True):
            raise LogicError("handshake data exceeds socket buffer")

    # ------------------------------------------------------------------
    # application interface
    # ------------------------------------------------------------------

    def send(self, data, stream_hint=0, fin=False):
        """Route application data to a stream; the hint selects the stream
        (0 or absent means the first data stream). Returns bytes accepted;
        buffer or credit exhaustion yields partial or zero acceptance."""
        if stream_hint < 0 or stream_hint > self.params.max_streams:
            raise ValueError(
                f"stream hint {stream_hint} outside 1..{self.params.max_streams}")
        if self.state in (S.CLOSING, S.CLOSED):
            return 0
        sid = stream_hint or 1
        stream = self._get_or_create_stream(sid)
        accepted = stream.write(data, fin)
        if self.state == S.OPEN:
            self._pump_streams()
            self._try_transmit()
        return accepted

    def recv(self):
        """Drain in-order application data as (stream_id, bytes) chunks and
        advance receiver flow-control credit for the consumed bytes."""
        chunks = self._sock_rx.read_all()
        if self._rx_backlog:
            chunks.extend(self._rx_backlog)
            self._rx_backlog = []
        for sid, data in chunks:
            stream = self._streams.get(sid)
            if stream is not None:
                stream.consumed += len(data)
            self._conn_consumed += len(data)
        if chunks:
            self._flow_updates()
        return chunks

    def close(self):
        """Immediate close: send the closing frame and start draining.
        Idempotent. Closing a listener closes every forked socket."""
        if self.state in (S.CLOSING, S.CLOSED):
            return
        if self.role == "listener":
            for child in self.endpoint.forked_connections():
                child.close()
            self._transition(S.CLOSED)
            self.endpoint.remove_connection(self)
            return
        self._enter_closing(send_close=True)

    # ------------------------------------------------------------------
    # datagram reception
    # ------------------------------------------------------------------

    def handle_datagram(self, datagram):
        if self.state == S.CLOSED:
            return
        try:
            header, frames = wire.parse_packet(datagram.payload)
        except ParseError as exc:
            self.parse_errors += 1
            logger.debug("dropped malformed packet from %s: %s", self.peer, exc)
            return
        self._dispatch(header, frames)

    def _dispatch(self, header, frames):
        self._touch_idle()
        self.largest_received_pn = max(self.largest_received_pn, header.packet_number)
        eliciting = any(
            not isinstance(f, (AckFrame, PaddingFrame, VersionNegotiationFrame,
                               ConnectionCloseFrame))
            for f in frames)
        try:
            accepted = self._dispatch_packet(header, frames)
        except ProtocolError as exc:
            self._fatal_close(exc)
            return
        if not accepted:
            return
        if eliciting and self.state in (*_DATA_STATES, S.CLOSING):
            self._record_eliciting(header.packet_number)
        if self.state in _DATA_STATES:
            self._pump_streams()
            self._try_transmit()
        if eliciting and self._ack_pending:
            self._schedule_ack()
        if self._notify_pending:
            self._notify_pending = False
            if self.on_data is not None:
                self.on_data(self)

    def _dispatch_packet(self, header, frames):
        if header.form == wire.FORM_LONG:
            lt = header.long_type
            if lt == LT_VERSION_NEGOTIATION:
                return self._on_version_negotiation(frames)
            if lt == LT_CLIENT_INITIAL:
                return self._on_client_initial(header, frames)
            if lt == LT_ZRTT_PROTECTED:
                return self._on_zrtt(header, frames)
            if lt == LT_HANDSHAKE:
                return self._on_handshake(header, frames)
            return False
        # Short header: normal data path; it also completes the server side
        # of the handshake if the explicit completing hello was lost.
        if self.role == "server" and self.state == S.CONNECTING_1RTT:
            self._complete_server_handshake()
        if self.state in (S.OPEN, S.CLOSING):
            self._process_frames(frames)
            return True
        return False

    # -- handshake packet handlers ----------------------------------------

    def _on_version_negotiation(self, frames):
        if self.role != "client" or self.state not in (S.CONNECTING_1RTT,
                                                       S.CONNECTING_2RTT):
            return False
        offer = next((f for f in frames if isinstance(f, VersionNegotiationFrame)),
                     None)
        if offer is None:
            return False
        common = next((v for v in offer.versions
                       if v in self.config.supported_versions), None)
        if common is None:
            raise ProtocolError(f"no common version in {offer.versions!r}")
        self.version = common
        if self.state == S.CONNECTING_2RTT:
            self._transition(S.CONNECTING_1RTT)
        # Re-send the pending initial under the agreed version; the
        # retransmission carries a fresh, higher packet number.
        self._sock_tx.mark_all_lost()
        self._sock_tx.prepare_retransmissions()
        self._sync_flight()
        return True

    def _on_client_initial(self, header, frames):
        if self.role != "server":
            return False
        if self.state == S.IDLE:
            self.version = header.version
            self._hs_phase = _HS_SERVER
            self._transition(S.CONNECTING_1RTT)
            self._touch_idle()
            self._process_frames(frames)
            # Reply with the handshake: modeled crypto plus our parameters.
            self._queue_stream0(CRYPTO_BLOB + self.params.encode())
            return True
        if self.state in (S.CONNECTING_1RTT, S.OPEN, S.CLOSING):
            # Duplicate initial (client retransmission); acknowledge again.
            self._process_frames(frames)
            return True
        return False

    def _on_zrtt(self, header, frames):
        if self.role != "server":
            return False
        if self.state == S.IDLE:
            if not (self.config.force_0rtt or self.endpoint.registry.known(self.peer)):
                logger.debug("0-RTT from unauthenticated peer %s dropped", self.peer)
                return False
            self.connection_id = header.connection_id
            self.version = header.version
            self._hs_phase = _HS_DONE
            self._transition(S.OPEN)
            self._touch_idle()
            self.endpoint.registry.register(self.peer, self.connection_id)
            self._process_frames(frames)
            return True
        if self.state in (S.OPEN, S.CLOSING):
            self._process_frames(frames)
            return True
        return False

    def _on_handshake(self, header, frames):
        if self.role == "client":
            if self.state == S.CONNECTING_1RTT:
                self.connection_id = header.connection_id
                self._transition(S.OPEN)
                self._hs_phase = _HS_COMPLETING
                self._process_frames(frames)
                if not self._params_verified:
                    raise ProtocolError("handshake carried no transport parameters")
                self.endpoint.registry.register(self.peer, self.connection_id)
                # Conclude the exchange; stream frames and ACKs ride along.
                self._queue_stream0(CRYPTO_BLOB)
                return True
            if self.state in (S.OPEN, S.CLOSING):
                self._process_frames(frames)
                return True
            return False
        if self.role == "server":
            # The completing client hello (or a retransmission of it).
            if self.state == S.CONNECTING_1RTT:
                self._complete_server_handshake()
            if self.state in (S.OPEN, S.CLOSING):
                self._process_frames(frames)
                return True
        return False

    def _complete_server_handshake(self):
        self._transition(S.OPEN)
        self._hs_phase = _HS_DONE
        self.endpoint.registry.register(self.peer, self.connection_id)

    # ------------------------------------------------------------------
    # frame processing
    # ------------------------------------------------------------------

    def _process_frames(self, frames):
        closing = self.state == S.CLOSING
        for frame in frames:
            if isinstance(frame, AckFrame):
                self._on_ack_frame(frame)
            elif closing:
                # Received data is acknowledged but no longer delivered; it
                # will be discarded when the draining period expires.
                continue
            elif isinstance(frame, StreamFrame):
                self._on_stream_frame(frame)
            elif isinstance(frame, MaxDataFrame):
                self._peer_max_data = max(self._peer_max_data, frame.credit)
            elif isinstance(frame, MaxStreamDataFrame):
                stream = self._get_or_create_stream(frame.stream_id, by_peer=True)
                stream.send_credit = max(stream.send_credit, frame.credit)
            elif isinstance(frame, ConnectionCloseFrame):
                self._enter_closing(send_close=False)
                closing = True
            # PaddingFrame and VersionNegotiationFrame are no-ops here.

    def _on_stream_frame(self, frame):
        if frame.stream_id == 0:
            self._on_stream0_frame(frame)
            return
        stream = self._get_or_create_stream(frame.stream_id, by_peer=True)
        end = frame.offset + len(frame.data)
        if end > stream.recv_credit:
            raise wire_flow_error(frame.stream_id, end, stream.recv_credit)
        if end > stream.rx_high:
            self._conn_rx_high += end - stream.rx_high
            stream.rx_high = end
            if self._conn_rx_high > self._conn_rx_credit:
                raise wire_flow_error(None, self._conn_rx_high, self._conn_rx_credit)
        released = stream.rx.insert(frame.offset, frame.data, frame.fin)
        if released:
            self._deliver(frame.stream_id, released)

    def _on_stream0_frame(self, frame):
        if self._stream0_rx is None:
            self._stream0_rx = StreamRxBuffer(self.config.socket_rcv)
        released = self._stream0_rx.insert(frame.offset, frame.data, frame.fin)
        if released:
            self._stream0_in += released
            if not self._params_verified and \
                    len(self._stream0_in) >= len(CRYPTO_BLOB) + PARAMS_SIZE:
                blob = self._stream0_in[len(CRYPTO_BLOB):len(CRYPTO_BLOB) + PARAMS_SIZE]
                received = decode_params(blob)
                if received != self.params:
                    raise ProtocolError(
                        f"peer transport parameters {received} differ from "
                        f"local configuration {self.params}")
                self._params_verified = True

    def _deliver(self, stream_id, data):
        if self._rx_backlog or not self._sock_rx.add(stream_id, data):
            self._rx_backlog.append((stream_id, data))
        self._notify_pending = True

    def _get_or_create_stream(self, stream_id, by_peer=False):
        stream = self._streams.get(stream_id)
        if stream is None:
            if stream_id < 1 or stream_id > self.params.max_streams:
                raise ProtocolError(f"stream id {stream_id} outside "
                                    f"1..{self.params.max_streams}")
            stream = Stream(stream_id, self.config)
            self._streams[stream_id] = stream
        return stream

    # ------------------------------------------------------------------
    # acknowledgment processing (sender side)
    # ------------------------------------------------------------------

    def _on_ack_frame(self, frame):
        if self.state not in (S.OPEN, S.CLOSING):
            return
        now = self.sim.now
        largest = frame.largest_acked
        ranges = wire.ack_ranges(frame)
        cc = self.cc

        item = self._sock_tx.item_for_pn(largest)
        if item is not None and item.in_flight:
            sample = now - item.sent_at
            cc.rtt_update(sample, frame.ack_delay)
            self.rtt_samples.append((now, sample))
            self._trace("rtt")

        newly_acked, newly_lost = self._sock_tx.on_ack(
            largest, ranges, now, cc.loss_rule,
            cc.state.srtt, cc.state.latest_rtt)
        cc.state.largest_acked_pn = max(cc.state.largest_acked_pn, largest)
        self._sync_flight()

        if newly_acked:
            cc.on_ack(sum(i.size for i in newly_acked), len(newly_acked))
            self._restart_rto()
        if newly_lost:
            self.packets_lost += len(newly_lost)
            cc.on_loss_event(max(i.packet_number for i in newly_lost))
            self.retransmitted_packets += self._sock_tx.prepare_retransmissions()
            self._sync_flight()
        if newly_acked or newly_lost:
            self._trace("cc")

    def _sync_flight(self):
        self.cc.state.bytes_in_flight = self._sock_tx.bytes_in_flight

    # ------------------------------------------------------------------
    # acknowledgment generation (receiver side)
    # ------------------------------------------------------------------

    def _record_eliciting(self, pn):
        self._merge_rx_pn(pn)
        if pn > self._ack_largest:
            self._ack_largest = pn
            self._ack_largest_time = self.sim.now
        self._ack_pending += 1

    def _merge_rx_pn(self, pn):
        ranges = self._rx_ranges
        for i, r in enumerate(ranges):
            if r[0] - 1 <= pn <= r[1] + 1:
                r[0] = min(r[0], pn)
                r[1] = max(r[1], pn)
                if i + 1 < len(ranges) and ranges[i + 1][0] <= r[1] + 1:
                    r[1] = max(r[1], ranges[i + 1][1])
                    del ranges[i + 1]
                break
            if pn < r[0]:
                ranges.insert(i, [pn, pn])
                break
        else:
            ranges.append([pn, pn])
        # Bound the ACK frame size: forget the oldest ranges beyond 32.
        if len(ranges) > 32:
            del ranges[:len(ranges) - 32]

    def generate_ack(self):
        """Build an ACK covering every acknowledged-eliciting packet seen,
        with the delay since the largest one was received."""
        if not self._rx_ranges:
            raise LogicError("nothing to acknowledge")
        delay = wire.ack_delay_encode(self._ack_largest_time, self.sim.now)
        return wire.ack_from_ranges([tuple(r) for r in self._rx_ranges], delay)

    def _schedule_ack(self):
        threshold = self.config.ack_packet_threshold
        if threshold is not None and self._ack_pending >= threshold:
            self._flush_ack()
            return
        if self._ack_timer is None or not self._ack_timer.pending:
            self._ack_timer = self.sim.schedule_in(self.config.ack_window,
                                                   self._on_ack_timer)

    def _on_ack_timer(self):
        self._ack_timer = None
        if self._ack_pending and self.state not in (S.IDLE, S.CLOSED):
            self._flush_ack()

    def _flush_ack(self):
        # Prefer piggybacking on an outgoing data packet.
        if self.state in _DATA_STATES:
            self._try_transmit()
        if not self._ack_pending:
            return
        frame = self.generate_ack()
        header = self._make_header(self._alloc_pn())
        self._send_packet(header, [frame])
        self._ack_flushed()

    def _ack_flushed(self):
        self._ack_pending = 0
        if self._ack_timer is not None:
            self.sim.cancel(self._ack_timer)
            self._ack_timer = None

    # ------------------------------------------------------------------
    # transmission
    # ------------------------------------------------------------------

    def _alloc_pn(self):
        pn = self._next_pn
        self._next_pn += 1
        self.emitted_pns.append(pn)
        return pn

    def _make_header(self, pn):
        phase = self._hs_phase
        if phase == _HS_DONE:
            cid = None if self.params.omit_connection_id else self.connection_id
            return wire.short_header(pn, cid)
        long_type = {
            _HS_INITIAL: LT_CLIENT_INITIAL,
            _HS_ZRTT: LT_ZRTT_PROTECTED,
            _HS_COMPLETING: LT_HANDSHAKE,
            _HS_SERVER: LT_HANDSHAKE,
        }[phase]
        return wire.long_header(long_type, self.connection_id, self.version, pn)

    def _pump_streams(self):
        """Move admitted stream data into the socket buffer, gated by
        connection-level credit; chunks the socket rejects go back to the
        stream buffer at their original offset."""
        if self.state != S.OPEN:
            return
        for sid in sorted(self._streams):
            stream = self._streams[sid]
            while stream.tx.pending_bytes or (stream.fin_pending and not stream.fin_sent):
                remaining = self._peer_max_data - self._conn_flow_sent
                if remaining <= 0:
                    return
                issued = stream.tx.issue(min(MSS, remaining))
                if issued is None:
                    if stream.fin_pending and not stream.fin_sent:
                        fin_frame = StreamFrame(sid, stream.tx.next_offset, b"", True)
                        if self._sock_tx.add(fin_frame):
                            stream.fin_sent = True
                        else:
                            return
                    break
                offset, data = issued
                fin = (stream.fin_pending and not stream.tx.pending_bytes
                       and offset + len(data) == stream.tx.next_offset)
                frame = StreamFrame(sid, offset, data, fin)
                if self._sock_tx.add(frame):
                    self._conn_flow_sent += len(data)
                    if fin:
                        stream.fin_sent = True
                else:
                    stream.tx.requeue(offset, data)
                    return

    def _try_transmit(self):
        """Drain assembled packets while the congestion window allows."""
        if self.state not in _DATA_STATES:
            return
        while True:
            unsent = self._sock_tx.unsent_bytes
            if unsent == 0:
                break
            pn = self._next_pn
            header = self._make_header(pn)
            ack_frame = self.generate_ack() if self._ack_pending else None
            ack_wire = 1 + ack_frame.payload_size if ack_frame else 0
            wire_limit = MAX_PACKET_SIZE - header.size() - ack_wire
            next_size = min(MSS, unsent)
            self._sync_flight()
            if not self.cc.can_send(next_size):
                break
            item = self._sock_tx.next_packet(next_size, wire_limit)
            if item is None:
                break
            self._alloc_pn()
            self._sock_tx.mark_sent(item, pn, self.sim.now)
            frames = [ack_frame, *item.frames] if ack_frame else item.frames
            self._send_packet(header, frames)
            if ack_frame:
                self._ack_flushed()
            self.cc.on_packet_sent(item.size, pn, self.sim.now)
            self._sync_flight()
            self._advance_hs_phase()
            if self._rto_timer is None or not self._rto_timer.pending:
                self._restart_rto()
            self._trace("cc")

    def _advance_hs_phase(self):
        if self._hs_phase in (_HS_ZRTT, _HS_COMPLETING):
            self._hs_phase = _HS_DONE

    def _send_packet(self, header, frames):
        if self.state == S.CLOSED:
            raise LogicError("transmission from a closed connection")
        if self.state == S.CLOSING and any(
                not isinstance(f, (AckFrame, ConnectionCloseFrame, PaddingFrame))
                for f in frames):
            raise LogicError("only close-class frames may be sent while closing")
        payload = wire.serialize_packet(header, frames)
        self.endpoint.send(self.peer, payload)
        self.packets_sent += 1
        self._touch_idle()

    # ------------------------------------------------------------------
    # timers
    # ------------------------------------------------------------------

    def _touch_idle(self):
        """Reset the idle timeout on every transmission or reception."""
        if self.state in (S.CLOSING, S.CLOSED) or self.role == "listener":
            return
        if self._idle_timer is not None:
            self.sim.cancel(self._idle_timer)
        self._idle_timer = self.sim.schedule_in(self.params.idle_timeout,
                                                self._on_idle_timeout)

    def _on_idle_timeout(self):
        self._idle_timer = None
        if self.state in (*_DATA_STATES,):
            logger.debug("idle timeout on %s", self.connection_id)
            self._enter_closing(send_close=False)

    def _restart_rto(self):
        if self._rto_timer is not None:
            self.sim.cancel(self._rto_timer)
            self._rto_timer = None
        if self._sock_tx.bytes_in_flight > 0 and self.state in _DATA_STATES:
            self._rto_timer = self.sim.schedule_in(self.cc.effective_rto,
                                                   self._on_rto_timer)

    def _on_rto_timer(self):
        self._rto_timer = None
        if self._sock_tx.bytes_in_flight == 0 or self.state not in _DATA_STATES:
            return
        self._sync_flight()
        self.cc.on_rto()
        lost = self._sock_tx.mark_all_lost()
        self.packets_lost += len(lost)
        self.retransmitted_packets += self._sock_tx.prepare_retransmissions()
        self._sync_flight()
        self._trace("cc")
        self._try_transmit()
        if self._rto_timer is None and self._sock_tx.bytes_in_flight > 0:
            self._restart_rto()

    # ------------------------------------------------------------------
    # termination
    # ------------------------------------------------------------------

    def _enter_closing(self, send_close, error_code=ERR_NONE):
        if self.state in (S.CLOSING, S.CLOSED):
            return
        self._transition(S.CLOSING)
        for attr in ("_idle_timer", "_rto_timer"):
            handle = getattr(self, attr)
            if handle is not None:
                self.sim.cancel(handle)
                setattr(self, attr, None)
        if send_close:
            header = self._make_header(self._alloc_pn())
            frames = [ConnectionCloseFrame(error_code)]
            if self._ack_pending:
                frames.insert(0, self.generate_ack())
                self._ack_flushed()
            self._send_packet(header, frames)
        drain = self.config.drain_rto_multiplier * self.cc.effective_rto
        self._drain_timer = self.sim.schedule_in(drain, self._on_drain_timeout)

    def _on_drain_timeout(self):
        self._drain_timer = None
        self._transition(S.CLOSED)
        for attr in ("_idle_timer", "_rto_timer", "_ack_timer"):
            handle = getattr(self, attr)
            if handle is not None:
                self.sim.cancel(handle)
                setattr(self, attr, None)
        self.on_data = None
        self.endpoint.remove_connection(self)

    def _fatal_close(self, exc):
        logger.warning("connection error on %s: %s", self.connection_id, exc)
        self.error = exc
        code = ERR_FLOW_CONTROL if "credit" in str(exc) else ERR_PROTOCOL
        if self.state not in (S.CLOSING, S.CLOSED):
            self._enter_closing(send_close=True, error_code=code)

    # ------------------------------------------------------------------
    # receiver flow control
    # ------------------------------------------------------------------

    def _flow_updates(self):
        """Advance credit to consumed + capacity once the remaining window
        falls to half the receive-buffer capacity; emits MAX_STREAM_DATA /
        MAX_DATA frames."""
        frames = []
        for sid in sorted(self._streams):
            stream = self._streams[sid]
            capacity = stream.rx.capacity
            if stream.recv_credit - stream.consumed <= capacity // 2:
                stream.recv_credit = stream.consumed + capacity
                frames.append(MaxStreamDataFrame(sid, stream.recv_credit))
        capacity = self._sock_rx.capacity
        if self._conn_rx_credit - self._conn_consumed <= capacity // 2:
            self._conn_rx_credit = self._conn_consumed + capacity
            frames.append(MaxDataFrame(self._conn_rx_credit))
        if frames and self.state in _DATA_STATES:
            for frame in frames:
                self._sock_tx.add(frame, priority=True)
            self._try_transmit()
        return frames

    # ------------------------------------------------------------------
    # introspection helpers
    # ------------------------------------------------------------------

    @property
    def bytes_in_flight(self):
        return self._sock_tx.bytes_in_flight

    def stream_ids(self):
        return sorted(self._streams)

    def stream(self, stream_id):
        return self._streams[stream_id]


def wire_flow_error(stream_id, received, credit):
    where = "connection" if stream_id is None else f"stream {stream_id}"
    return FlowControlError(
        f"{where} received {received} bytes beyond advertised credit {credit}")
