"""Transmit and receive buffers for the socket and stream layers.

Byte accounting throughout is in frame payload bytes (stream data bytes, or
the body of a control frame); header and subheader overhead is tracked
separately by the wire budget during packet assembly. Socket TX capacity
counts unsent plus sent-but-unacknowledged bytes, the safer bound.
"""

from collections import deque
from dataclasses import dataclass, field

from quicsim.errors import LogicError, ProtocolError
from quicsim.wire import STREAM_OVERHEAD, StreamFrame

DEFAULT_SOCKET_BUFFER = 128 * 1024
DEFAULT_STREAM_BUFFER = 64 * 1024


@dataclass
class SocketTxItem:
    """One packet's worth of frames in the sent list."""

    frames: list
    size: int  # payload bytes
    packet_number: int | None = None
    sent_at: int | None = None
    acked_at: int | None = None
    lost: bool = False
    retransmitted: bool = False
    acked: bool = False
    released: bool = False

    @property
    def in_flight(self):
        return self.sent_at is not None and not (self.acked or self.lost)


def _frame_wire_size(frame):
    if isinstance(frame, StreamFrame):
        return STREAM_OVERHEAD + len(frame.data)
    return 1 + frame.payload_size


class SocketTxBuffer:
    """Socket-level transmit buffer: an unsent FIFO plus the sent list.

    Frames added with `priority=True` (stream-0 and connection control
    frames) drain ahead of all ordinary data frames. `next_packet` assembles
    frames into packets of the requested size, splitting stream frames while
    preserving their offsets.
    """

    def __init__(self, capacity=DEFAULT_SOCKET_BUFFER):
        self.capacity = capacity
        self._control = deque()
        self._data = deque()
        self._sent = []          # SocketTxItems in transmission order
        self._by_pn = {}
        self._inflight = {}      # pn -> item, sent and neither acked nor lost
        self._lost_pending = []  # lost items whose frames await re-queueing
        self._buffered = 0       # unsent + sent-unacked payload bytes
        self._unsent = 0
        self.bytes_in_flight = 0
        self.largest_sent_pn = -1

    # -- queueing ----------------------------------------------------------

    def add(self, frame, priority=False):
        """Queue a frame for transmission. False if capacity would be exceeded."""
        size = frame.payload_size
        if self._buffered + size > self.capacity:
            return False
        (self._control if priority else self._data).append(frame)
        self._buffered += size
        self._unsent += size
        return True

    @property
    def unsent_bytes(self):
        return self._unsent

    @property
    def buffered_bytes(self):
        return self._buffered

    # -- packet assembly ---------------------------------------------------

    def next_packet(self, max_bytes, wire_limit=None):
        """Assemble up to `max_bytes` payload bytes into a new sent-list item.

        `wire_limit`, when given, bounds the serialized size of the taken
        frames (subheaders included). Returns None when nothing fits.
        """
        if max_bytes <= 0:
            return None
        taken = []
        payload = 0
        wire = 0
        for queue in (self._control, self._data):
            while queue:
                frame = queue[0]
                budget = max_bytes - payload
                if isinstance(frame, StreamFrame):
                    if wire_limit is not None:
                        budget = min(budget, wire_limit - wire - STREAM_OVERHEAD)
                    if budget <= 0:
                        break
                    if len(frame.data) <= budget:
                        queue.popleft()
                        taken.append(frame)
                        payload += len(frame.data)
                        wire += _frame_wire_size(frame)
                    else:
                        head = StreamFrame(frame.stream_id, frame.offset,
                                           frame.data[:budget], fin=False)
                        queue[0] = StreamFrame(frame.stream_id, frame.offset + budget,
                                               frame.data[budget:], fin=frame.fin)
                        taken.append(head)
                        payload += budget
                        wire += _frame_wire_size(head)
                        break
                else:
                    wsize = _frame_wire_size(frame)
                    if frame.payload_size > budget or \
                            (wire_limit is not None and wire + wsize > wire_limit):
                        break
                    queue.popleft()
                    taken.append(frame)
                    payload += frame.payload_size
                    wire += wsize
            else:
                continue
            break
        if not taken:
            return None
        self._unsent -= payload
        item = SocketTxItem(frames=taken, size=payload)
        self._sent.append(item)
        return item

    def mark_sent(self, item, packet_number, now):
        if packet_number <= self.largest_sent_pn:
            raise LogicError("packet numbers must strictly increase")
        item.packet_number = packet_number
        item.sent_at = now
        self._by_pn[packet_number] = item
        self._inflight[packet_number] = item
        self.largest_sent_pn = packet_number
        self.bytes_in_flight += item.size

    # -- acknowledgment and loss -------------------------------------------

    def on_ack(self, largest_acked, ranges, now, loss_rule, srtt, latest_rtt):
        """Apply an ACK. `ranges` are inclusive (lo, hi) acked pn ranges.

        Returns (newly_acked, newly_lost) item lists. Acked payload is
        released immediately; the item stays as a stub for RTT sampling.
        Late ACKs for packets already declared lost are ignored.
        """
        if largest_acked > self.largest_sent_pn:
            raise ProtocolError(
                f"ACK for unsent packet {largest_acked} (largest sent "
                f"{self.largest_sent_pn})")
        newly_acked = []
        for item in list(self._inflight.values()):
            pn = item.packet_number
            if any(lo <= pn <= hi for lo, hi in ranges):
                item.acked = True
                item.acked_at = now
                item.released = True
                item.frames = []
                self._buffered -= item.size
                self.bytes_in_flight -= item.size
                del self._inflight[pn]
                newly_acked.append(item)
        newly_lost = []
        for item in list(self._inflight.values()):
            if loss_rule.is_lost(item.packet_number, item.sent_at,
                                 largest_acked, now, srtt, latest_rtt):
                self._mark_lost(item)
                newly_lost.append(item)
        return newly_acked, newly_lost

    def _mark_lost(self, item):
        item.lost = True
        self.bytes_in_flight -= item.size
        del self._inflight[item.packet_number]
        self._lost_pending.append(item)

    def item_for_pn(self, packet_number):
        return self._by_pn.get(packet_number)

    def mark_all_lost(self):
        """Mark every in-flight item lost (retransmission timeout)."""
        lost = list(self._inflight.values())
        for item in lost:
            self._mark_lost(item)
        return lost

    def prepare_retransmissions(self):
        """Re-queue the frames of lost items at the head of the unsent FIFO.

        The items stay in the sent list as stubs so late ACKs for their old
        packet numbers remain harmless; the re-queued frames get fresh
        packet numbers on their next transmission.
        """
        pending = self._lost_pending
        self._lost_pending = []
        for item in reversed(pending):
            for frame in reversed(item.frames):
                self._control.appendleft(frame)
            self._unsent += item.size
            item.retransmitted = True
            item.released = True
            item.frames = []
        return len(pending)

    def recompute_bytes_in_flight(self):
        """From-scratch recount; must equal the incremental value."""
        return sum(item.size for item in self._sent if item.in_flight)

    def sent_items(self):
        return list(self._sent)


class StreamTxBuffer:
    """Stream-level transmit buffer, addressed by stream offset.

    `write` assigns offsets to new application bytes; `issue` hands the
    front of the pending data to the socket layer; `requeue` takes back a
    chunk the socket rejected, at its original offset.
    """

    def __init__(self, capacity=DEFAULT_STREAM_BUFFER):
        self.capacity = capacity
        self._pending = deque()  # (offset, bytes) ascending, disjoint
        self._pending_bytes = 0
        self.next_offset = 0     # next offset a new byte will get

    @property
    def pending_bytes(self):
        return self._pending_bytes

    def write(self, data):
        """Buffer as much of `data` as capacity allows; returns bytes accepted."""
        space = self.capacity - self._pending_bytes
        accepted = min(len(data), space)
        if accepted > 0:
            self._pending.append((self.next_offset, bytes(data[:accepted])))
            self.next_offset += accepted
            self._pending_bytes += accepted
        return accepted

    def issue(self, max_bytes):
        """Pop up to `max_bytes` from the front; returns (offset, data) or None."""
        if not self._pending or max_bytes <= 0:
            return None
        offset, data = self._pending[0]
        if len(data) <= max_bytes:
            self._pending.popleft()
        else:
            self._pending[0] = (offset + max_bytes, data[max_bytes:])
            data = data[:max_bytes]
        self._pending_bytes -= len(data)
        return offset, data

    def requeue(self, offset, data):
        """Return a rejected chunk to the buffer at its original offset."""
        if not data:
            return
        if offset + len(data) > self.next_offset:
            raise LogicError("requeue beyond assigned offsets")
        if self._pending and offset + len(data) > self._pending[0][0]:
            raise LogicError("requeue overlaps pending data")
        self._pending.appendleft((offset, bytes(data)))
        self._pending_bytes += len(data)


class StreamRxBuffer:
    """Out-of-order reassembly buffer for one stream's receive side.

    Overlapping bytes keep the first-received copy; duplicates are trimmed
    idempotently. Once a FIN is recorded the stream length is fixed and data
    beyond it is a protocol error.
    """

    def __init__(self, capacity=DEFAULT_STREAM_BUFFER):
        self.capacity = capacity
        self._segments = {}       # offset -> bytes, disjoint
        self._stored = 0
        self.next_expected = 0
        self.fin_offset = None

    @property
    def stored_bytes(self):
        return self._stored

    @property
    def total_length(self):
        """Final stream length, known once the FIN has been received."""
        return self.fin_offset

    def insert(self, offset, data, fin=False):
        """Insert a segment; returns the newly contiguous bytes, if any."""
        end = offset + len(data)
        if fin:
            if self.fin_offset is not None and self.fin_offset != end:
                raise ProtocolError(
                    f"conflicting FIN offsets {self.fin_offset} and {end}")
            self.fin_offset = end
        if self.fin_offset is not None and end > self.fin_offset:
            raise ProtocolError(f"data beyond FIN offset {self.fin_offset}")
        for piece_off, piece in self._clip(offset, data):
            self._segments[piece_off] = piece
            self._stored += len(piece)
            if self._stored > self.capacity:
                raise LogicError("stream receive buffer over capacity")
        return self._release()

    def _clip(self, offset, data):
        """Trim the new segment against delivered data and stored segments."""
        end = offset + len(data)
        if offset < self.next_expected:
            data = data[self.next_expected - offset:]
            offset = self.next_expected
        if not data:
            return []
        pieces = [(offset, data)]
        for seg_off in sorted(self._segments):
            seg_end = seg_off + len(self._segments[seg_off])
            if seg_end <= offset or seg_off >= end:
                continue
            next_pieces = []
            for p_off, p_data in pieces:
                p_end = p_off + len(p_data)
                if p_end <= seg_off or p_off >= seg_end:
                    next_pieces.append((p_off, p_data))
                    continue
                if p_off < seg_off:
                    next_pieces.append((p_off, p_data[:seg_off - p_off]))
                if p_end > seg_end:
                    next_pieces.append((seg_end, p_data[seg_end - p_off:]))
            pieces = next_pieces
        return [(o, bytes(d)) for o, d in pieces if d]

    def _release(self):
        out = []
        while self.next_expected in self._segments:
            piece = self._segments.pop(self.next_expected)
            self._stored -= len(piece)
            self.next_expected += len(piece)
            out.append(piece)
        return b"".join(out)

    @property
    def finished(self):
        return self.fin_offset is not None and self.next_expected >= self.fin_offset


class SocketRxBuffer:
    """In-order application data released by streams, until the app reads it."""

    def __init__(self, capacity=DEFAULT_SOCKET_BUFFER):
        self.capacity = capacity
        self._chunks = deque()   # (stream_id, bytes)
        self._stored = 0

    @property
    def stored_bytes(self):
        return self._stored

    @property
    def available_space(self):
        return self.capacity - self._stored

    def add(self, stream_id, data):
        if self._stored + len(data) > self.capacity:
            return False
        self._chunks.append((stream_id, data))
        self._stored += len(data)
        return True

    def read_all(self):
        out = list(self._chunks)
        self._chunks.clear()
        self._stored = 0
        return out
