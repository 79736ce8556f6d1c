"""Packet header and frame codec.

Byte layouts (big-endian throughout):

  long header (17 bytes):
      flags(1) = 0x80 | long_type
      connection_id(8), version(4), packet_number(4)
  short header (2-13 bytes):
      flags(1) = 0x40 if connection id present, low two bits encode the
      packet-number width (0->1, 1->2, 2->4 bytes)
      [connection_id(8)], packet_number(1|2|4)

  frames, one type byte each:
      0x00 PADDING
      0x01 STREAM            fin(1) stream_id(4) offset(8) length(2) data
      0x02 ACK               largest(4) ack_delay_us(4) block_count(1)
                             first_block(4) then block_count x (gap(4) len(4))
      0x03 VERSION_NEG       count(1) then count x version(4)
      0x04 CONNECTION_CLOSE  error_code(2) reason_len(2) reason
      0x05 MAX_DATA          credit(8)
      0x06 MAX_STREAM_DATA   stream_id(4) credit(8)

The packet number is always encoded at full value in the minimal width, so
packet numbers are capped at 2**32 - 1; there is no truncation/recovery
scheme. ACK blocks count packets: the first block covers `first_block`
consecutive numbers ending at `largest`, each further (gap, length) pair
skips `gap` missing numbers and acknowledges `length` more.
"""

import struct
from dataclasses import dataclass, field

from quicsim.errors import EncodeError, ParseError

MAX_PACKET_SIZE = 1460

# Wire overhead of a stream frame subheader (type + fin + id + offset + length).
STREAM_OVERHEAD = 16

LONG_HEADER_SIZE = 17

QUIC_VERSION_NEGOTIATION = 0x00000000
SUPPORTED_VERSIONS = (0x0000000D, 0x0000000E)

FORM_LONG = "long"
FORM_SHORT = "short"

LT_VERSION_NEGOTIATION = 0
LT_CLIENT_INITIAL = 1
LT_HANDSHAKE = 2
LT_ZRTT_PROTECTED = 3
_LONG_TYPES = (LT_VERSION_NEGOTIATION, LT_CLIENT_INITIAL, LT_HANDSHAKE, LT_ZRTT_PROTECTED)

_PN_CODES = {1: 0, 2: 1, 4: 2}
_PN_WIDTHS = {0: 1, 1: 2, 2: 4}

FT_PADDING = 0x00
FT_STREAM = 0x01
FT_ACK = 0x02
FT_VERSION_NEGOTIATION = 0x03
FT_CONNECTION_CLOSE = 0x04
FT_MAX_DATA = 0x05
FT_MAX_STREAM_DATA = 0x06


def pn_length(packet_number):
    """Minimal width in {1, 2, 4} bytes that represents the packet number."""
    if packet_number < 0:
        raise EncodeError(f"negative packet number {packet_number}")
    if packet_number < 1 << 8:
        return 1
    if packet_number < 1 << 16:
        return 2
    if packet_number < 1 << 32:
        return 4
    raise EncodeError(f"packet number {packet_number} does not fit in 4 bytes")


@dataclass
class QuicHeader:
    form: str
    packet_number: int
    connection_id: int | None = None
    version: int | None = None
    long_type: int | None = None

    @property
    def pn_length(self):
        return 4 if self.form == FORM_LONG else pn_length(self.packet_number)

    def size(self):
        if self.form == FORM_LONG:
            return LONG_HEADER_SIZE
        return 1 + (8 if self.connection_id is not None else 0) + self.pn_length


def long_header(long_type, connection_id, version, packet_number):
    return QuicHeader(FORM_LONG, packet_number, connection_id, version, long_type)


def short_header(packet_number, connection_id=None):
    return QuicHeader(FORM_SHORT, packet_number, connection_id)


def serialize_header(h):
    if h.form == FORM_LONG:
        if h.long_type not in _LONG_TYPES:
            raise EncodeError(f"unknown long header type {h.long_type}")
        if h.connection_id is None or h.version is None:
            raise EncodeError("long header requires connection id and version")
        if not 0 <= h.packet_number < 1 << 32:
            raise EncodeError(f"packet number {h.packet_number} does not fit in 4 bytes")
        return struct.pack("!BQII", 0x80 | h.long_type, h.connection_id,
                           h.version, h.packet_number)
    width = pn_length(h.packet_number)
    flags = _PN_CODES[width]
    out = bytearray()
    if h.connection_id is not None:
        flags |= 0x40
    out.append(flags)
    if h.connection_id is not None:
        out += struct.pack("!Q", h.connection_id)
    out += h.packet_number.to_bytes(width, "big")
    return bytes(out)


def parse_header(data):
    """Parse a header; returns (QuicHeader, consumed bytes)."""
    if not data:
        raise ParseError("empty input", 0)
    flags = data[0]
    if flags & 0x80:
        long_type = flags & 0x7F
        if long_type not in _LONG_TYPES:
            raise ParseError(f"unknown long header type {long_type}", 0)
        if len(data) < LONG_HEADER_SIZE:
            raise ParseError("truncated long header", len(data))
        _, cid, version, pn = struct.unpack("!BQII", data[:LONG_HEADER_SIZE])
        return long_header(long_type, cid, version, pn), LONG_HEADER_SIZE
    if flags & 0x3C:
        raise ParseError(f"invalid short header flags {flags:#04x}", 0)
    pn_code = flags & 0x03
    if pn_code not in _PN_WIDTHS:
        raise ParseError(f"invalid packet number length code {pn_code}", 0)
    width = _PN_WIDTHS[pn_code]
    pos = 1
    cid = None
    if flags & 0x40:
        if len(data) < pos + 8:
            raise ParseError("truncated connection id", len(data))
        cid = struct.unpack_from("!Q", data, pos)[0]
        pos += 8
    if len(data) < pos + width:
        raise ParseError("truncated packet number", len(data))
    pn = int.from_bytes(data[pos:pos + width], "big")
    if pn_length(pn) != width:
        raise ParseError(f"packet number {pn} not minimally encoded", pos)
    return short_header(pn, cid), pos + width


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

@dataclass
class StreamFrame:
    stream_id: int
    offset: int
    data: bytes
    fin: bool = False

    @property
    def payload_size(self):
        return len(self.data)


@dataclass
class AckFrame:
    largest_acked: int
    ack_delay: int  # microseconds
    first_block: int  # packets covered ending at largest_acked, >= 1
    blocks: list = field(default_factory=list)  # [(gap, length), ...]

    @property
    def payload_size(self):
        return 13 + 8 * len(self.blocks)


@dataclass
class VersionNegotiationFrame:
    versions: tuple

    @property
    def payload_size(self):
        return 1 + 4 * len(self.versions)


@dataclass
class ConnectionCloseFrame:
    error_code: int
    reason: bytes = b""

    @property
    def payload_size(self):
        return 4 + len(self.reason)


@dataclass
class MaxDataFrame:
    credit: int

    @property
    def payload_size(self):
        return 8


@dataclass
class MaxStreamDataFrame:
    stream_id: int
    credit: int

    @property
    def payload_size(self):
        return 12


@dataclass
class PaddingFrame:
    @property
    def payload_size(self):
        return 0


def serialize_frame(f):
    if isinstance(f, StreamFrame):
        if f.offset < 0:
            raise EncodeError("negative stream offset")
        if len(f.data) >= 1 << 16:
            raise EncodeError("stream frame data too long")
        return struct.pack("!BBIQH", FT_STREAM, 1 if f.fin else 0,
                           f.stream_id, f.offset, len(f.data)) + f.data
    if isinstance(f, AckFrame):
        _check_ack(f)
        out = struct.pack("!BIIBI", FT_ACK, f.largest_acked, f.ack_delay,
                          len(f.blocks), f.first_block)
        for gap, length in f.blocks:
            out += struct.pack("!II", gap, length)
        return out
    if isinstance(f, VersionNegotiationFrame):
        out = struct.pack("!BB", FT_VERSION_NEGOTIATION, len(f.versions))
        for v in f.versions:
            out += struct.pack("!I", v)
        return out
    if isinstance(f, ConnectionCloseFrame):
        return struct.pack("!BHH", FT_CONNECTION_CLOSE, f.error_code,
                           len(f.reason)) + f.reason
    if isinstance(f, MaxDataFrame):
        return struct.pack("!BQ", FT_MAX_DATA, f.credit)
    if isinstance(f, MaxStreamDataFrame):
        return struct.pack("!BIQ", FT_MAX_STREAM_DATA, f.stream_id, f.credit)
    if isinstance(f, PaddingFrame):
        return bytes([FT_PADDING])
    raise EncodeError(f"unknown frame {f!r}")


def _check_ack(f):
    if f.first_block < 1:
        raise EncodeError("ACK first block must cover at least one packet")
    low = f.largest_acked - f.first_block + 1
    if low < 0:
        raise EncodeError("ACK first block extends below packet number 0")
    for gap, length in f.blocks:
        if gap < 1 or length < 1:
            raise EncodeError("ACK block gap and length must be positive")
        low = low - gap - length
        if low < 0:
            raise EncodeError("ACK blocks extend below packet number 0")


def parse_frames(data):
    """Parse a packet payload into its frames; consumes every byte."""
    frames = []
    pos = 0
    n = len(data)
    while pos < n:
        ftype = data[pos]
        try:
            if ftype == FT_PADDING:
                frames.append(PaddingFrame())
                pos += 1
            elif ftype == FT_STREAM:
                _, fin, sid, offset, length = struct.unpack_from("!BBIQH", data, pos)
                if fin > 1:
                    raise ParseError(f"bad stream fin flag {fin}", pos + 1)
                start = pos + STREAM_OVERHEAD
                if start + length > n:
                    raise ParseError("stream frame extends past payload end", pos)
                frames.append(StreamFrame(sid, offset, data[start:start + length],
                                          bool(fin)))
                pos = start + length
            elif ftype == FT_ACK:
                _, largest, delay, count, first = struct.unpack_from("!BIIBI", data, pos)
                pos += 14
                blocks = []
                for _ in range(count):
                    gap, length = struct.unpack_from("!II", data, pos)
                    blocks.append((gap, length))
                    pos += 8
                frame = AckFrame(largest, delay, first, blocks)
                try:
                    _check_ack(frame)
                except EncodeError as exc:
                    raise ParseError(str(exc), pos) from None
                frames.append(frame)
            elif ftype == FT_VERSION_NEGOTIATION:
                count = data[pos + 1]
                end = pos + 2 + 4 * count
                if end > n:
                    raise ParseError("version list extends past payload end", pos)
                versions = struct.unpack_from(f"!{count}I", data, pos + 2) if count else ()
                frames.append(VersionNegotiationFrame(tuple(versions)))
                pos = end
            elif ftype == FT_CONNECTION_CLOSE:
                _, code, rlen = struct.unpack_from("!BHH", data, pos)
                start = pos + 5
                if start + rlen > n:
                    raise ParseError("close reason extends past payload end", pos)
                frames.append(ConnectionCloseFrame(code, data[start:start + rlen]))
                pos = start + rlen
            elif ftype == FT_MAX_DATA:
                _, credit = struct.unpack_from("!BQ", data, pos)
                frames.append(MaxDataFrame(credit))
                pos += 9
            elif ftype == FT_MAX_STREAM_DATA:
                _, sid, credit = struct.unpack_from("!BIQ", data, pos)
                frames.append(MaxStreamDataFrame(sid, credit))
                pos += 13
            else:
                raise ParseError(f"unknown frame type {ftype:#04x}", pos)
        except struct.error:
            raise ParseError("truncated frame", pos) from None
    return frames


# ---------------------------------------------------------------------------
# Packets
# ---------------------------------------------------------------------------

def serialize_packet(header, frames):
    if not frames:
        raise EncodeError("packet must carry at least one frame")
    out = serialize_header(header) + b"".join(serialize_frame(f) for f in frames)
    if len(out) > MAX_PACKET_SIZE:
        raise EncodeError(f"packet size {len(out)} exceeds {MAX_PACKET_SIZE}")
    return out


def parse_packet(data):
    header, consumed = parse_header(data)
    return header, parse_frames(data[consumed:])


# ---------------------------------------------------------------------------
# ACK block helpers
# ---------------------------------------------------------------------------

def ack_delay_encode(received_at, ack_sent_at):
    """Microseconds between receiving a packet and sending its ACK."""
    if ack_sent_at < received_at:
        raise EncodeError("ACK sent before the packet it acknowledges was received")
    return ack_sent_at - received_at


def ack_from_ranges(ranges, ack_delay):
    """Build an AckFrame from disjoint, ascending, inclusive (lo, hi) ranges."""
    if not ranges:
        raise EncodeError("cannot acknowledge an empty set")
    desc = sorted(ranges, reverse=True)
    lo, hi = desc[0]
    frame = AckFrame(hi, ack_delay, hi - lo + 1, [])
    prev_lo = lo
    for lo, hi in desc[1:]:
        frame.blocks.append((prev_lo - hi - 1, hi - lo + 1))
        prev_lo = lo
    return frame


def ack_ranges(frame):
    """Inclusive (lo, hi) ranges acknowledged by the frame, descending."""
    hi = frame.largest_acked
    lo = hi - frame.first_block + 1
    out = [(lo, hi)]
    for gap, length in frame.blocks:
        hi = lo - gap - 1
        lo = hi - length + 1
        out.append((lo, hi))
    return out


def ack_expand(frame):
    """Set of packet numbers acknowledged by the frame."""
    acked = set()
    for lo, hi in ack_ranges(frame):
        acked.update(range(lo, hi + 1))
    return acked
