"""Congestion control core: shared state, RTT estimation with ack-delay
correction, the loss-detection rule, and RTO management.

The controller is a pure state machine driven by the owning connection; it
schedules no timers of its own. Algorithms plug in through
CongestionAlgorithm; legacy (TCP-style) algorithms see one call per ACK
frame, while non-legacy algorithms additionally receive the packet-sent and
refined-RTT hooks.
"""

from dataclasses import dataclass, field

from quicsim.errors import LogicError
from quicsim.sim.engine import ms, sec

MSS = 1460
INITIAL_WINDOW = 10 * MSS
MIN_WINDOW = 2 * MSS
INITIAL_SSTHRESH = 1 << 30
INITIAL_RTO = sec(1)
RTO_FLOOR = ms(200)
RTO_MAX = sec(60)


@dataclass
class CongestionState:
    cwnd: int = INITIAL_WINDOW
    ssthresh: int = INITIAL_SSTHRESH
    bytes_in_flight: int = 0
    srtt: int = 0
    rttvar: int = 0
    min_rtt: int | None = None
    latest_rtt: int = 0
    rto: int = INITIAL_RTO
    largest_acked_pn: int = -1
    largest_sent_pn: int = -1
    recovery_end_pn: int = -1
    legacy_mode: bool = True


@dataclass
class LossRule:
    """Packet loss declaration per the recovery defaults.

    A sent, unacknowledged packet is lost when it trails the largest
    acknowledged number by the reorder threshold, or when it has been in
    flight longer than 9/8 of the larger of the smoothed and latest RTT.
    """

    reorder_threshold: int = 3
    time_factor_num: int = 9
    time_factor_den: int = 8

    def time_threshold(self, srtt, latest_rtt):
        base = max(srtt, latest_rtt)
        if base <= 0:
            return None
        return base * self.time_factor_num // self.time_factor_den

    def is_lost(self, pn, sent_at, largest_acked, now, srtt, latest_rtt):
        if pn <= largest_acked - self.reorder_threshold:
            return True
        threshold = self.time_threshold(srtt, latest_rtt)
        return threshold is not None and sent_at <= now - threshold


class CongestionAlgorithm:
    """Behaviour contract for pluggable congestion control.

    `on_ack` runs once per received ACK frame that newly acknowledges data;
    `on_congestion_event` runs on a loss or RTO outside the current recovery
    episode. Non-legacy algorithms may override the `on_packet_sent` and
    `on_rtt` hooks, which legacy algorithms ignore.
    """

    name = "base"
    legacy = True

    def on_ack(self, state, acked_bytes, packets):
        raise NotImplementedError

    def on_congestion_event(self, state, kind):
        state.ssthresh = max(state.bytes_in_flight // 2, 2 * MSS)
        if kind == "rto":
            state.cwnd = MIN_WINDOW
        else:
            state.cwnd = max(state.ssthresh, MIN_WINDOW)

    def on_packet_sent(self, state, size, pn, now):
        pass

    def on_rtt(self, state, sample, ack_delay):
        pass


class CongestionController:
    """Glue between the connection and its congestion algorithm."""

    def __init__(self, algorithm, initial_ssthresh=None):
        self.state = CongestionState()
        if initial_ssthresh is not None:
            self.state.ssthresh = initial_ssthresh
        self.algorithm = algorithm
        self.state.legacy_mode = algorithm.legacy
        self.loss_rule = LossRule()
        self.rto_backoff = 0

    # -- RTT estimation ------------------------------------------------------

    def rtt_update(self, sample, ack_delay):
        """Feed one raw RTT sample; ack_delay is removed before smoothing."""
        if sample <= 0:
            raise LogicError(f"non-positive RTT sample {sample}")
        s = self.state
        s.latest_rtt = sample
        if s.min_rtt is None or sample < s.min_rtt:
            s.min_rtt = sample
        adjusted = max(sample - ack_delay, s.min_rtt)
        if s.srtt == 0:
            s.srtt = adjusted
            s.rttvar = adjusted // 2
        else:
            s.rttvar = (3 * s.rttvar + abs(s.srtt - adjusted)) // 4
            s.srtt = (7 * s.srtt + adjusted) // 8
        s.rto = min(max(s.srtt + 4 * s.rttvar, RTO_FLOOR), RTO_MAX)
        if not self.algorithm.legacy:
            self.algorithm.on_rtt(s, sample, ack_delay)

    # -- events ----------------------------------------------------------------

    def on_packet_sent(self, size, pn, now):
        self.state.largest_sent_pn = max(self.state.largest_sent_pn, pn)
        if not self.algorithm.legacy:
            self.algorithm.on_packet_sent(self.state, size, pn, now)

    def on_ack(self, acked_bytes, packets):
        """New data acknowledged: grow the window and reset RTO backoff."""
        if packets <= 0:
            return
        self.rto_backoff = 0
        self.algorithm.on_ack(self.state, acked_bytes, packets)

    def on_loss_event(self, largest_lost_pn):
        """Window reduction, at most once per round trip of losses."""
        s = self.state
        if largest_lost_pn <= s.recovery_end_pn:
            return False
        s.recovery_end_pn = s.largest_sent_pn
        self.algorithm.on_congestion_event(s, "loss")
        return True

    def on_rto(self):
        """Collapse the window; bytes_in_flight must still reflect the
        packets about to be declared lost."""
        s = self.state
        s.recovery_end_pn = s.largest_sent_pn
        self.algorithm.on_congestion_event(s, "rto")
        self.rto_backoff += 1

    @property
    def effective_rto(self):
        return min(self.state.rto << self.rto_backoff, RTO_MAX)

    def can_send(self, next_size, flow_credit=None):
        """Transmission gate: congestion window and, when given, flow credit."""
        if flow_credit is not None and next_size > flow_credit:
            return False
        return self.state.bytes_in_flight + next_size <= self.state.cwnd
