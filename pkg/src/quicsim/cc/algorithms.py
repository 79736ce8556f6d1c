"""The congestion control algorithms: NewReno, Vegas, and the QUIC variant.

Legacy algorithms (NewReno, Vegas) grow the window once per ACK frame, as
the TCP implementations they are reused from do; the QUIC variant grows in
proportion to the bytes each ACK covers, which ramps faster whenever ACKs
are aggregated over multiple packets.
"""

from quicsim.errors import ConfigError
from quicsim.cc.base import MIN_WINDOW, MSS, CongestionAlgorithm

VEGAS_ALPHA = 2
VEGAS_BETA = 4
VEGAS_GAMMA = 1


class NewReno(CongestionAlgorithm):
    """Slow start plus AIMD congestion avoidance with halving on loss."""

    name = "newreno"

    def on_ack(self, state, acked_bytes, packets):
        if state.cwnd < state.ssthresh:
            state.cwnd += MSS
        else:
            state.cwnd += max(1, MSS * MSS // state.cwnd)


class Vegas(CongestionAlgorithm):
    """Delay-based control: compares the smoothed RTT against the minimum
    observed RTT once per round trip and nudges the window to keep the
    estimated queue between alpha and beta segments."""

    name = "vegas"

    def __init__(self):
        self._epoch_end_pn = -1
        self._slow_start = True

    def on_ack(self, state, acked_bytes, packets):
        if state.largest_acked_pn >= self._epoch_end_pn and \
                state.srtt > 0 and state.min_rtt:
            base = state.min_rtt
            diff_segments = state.cwnd * (state.srtt - base) / (state.srtt * MSS)
            if self._slow_start and diff_segments > VEGAS_GAMMA:
                self._slow_start = False
                state.ssthresh = min(state.ssthresh, state.cwnd)
            if not self._slow_start:
                if diff_segments < VEGAS_ALPHA:
                    state.cwnd += MSS
                elif diff_segments > VEGAS_BETA:
                    state.cwnd = max(state.cwnd - MSS, MIN_WINDOW)
            self._epoch_end_pn = state.largest_sent_pn + 1
        if self._slow_start and state.cwnd < state.ssthresh:
            state.cwnd += MSS

    def on_congestion_event(self, state, kind):
        super().on_congestion_event(state, kind)
        self._slow_start = False


class QuicCongestionControl(NewReno):
    """NewReno adapted per the transport draft: byte-counted growth.

    Slow start opens the window by the acknowledged bytes; congestion
    avoidance adds MSS * acked_bytes / cwnd per ACK frame regardless of how
    many packets the ACK covers.
    """

    name = "quic"
    legacy = False

    def on_ack(self, state, acked_bytes, packets):
        if state.cwnd < state.ssthresh:
            state.cwnd += acked_bytes
        else:
            state.cwnd += max(1, MSS * acked_bytes // state.cwnd)


_ALGORITHMS = {cls.name: cls for cls in (NewReno, Vegas, QuicCongestionControl)}


def algorithm_names():
    return sorted(_ALGORITHMS)


def create_algorithm(name):
    """Instantiate an algorithm by config name; unknown names are fatal."""
    if isinstance(name, CongestionAlgorithm):
        return name
    try:
        return _ALGORITHMS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown congestion control {name!r}; valid options: "
            f"{', '.join(algorithm_names())}") from None
