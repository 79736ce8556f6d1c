"""Congestion control unit tests: RTT estimation, the three algorithms,
RTO backoff, the send gate, and loss-rule equivalence against a naive
re-implementation."""

import random

import pytest

from quicsim.cc import (
    INITIAL_WINDOW,
    MIN_WINDOW,
    MSS,
    CongestionController,
    CongestionState,
    LossRule,
    NewReno,
    QuicCongestionControl,
    Vegas,
    algorithm_names,
    create_algorithm,
)
from quicsim.errors import ConfigError
from quicsim.sim.engine import ms


def _controller(algo="newreno", **kwargs):
    return CongestionController(create_algorithm(algo), **kwargs)


# ---------------------------------------------------------------------------
# RTT estimation
# ---------------------------------------------------------------------------

def test_first_sample_initializes_estimator():
    cc = _controller()
    cc.rtt_update(ms(100), 0)
    s = cc.state
    # formula arithmetic: srtt = sample, rttvar = sample/2, rto = srtt+4*rttvar
    assert s.srtt == ms(100)
    assert s.rttvar == ms(50)
    assert s.rto == ms(100) + 4 * ms(50) == ms(300)
    assert s.latest_rtt == ms(100)
    assert s.min_rtt == ms(100)


def test_ack_delay_removed_from_smoothed_sample():
    cc = _controller()
    cc.rtt_update(ms(100), 0)          # min_rtt settles at 100 ms
    cc.rtt_update(ms(120), ms(20))
    # adjusted = max(120 - 20, 100) = 100; smoothing leaves srtt at 100
    assert cc.state.srtt == ms(100)
    assert cc.state.latest_rtt == ms(120)


def test_ack_delay_clamps_at_min_rtt():
    cc = _controller()
    cc.rtt_update(ms(100), 0)
    cc.rtt_update(ms(110), ms(50))  # 110 - 50 < min_rtt -> clamps to 100
    assert cc.state.srtt == ms(100)


def test_smoothing_formulas_match_reference():
    cc = _controller()
    samples = [(ms(80), 0), (ms(120), ms(5)), (ms(95), 0), (ms(200), ms(10))]
    # independent reference computation
    srtt = rttvar = min_rtt = None
    for sample, delay in samples:
        min_rtt = sample if min_rtt is None else min(min_rtt, sample)
        adjusted = max(sample - delay, min_rtt)
        if srtt is None:
            srtt, rttvar = adjusted, adjusted // 2
        else:
            rttvar = (3 * rttvar + abs(srtt - adjusted)) // 4
            srtt = (7 * srtt + adjusted) // 8
        cc.rtt_update(sample, delay)
    assert cc.state.srtt == srtt
    assert cc.state.rttvar == rttvar
    assert cc.state.rto == max(srtt + 4 * rttvar, ms(200))


def test_srtt_converges_on_fixed_delay_path():
    cc = _controller()
    for _ in range(20):
        cc.rtt_update(ms(100), 0)
    assert abs(cc.state.srtt - ms(100)) <= ms(100) * 0.01
    assert cc.state.rttvar < ms(1)


def test_rto_floor():
    cc = _controller()
    cc.rtt_update(ms(10), 0)
    assert cc.state.rto == ms(200)


# ---------------------------------------------------------------------------
# NewReno
# ---------------------------------------------------------------------------

def test_newreno_congestion_avoidance_increment():
    cc = _controller("newreno", initial_ssthresh=5 * MSS)
    cc.state.cwnd = 10 * MSS
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == 10 * MSS + MSS * MSS // (10 * MSS) == 10 * MSS + MSS // 10


def test_newreno_slow_start_increment():
    cc = _controller("newreno")
    cc.state.cwnd = 4380  # 3 * MSS
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == 5840  # + one MSS


def test_newreno_loss_halves_to_bytes_in_flight():
    cc = _controller("newreno")
    cc.state.bytes_in_flight = 50_000
    cc.state.largest_sent_pn = 40
    assert cc.on_loss_event(largest_lost_pn=30) is True
    assert cc.state.ssthresh == 25_000
    assert cc.state.cwnd == 25_000


def test_losses_inside_recovery_do_not_rereduce():
    cc = _controller("newreno")
    cc.state.bytes_in_flight = 50_000
    cc.state.largest_sent_pn = 40
    cc.on_loss_event(30)
    cwnd = cc.state.cwnd
    assert cc.on_loss_event(35) is False  # 35 <= recovery_end (40)
    assert cc.state.cwnd == cwnd
    cc.state.bytes_in_flight = 25_000    # flight shrank during recovery
    cc.state.largest_sent_pn = 60
    assert cc.on_loss_event(45) is True   # new episode
    assert cc.state.cwnd == 12_500 < cwnd


def test_ssthresh_floor_two_mss():
    cc = _controller("newreno")
    cc.state.bytes_in_flight = MSS
    cc.state.largest_sent_pn = 1
    cc.on_loss_event(0)
    assert cc.state.ssthresh == 2 * MSS
    assert cc.state.cwnd >= MIN_WINDOW


# ---------------------------------------------------------------------------
# Vegas
# ---------------------------------------------------------------------------

def _vegas_in_avoidance(cwnd, srtt, min_rtt):
    cc = CongestionController(Vegas())
    cc.state.bytes_in_flight = cwnd
    cc.state.largest_sent_pn = 10
    cc.on_loss_event(5)  # leaves slow start; loss handled as NewReno
    cc.state.cwnd = cwnd
    cc.state.ssthresh = cwnd // 2
    cc.state.srtt = srtt
    cc.state.min_rtt = min_rtt
    cc.state.latest_rtt = srtt
    cc.state.largest_acked_pn = 20  # past any epoch boundary
    return cc


def test_vegas_grows_when_queue_empty():
    cc = _vegas_in_avoidance(cwnd=25_000, srtt=ms(100), min_rtt=ms(100))
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == 25_000 + MSS  # diff = 0 < alpha


def test_vegas_backs_off_when_queue_deep():
    cwnd, base, srtt = 30_000, ms(100), ms(150)
    # formula arithmetic: diff = cwnd * (srtt - base) / (srtt * MSS)
    diff = cwnd * (srtt - base) / (srtt * MSS)
    assert 6.8 < diff < 6.9  # ~6.85 segments, beyond beta
    cc = _vegas_in_avoidance(cwnd, srtt, base)
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == cwnd - MSS


def test_vegas_holds_between_alpha_and_beta():
    # 3 segments of queueing: between alpha=2 and beta=4
    cwnd = 25_000
    base = ms(100)
    srtt = base + round(3 * MSS * 8 / 2_000_000 * 1e6)  # ~117.5 ms
    diff = cwnd * (srtt - base) / (srtt * MSS)
    assert 2 < diff < 4
    cc = _vegas_in_avoidance(cwnd, srtt, base)
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == cwnd


def test_vegas_adjusts_once_per_rtt():
    cc = _vegas_in_avoidance(cwnd=25_000, srtt=ms(100), min_rtt=ms(100))
    cc.state.largest_sent_pn = 30
    cc.on_ack(MSS, 1)
    grown = cc.state.cwnd
    cc.state.largest_acked_pn = 25  # still inside the epoch (ends at 31)
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == grown
    cc.state.largest_acked_pn = 31  # epoch boundary crossed
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == grown + MSS


def test_vegas_slow_start_until_gamma():
    cc = CongestionController(Vegas())
    cc.state.min_rtt = ms(100)
    cc.state.srtt = ms(100)
    cc.state.largest_acked_pn = 0
    cwnd0 = cc.state.cwnd
    cc.on_ack(MSS, 1)
    assert cc.state.cwnd == cwnd0 + MSS  # diff 0 <= gamma: still slow start
    # now the path shows > 1 segment of queueing: leaves slow start
    cc.state.srtt = ms(130)
    cc.state.largest_acked_pn = cc.state.largest_sent_pn + 1
    before = cc.state.cwnd
    cc.on_ack(MSS, 1)
    assert cc.state.ssthresh <= before  # pinned at exit


# ---------------------------------------------------------------------------
# QUIC congestion control
# ---------------------------------------------------------------------------

def test_quic_slow_start_counts_bytes():
    cc = _controller("quic")
    cwnd0 = cc.state.cwnd
    cc.on_ack(3000, 2)
    assert cc.state.cwnd == cwnd0 + 3000


def test_quic_avoidance_scales_with_acked_bytes():
    cc = _controller("quic", initial_ssthresh=5 * MSS)
    cc.state.cwnd = 10 * MSS
    cc.on_ack(2 * MSS, 2)
    # MSS * acked / cwnd = MSS * 2MSS / 10MSS = MSS / 5
    assert cc.state.cwnd == 10 * MSS + MSS // 5


def test_quic_beats_newreno_under_ack_aggregation():
    # Two-packet ACKs: per-ACK NewReno adds half as much per acked byte.
    reno = _controller("newreno", initial_ssthresh=MSS)
    quic = _controller("quic", initial_ssthresh=MSS)
    for cc in (reno, quic):
        cc.state.cwnd = 20 * MSS
    for _ in range(10):
        reno.on_ack(2 * MSS, 2)
        quic.on_ack(2 * MSS, 2)
    assert quic.state.cwnd > reno.state.cwnd


def test_quic_is_not_legacy():
    assert NewReno.legacy is True
    assert Vegas.legacy is True
    assert QuicCongestionControl.legacy is False
    assert _controller("quic").state.legacy_mode is False
    assert _controller("newreno").state.legacy_mode is True


def test_legacy_flag_changes_dispatch_not_arithmetic():
    class WrappedNewReno(NewReno):
        name = "newreno-nonlegacy"
        legacy = False

    rng = random.Random(3)
    scenario = []
    for _ in range(200):
        r = rng.random()
        if r < 0.6:
            scenario.append(("ack", rng.randrange(1, 3) * MSS))
        elif r < 0.8:
            scenario.append(("rtt", ms(rng.randrange(80, 200))))
        else:
            scenario.append(("loss", None))

    def run(algo):
        cc = CongestionController(algo)
        pn = 0
        trace = []
        for op, arg in scenario:
            if op == "ack":
                pn += 2
                cc.state.largest_sent_pn = pn
                cc.state.largest_acked_pn = pn
                cc.state.bytes_in_flight = 20 * MSS
                cc.on_ack(arg, 2)
            elif op == "rtt":
                cc.rtt_update(arg, 0)
            else:
                cc.state.bytes_in_flight = 20 * MSS
                cc.on_loss_event(pn + 1)
                pn += 1
            trace.append(cc.state.cwnd)
        return trace

    assert run(NewReno()) == run(WrappedNewReno())


# ---------------------------------------------------------------------------
# RTO
# ---------------------------------------------------------------------------

def test_rto_collapses_window_and_doubles():
    cc = _controller("newreno")
    cc.rtt_update(ms(100), 0)  # rto = 300 ms
    cc.state.bytes_in_flight = 50_000
    cc.state.largest_sent_pn = 10
    assert cc.effective_rto == ms(300)
    cc.on_rto()
    assert cc.state.ssthresh == 25_000
    assert cc.state.cwnd == MIN_WINDOW
    assert cc.effective_rto == ms(600)
    cc.on_rto()
    assert cc.effective_rto == ms(1200)
    # a valid ack resets the backoff sequence
    cc.on_ack(MSS, 1)
    assert cc.effective_rto == ms(300)


def test_backoff_sequence_matches_doubling():
    cc = _controller()
    cc.rtt_update(ms(100), 0)
    seen = []
    for _ in range(3):
        seen.append(cc.effective_rto)
        cc.state.bytes_in_flight = 10_000
        cc.on_rto()
    assert seen == [ms(300), ms(600), ms(1200)]


def test_backoff_capped_at_sixty_seconds():
    cc = _controller()
    cc.rtt_update(ms(100), 0)
    for _ in range(12):
        cc.state.bytes_in_flight = 10_000
        cc.on_rto()
    assert cc.effective_rto == 60 * 1_000_000


# ---------------------------------------------------------------------------
# send gate
# ---------------------------------------------------------------------------

def test_can_send_rejects_when_window_full():
    cc = _controller()
    cc.state.cwnd = 10_000
    cc.state.bytes_in_flight = 9_000
    assert cc.can_send(1460) is False
    assert cc.can_send(1000) is True


def test_initial_window_allows_ten_packets():
    cc = _controller()
    assert cc.state.cwnd == INITIAL_WINDOW == 10 * MSS
    sent = 0
    while cc.can_send(MSS):
        cc.state.bytes_in_flight += MSS
        sent += 1
    assert sent == 10


def test_flow_credit_conjunct():
    cc = _controller()
    assert cc.can_send(1460, flow_credit=0) is False
    assert cc.can_send(1460, flow_credit=1460) is True


# ---------------------------------------------------------------------------
# loss rule
# ---------------------------------------------------------------------------

def test_loss_rule_defaults():
    rule = LossRule()
    assert rule.reorder_threshold == 3
    assert rule.time_threshold(ms(100), ms(80)) == ms(100) * 9 // 8
    assert rule.time_threshold(0, 0) is None


def test_loss_rule_incremental_equals_naive_replay():
    """Cross-check the buffer's incremental marking against a naive model
    that re-applies the predicate over every packet at each step."""
    from quicsim.buffers import SocketTxBuffer
    from quicsim.wire import StreamFrame

    rule = LossRule()
    rng = random.Random(1234)
    srtt = latest = ms(100)
    for _ in range(200):
        n = rng.randrange(1, 13)
        buf = SocketTxBuffer()
        sent_at = {}
        for pn in range(n):
            t = pn * 1000
            buf.add(StreamFrame(1, pn * 10, b"x" * 10))
            item = buf.next_packet(10)
            buf.mark_sent(item, pn, t)
            sent_at[pn] = t
        naive_acked = set()
        naive_lost = set()
        incremental_lost = set()
        now = n * 1000
        largest_so_far = -1
        for _ in range(rng.randrange(1, 5)):
            now += rng.randrange(1, ms(200))
            subset = set(rng.sample(range(n), rng.randrange(1, n + 1)))
            subset -= naive_lost  # the peer cannot ack what was never delivered
            if not subset:
                continue
            largest = max(subset)
            largest_so_far = max(largest_so_far, largest)
            ranges = [(pn, pn) for pn in sorted(subset)]
            _, lost = buf.on_ack(largest, ranges, now, rule, srtt, latest)
            incremental_lost.update(i.packet_number for i in lost)
            # naive model: full re-scan with the predicate
            naive_acked |= subset - naive_lost
            for pn in range(n):
                if pn in naive_acked or pn in naive_lost:
                    continue
                if rule.is_lost(pn, sent_at[pn], largest_so_far, now, srtt, latest):
                    naive_lost.add(pn)
        assert incremental_lost == naive_lost


# ---------------------------------------------------------------------------
# factory
# ---------------------------------------------------------------------------

def test_algorithm_names_and_unknown_name():
    assert algorithm_names() == ["newreno", "quic", "vegas"]
    with pytest.raises(ConfigError) as err:
        create_algorithm("cubic")
    assert "newreno" in str(err.value)
