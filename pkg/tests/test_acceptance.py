"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Expensive dumb-bell runs are shared through module-scoped fixtures.
"""

import filecmp
import random
import time

import pytest

from conftest import TwoNodeLab
from quicsim import wire
from quicsim.buffers import SocketTxBuffer, StreamRxBuffer, StreamTxBuffer
from quicsim.cc import LossRule
from quicsim.harness import ExperimentConfig, emit_traces, run_experiment
from quicsim.sim import Address, Network, Simulator, ms, sec
from quicsim.transport import QuicConfig, QuicEndpoint, TransportParameters
from quicsim.transport.connection import ConnectionState as S
from quicsim.wire import QUIC_VERSION_NEGOTIATION, StreamFrame


def _report(name):
    print(f"ACCEPTANCE {name}: PASS")


@pytest.fixture(scope="module")
def paper_run_newreno():
    cfg = ExperimentConfig(cc="newreno", duration=sec(18), seed=1)
    started = time.monotonic()
    run = run_experiment(cfg)
    run.wall_seconds = time.monotonic() - started
    return run


@pytest.fixture(scope="module")
def paper_run_vegas():
    cfg = ExperimentConfig(cc="vegas", duration=sec(18), seed=1)
    return run_experiment(cfg)


# ---------------------------------------------------------------------------
# 1. BDP convergence
# ---------------------------------------------------------------------------

def test_bdp_convergence(paper_run_newreno):
    run = paper_run_newreno
    for recorder in run.recorders:
        mean = recorder.mean_cwnd(sec(12), sec(18))
        assert 12_500 <= mean <= 37_500, \
            f"flow {recorder.flow_id} mean cwnd {mean:.0f} outside BDP band"
    combined = run.summary.combined_goodput_bps
    assert combined >= 1_700_000, f"combined goodput {combined:.0f} bps"
    assert run.wall_seconds < 5.0, f"run took {run.wall_seconds:.2f}s wall clock"
    _report("BDP convergence")


# ---------------------------------------------------------------------------
# 2. Delay ordering
# ---------------------------------------------------------------------------

def test_delay_ordering(paper_run_newreno, paper_run_vegas):
    def pooled_mean_rtt(run):
        samples = [s for conn in run.client_conns for _, s in conn.rtt_samples]
        return sum(samples) / len(samples)

    newreno_rtt = pooled_mean_rtt(paper_run_newreno)
    vegas_rtt = pooled_mean_rtt(paper_run_vegas)
    assert vegas_rtt < newreno_rtt, (vegas_rtt, newreno_rtt)
    min_rtt = ExperimentConfig().min_rtt()
    assert vegas_rtt <= 1.5 * min_rtt, f"vegas mean {vegas_rtt / 1000:.1f} ms"
    _report("Delay ordering")


# ---------------------------------------------------------------------------
# 3. Faster window ramp for the QUIC algorithm
# ---------------------------------------------------------------------------

def _ramp_time(cc_name):
    """Time from entering avoidance (cwnd >= ssthresh) to 2x ssthresh on an
    uncongested path with two-packet ACK aggregation."""
    ssthresh = 25_000
    sim = Simulator(seed=7)
    net = Network(sim)
    a, b = net.add_node("a"), net.add_node("b")
    ab, ba = net.connect(a, b, 10_000_000, ms(25), 1000)
    a.default_route, b.default_route = ab, ba
    params = TransportParameters(max_data=1 << 22, max_stream_data=1 << 22)
    cfg = QuicConfig(params=params, cc=cc_name, initial_ssthresh=ssthresh,
                     ack_packet_threshold=2, ack_window=ms(25),
                     socket_snd=1 << 22, socket_rcv=1 << 22,
                     stream_snd=1 << 22, stream_rcv=1 << 22)
    server_ep = QuicEndpoint(sim, b, 4433, cfg)
    server_ep.listen(lambda conn: setattr(conn, "on_data",
                                          lambda c: c.recv()))
    client_ep = QuicEndpoint(sim, a, 5000, cfg)
    conn = client_ep.connect(Address("b", 4433), connect_now=False)

    marks = {}

    def hook(kind, c):
        cwnd = c.cc.state.cwnd
        if "enter" not in marks and cwnd >= ssthresh:
            marks["enter"] = sim.now
        if "double" not in marks and cwnd >= 2 * ssthresh:
            marks["double"] = sim.now

    conn.trace_hook = hook

    def feed():
        conn.send(b"\xa5" * 1400, stream_hint=1)
        if "double" not in marks and sim.now < sec(12):
            sim.schedule_in(ms(1), feed)

    sim.schedule(0, lambda: (conn.connect(), feed()))
    sim.run_until(sec(12))
    assert conn.packets_lost == 0, "ramp run must be lossless"
    return marks["double"] - marks["enter"]


def test_quic_cc_ramps_faster_than_newreno():
    t_newreno = _ramp_time("newreno")
    t_quic = _ramp_time("quic")
    assert t_quic < t_newreno, (t_quic, t_newreno)
    _report("Faster QUIC-CC ramp")


# ---------------------------------------------------------------------------
# 4. Handshake latencies
# ---------------------------------------------------------------------------

def _first_byte_time(delay, mode):
    if mode == "0rtt":
        cfg = QuicConfig(force_0rtt=True)
    elif mode == "2rtt":
        cfg = QuicConfig(params=TransportParameters(
            initial_version=QUIC_VERSION_NEGOTIATION))
    else:
        cfg = QuicConfig()
    lab = TwoNodeLab(delay=delay, client_cfg=cfg)
    conn = lab.connect(connect_now=False)
    conn.send(b"first-byte", stream_hint=1)
    conn.connect()
    lab.run(sec(5))
    assert lab.deliveries, f"no delivery for {mode} at delay {delay}"
    return lab.deliveries[0][0]


def test_handshake_latencies_exact():
    for d in (ms(10), ms(50)):
        for mode, legs in (("0rtt", 1), ("1rtt", 3), ("2rtt", 5)):
            got = _first_byte_time(d, mode)
            assert abs(got - legs * d) <= 1, (mode, d, got)
    _report("Handshake latencies")


# ---------------------------------------------------------------------------
# 5. Header sizes and round-trip property
# ---------------------------------------------------------------------------

def test_header_sizes_and_roundtrip_property():
    rng = random.Random(0xACCE97)
    long_types = (wire.LT_VERSION_NEGOTIATION, wire.LT_CLIENT_INITIAL,
                  wire.LT_HANDSHAKE, wire.LT_ZRTT_PROTECTED)
    for _ in range(10_000):
        h = wire.long_header(rng.choice(long_types), rng.getrandbits(64),
                             rng.getrandbits(32), rng.randrange(1 << 32))
        data = wire.serialize_header(h)
        assert len(data) == 17
        parsed, consumed = wire.parse_header(data)
        assert parsed == h and consumed == 17

        cid = rng.getrandbits(64) if rng.random() < 0.5 else None
        pn = rng.randrange(1 << rng.choice((8, 16, 32)))
        sh = wire.short_header(pn, cid)
        data = wire.serialize_header(sh)
        assert 2 <= len(data) <= 13
        parsed, consumed = wire.parse_header(data)
        assert parsed == sh and consumed == len(data)

    for _ in range(10_000):
        frame = _random_frame(rng)
        [parsed] = wire.parse_frames(wire.serialize_frame(frame))
        assert parsed == frame
    _report("Header sizes")


def _random_frame(rng):
    kind = rng.randrange(6)
    if kind == 0:
        return StreamFrame(rng.randrange(1, 9), rng.randrange(1 << 40),
                           rng.randbytes(rng.randrange(0, 300)),
                           fin=rng.random() < 0.25)
    if kind == 1:
        largest = rng.randrange(50, 1 << 24)
        first = rng.randrange(1, 12)
        blocks, budget = [], largest - first
        for _ in range(rng.randrange(0, 4)):
            gap, length = rng.randrange(1, 9), rng.randrange(1, 9)
            if budget - gap - length < 0:
                break
            blocks.append((gap, length))
            budget -= gap + length
        return wire.AckFrame(largest, rng.randrange(1 << 30), first, blocks)
    if kind == 2:
        return wire.VersionNegotiationFrame(
            tuple(rng.getrandbits(32) for _ in range(rng.randrange(1, 4))))
    if kind == 3:
        return wire.ConnectionCloseFrame(rng.randrange(1 << 16),
                                         rng.randbytes(rng.randrange(0, 20)))
    if kind == 4:
        return wire.MaxDataFrame(rng.randrange(1 << 40))
    return wire.MaxStreamDataFrame(rng.randrange(1, 9), rng.randrange(1 << 40))


# ---------------------------------------------------------------------------
# 6. Buffer suites
# ---------------------------------------------------------------------------

def test_buffer_suites():
    # insertion / rejection at capacity
    sock = SocketTxBuffer(capacity=1000)
    assert sock.add(StreamFrame(1, 0, b"x" * 900)) is True
    assert sock.add(StreamFrame(1, 900, b"x" * 200)) is False

    # socket-full requeue lands back in the stream buffer at the same offset
    stream_tx = StreamTxBuffer()
    stream_tx.write(b"y" * 500)
    offset, chunk = stream_tx.issue(500)
    full_sock = SocketTxBuffer(capacity=100)
    if not full_sock.add(StreamFrame(2, offset, chunk)):
        stream_tx.requeue(offset, chunk)
    assert stream_tx.issue(500) == (0, b"y" * 500)

    # retransmission re-queueing with fresh packet numbers
    sock = SocketTxBuffer()
    for pn in range(4):
        sock.add(StreamFrame(1, pn * 10, b"z" * 10))
        sock.mark_sent(sock.next_packet(10), pn, 0)
    sock.on_ack(3, [(3, 3)], 0, LossRule(), 0, 0)
    assert sock.prepare_retransmissions() == 1  # pn 0 trails by threshold
    item = sock.next_packet(100)
    sock.mark_sent(item, 4, 1)
    assert item.packet_number == 4 and item.frames[0].offset == 0

    # out-of-order reassembly
    rx = StreamRxBuffer()
    assert rx.insert(500, b"b" * 500) == b""
    assert rx.insert(0, b"a" * 500) == b"a" * 500 + b"b" * 500

    # FIN length accounting
    rx = StreamRxBuffer()
    rx.insert(0, b"c" * 100, fin=True)
    assert rx.total_length == 100 and rx.finished
    _report("Buffer suites")


# ---------------------------------------------------------------------------
# 7. Reliability under randomized loss
# ---------------------------------------------------------------------------

def _loss_scenario(seed):
    rng = random.Random(seed)
    n_streams = rng.randrange(1, 5)
    sizes = [rng.randrange(1_000, 40_000) for _ in range(n_streams)]
    loss_rate = rng.uniform(0.02, 0.20)
    payloads = {sid + 1: bytes(rng.randrange(256) for _ in range(40)) * (
        sizes[sid] // 40 + 1) for sid in range(n_streams)}
    payloads = {sid: p[:sizes[sid - 1]] for sid, p in payloads.items()}

    lab = TwoNodeLab(seed=seed, rate=20_000_000, delay=ms(10), queue=4000)
    drop_rng = random.Random(seed * 7 + 1)
    lab.ab.drop_hook = lambda d, i: drop_rng.random() < loss_rate
    lab.ba.drop_hook = lambda d, i: drop_rng.random() < loss_rate

    conn = lab.connect()
    remaining = {sid: memoryview(p) for sid, p in payloads.items()}

    def pump():
        for sid in sorted(remaining):
            if remaining[sid]:
                sent = conn.send(bytes(remaining[sid][:2000]), stream_hint=sid)
                remaining[sid] = remaining[sid][sent:]
        if any(len(v) for v in remaining.values()) and lab.sim.now < sec(100):
            lab.sim.schedule_in(ms(5), pump)

    lab.sim.schedule(ms(1), pump)
    deadline = sec(120)
    step = sec(1)
    t = 0
    while t < deadline:
        t += step
        lab.run(t)
        if all(len(lab.delivered_bytes(sid)) == len(payloads[sid])
               for sid in payloads):
            break
    return lab, conn, payloads


def test_reliability_under_randomized_loss():
    for seed in range(100):
        lab, conn, payloads = _loss_scenario(seed)
        for sid, payload in payloads.items():
            got = lab.delivered_bytes(sid)
            assert got == payload, \
                f"seed {seed} stream {sid}: {len(got)}/{len(payload)} bytes"
        pns = conn.emitted_pns
        assert pns == list(range(len(pns))), f"seed {seed}: pn sequence broken"
        assert conn.bytes_in_flight == conn._sock_tx.recompute_bytes_in_flight()
        lab.net.assert_conservation()
    _report("Reliability under loss")


# ---------------------------------------------------------------------------
# 8. Head-of-line avoidance
# ---------------------------------------------------------------------------

def _hol_run(drop_stream1_second_packet):
    lab = TwoNodeLab(seed=11, rate=10_000_000, delay=ms(20), queue=1000)

    if drop_stream1_second_packet:
        def hook(datagram, index):
            try:
                _, frames = wire.parse_packet(datagram.payload)
            except Exception:
                return False
            return any(isinstance(f, StreamFrame) and f.stream_id == 1
                       and f.offset == 500 for f in frames)
        lab.ab.drop_hook = hook

    conn = lab.connect()
    for k in range(10):
        sid = (k % 2) + 1
        lab.sim.schedule(ms(200) + k * ms(12),
                         lambda sid=sid: conn.send(b"\x42" * 500, stream_hint=sid))
    lab.run(sec(8))
    stream2 = [(t, len(d)) for t, sid, d in lab.deliveries if sid == 2]
    stream1_bytes = lab.delivered_bytes(1)
    return stream2, stream1_bytes


def test_hol_avoidance():
    baseline_s2, baseline_s1 = _hol_run(False)
    lossy_s2, lossy_s1 = _hol_run(True)
    assert lossy_s1 == baseline_s1 == b"\x42" * 2500  # stream 1 recovered
    assert len(lossy_s2) == len(baseline_s2)
    for (t_base, n_base), (t_loss, n_loss) in zip(baseline_s2, lossy_s2):
        assert n_base == n_loss
        assert abs(t_base - t_loss) <= 1, (t_base, t_loss)
    _report("HOL avoidance")


# ---------------------------------------------------------------------------
# 9. Determinism
# ---------------------------------------------------------------------------

def test_determinism_byte_identical_traces(tmp_path):
    cfg = ExperimentConfig(duration=sec(6), seed=5, plots=False)
    for name in ("first", "second"):
        run = run_experiment(cfg)
        emit_traces(tmp_path / name, run.recorders, run.summary)
    files = ["summary.json"]
    for k in range(1, cfg.flows + 1):
        files += [f"cwnd-flow{k}.csv", f"rtt-flow{k}.csv"]
    for fname in files:
        assert filecmp.cmp(tmp_path / "first" / fname,
                           tmp_path / "second" / fname, shallow=False), fname
    _report("Determinism")
