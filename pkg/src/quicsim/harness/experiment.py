"""The dumb-bell experiment: builds the topology, wires endpoints and
applications, records per-flow congestion traces, and produces the summary
report. One process runs one simulation; repeated runs with the same
configuration and seed are byte-identical."""

import statistics
from dataclasses import dataclass, field

from quicsim.cc import create_algorithm  # noqa: F401 (validates names early)
from quicsim.errors import ConfigError
from quicsim.harness.apps import RoundRobinClient, SinkServer
from quicsim.sim import Address, Simulator, TopologyConfig, build_dumbbell
from quicsim.transport import QuicConfig, QuicEndpoint

SERVER_PORT = 4433
CLIENT_PORT = 50000


class FlowTraceRecorder:
    """Per-flow trace rows, written on every change and on the sampling grid.

    cwnd rows: (ticks, cwnd, ssthresh, bytes_in_flight, packets_lost, state)
    rtt rows:  (ticks, srtt, latest_rtt)
    """

    def __init__(self, flow_id):
        self.flow_id = flow_id
        self.cwnd_rows = []
        self.rtt_rows = []
        self.conn = None

    def attach(self, conn):
        self.conn = conn
        conn.trace_hook = self._on_trace

    def _on_trace(self, kind, conn):
        if kind in ("cc", "state"):
            self._record_cwnd(conn)
        elif kind == "rtt":
            self._record_rtt(conn)

    def _record_cwnd(self, conn):
        s = conn.cc.state
        self.cwnd_rows.append((conn.sim.now, s.cwnd, s.ssthresh,
                               s.bytes_in_flight, conn.packets_lost,
                               conn.state.value))

    def _record_rtt(self, conn):
        s = conn.cc.state
        self.rtt_rows.append((conn.sim.now, s.srtt, s.latest_rtt))

    def heartbeat(self):
        if self.conn is not None:
            self._record_cwnd(self.conn)
            self._record_rtt(self.conn)

    def mean_cwnd(self, t_start, t_end):
        """Time-weighted mean congestion window over [t_start, t_end]."""
        rows = self.cwnd_rows
        if not rows:
            return 0.0
        total = 0
        weight = 0
        prev_t, prev_cwnd = None, None
        for row in rows:
            t, cwnd = row[0], row[1]
            if prev_t is not None:
                lo, hi = max(prev_t, t_start), min(t, t_end)
                if hi > lo:
                    total += prev_cwnd * (hi - lo)
                    weight += hi - lo
            prev_t, prev_cwnd = t, cwnd
        if prev_t is not None and prev_t < t_end:
            lo = max(prev_t, t_start)
            total += prev_cwnd * (t_end - lo)
            weight += t_end - lo
        return total / weight if weight else 0.0


@dataclass
class FlowResult:
    flow_id: int
    start: int
    delivered_bytes: int
    goodput_bps: float
    mean_rtt_s: float
    median_rtt_s: float
    retransmissions: int
    packets_lost: int
    steady_cwnd_bytes: float
    per_stream: dict


@dataclass
class SummaryReport:
    duration_s: float
    seed: int
    cc: str
    flows: list
    combined_goodput_bps: float = 0.0
    config: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "duration_s": self.duration_s,
            "seed": self.seed,
            "cc": self.cc,
            "combined_goodput_bps": self.combined_goodput_bps,
            "flows": [vars(f) for f in self.flows],
            "config": self.config,
        }


@dataclass
class ExperimentRun:
    """Everything a caller might want to inspect after a run."""

    summary: SummaryReport
    recorders: list
    sim: object
    network: object
    clients: list
    servers: list
    client_conns: list


def run_experiment(cfg, link_hooks=None):
    """Run one dumb-bell experiment and return an ExperimentRun.

    `link_hooks`, when given, is a callable(network) applied after the
    topology is built; tests use it to script losses on specific links.
    """
    cfg.validate()
    create_algorithm(cfg.cc)  # fail fast on unknown algorithm names

    sim = Simulator(seed=cfg.seed)
    topo = TopologyConfig(
        pairs=cfg.flows,
        bottleneck_rate_bps=cfg.bottleneck_rate_bps,
        bottleneck_delay=cfg.bottleneck_delay,
        access_rate_bps=cfg.access_rate_bps,
        access_delay=cfg.access_delay,
        queue_capacity=cfg.queue_capacity or None,
    )
    network = build_dumbbell(sim, topo)
    if link_hooks is not None:
        link_hooks(network)

    quic_cfg = QuicConfig(cc=cfg.cc)
    recorders = []
    clients = []
    servers = []
    client_conns = []
    for k in range(cfg.flows):
        server_node = network.nodes[f"server_{k}"]
        client_node = network.nodes[f"client_{k}"]
        server_ep = QuicEndpoint(sim, server_node, SERVER_PORT, quic_cfg)
        sink = SinkServer(sim)
        server_ep.listen(sink.on_connection)
        servers.append(sink)

        client_ep = QuicEndpoint(sim, client_node, CLIENT_PORT + k, quic_cfg)
        conn = client_ep.connect(Address(server_node.name, SERVER_PORT),
                                 connect_now=False)
        client_conns.append(conn)
        recorder = FlowTraceRecorder(k + 1)
        recorder.attach(conn)
        recorders.append(recorder)

        app = RoundRobinClient(sim, conn,
                               streams=cfg.app_streams,
                               packet_bytes=cfg.app_packet_bytes,
                               interval=cfg.app_interval,
                               total_bytes=cfg.app_total_bytes,
                               start_at=cfg.flow_start(k))
        app.start()
        clients.append(app)

    def heartbeat():
        for recorder in recorders:
            recorder.heartbeat()
        if sim.now + cfg.trace_interval <= cfg.duration:
            sim.schedule_in(cfg.trace_interval, heartbeat)

    sim.schedule(0, heartbeat)
    sim.run_until(cfg.duration)

    summary = _summarize(cfg, recorders, clients, servers, client_conns)
    return ExperimentRun(summary, recorders, sim, network, clients, servers,
                         client_conns)


def _summarize(cfg, recorders, clients, servers, client_conns):
    flows = []
    combined = 0.0
    steady_start = cfg.duration - cfg.duration // 3
    for k, (recorder, sink, conn) in enumerate(zip(recorders, servers,
                                                   client_conns)):
        start = cfg.flow_start(k)
        active = max(cfg.duration - start, 1)
        goodput = sink.delivered_bytes * 8 * 1_000_000 / active
        combined += goodput
        samples = [s for _, s in conn.rtt_samples]
        mean_rtt = statistics.fmean(samples) / 1e6 if samples else 0.0
        median_rtt = statistics.median(samples) / 1e6 if samples else 0.0
        flows.append(FlowResult(
            flow_id=k + 1,
            start=start,
            delivered_bytes=sink.delivered_bytes,
            goodput_bps=goodput,
            mean_rtt_s=mean_rtt,
            median_rtt_s=median_rtt,
            retransmissions=conn.retransmitted_packets,
            packets_lost=conn.packets_lost,
            steady_cwnd_bytes=recorder.mean_cwnd(steady_start, cfg.duration),
            per_stream=dict(sorted(sink.per_stream.items())),
        ))
    return SummaryReport(
        duration_s=cfg.duration / 1e6,
        seed=cfg.seed,
        cc=cfg.cc,
        flows=flows,
        combined_goodput_bps=combined,
        config={
            "flows": cfg.flows,
            "bottleneck_rate_bps": cfg.bottleneck_rate_bps,
            "min_rtt_s": cfg.min_rtt() / 1e6,
            "queue_capacity_pkts": cfg.queue_capacity,
            "app_packet_bytes": cfg.app_packet_bytes,
            "app_interval_s": cfg.app_interval / 1e6,
            "app_streams": cfg.app_streams,
        },
    )
