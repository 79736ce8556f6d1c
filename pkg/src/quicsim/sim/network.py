"""Simulated network: nodes, point-to-point links with drop-tail queues,
datagram routing, and the dumb-bell topology builder.

Links are unidirectional; `Network.connect` wires a pair of them so the
queueing state of each direction stays independent. A datagram that arrives
while the transmitter is busy and the queue is full is dropped silently
(drop-tail); the drop is counted, never raised.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field

from quicsim.errors import ConfigError, LogicError
from quicsim.sim.engine import ms

logger = logging.getLogger(__name__)

# Largest datagram payload the network will carry.
MTU_PAYLOAD = 1500


@dataclass(frozen=True)
class Address:
    node: str
    port: int


@dataclass
class Datagram:
    src: Address
    dst: Address
    payload: bytes


def serialization_ticks(nbytes, rate_bps):
    """Time to clock `nbytes` onto a link of `rate_bps`, rounded to ticks."""
    bits = nbytes * 8
    return (bits * 1_000_000 + rate_bps // 2) // rate_bps


class Link:
    """One direction of a point-to-point link.

    `rate_bps=None` models an ideal link: no serialization time and no
    queueing, used by tests that need exact propagation-only timelines.
    `drop_hook(datagram, index)` lets tests script losses; the index counts
    transmit attempts on this link starting from 0.
    """

    def __init__(self, sim, src_node, dst_node, rate_bps, one_way_delay, queue_capacity):
        if rate_bps is not None and rate_bps <= 0:
            raise ConfigError(f"link rate must be positive, got {rate_bps}")
        if one_way_delay < 0:
            raise ConfigError(f"link delay must be non-negative, got {one_way_delay}")
        self.sim = sim
        self.src_node = src_node
        self.dst_node = dst_node
        self.rate_bps = rate_bps
        self.one_way_delay = one_way_delay
        self.queue_capacity = queue_capacity
        self.queue = deque()
        self.busy = False
        self.drop_hook = None
        # Conservation counters: injected == delivered + dropped + in_flight.
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self._propagating = 0

    def transmit(self, datagram):
        if len(datagram.payload) > MTU_PAYLOAD:
            raise LogicError(f"datagram payload {len(datagram.payload)} exceeds MTU {MTU_PAYLOAD}")
        index = self.injected
        self.injected += 1
        if self.drop_hook is not None and self.drop_hook(datagram, index):
            self.dropped += 1
            return
        if self.rate_bps is None:
            self._propagate(datagram)
        elif not self.busy:
            self._begin(datagram)
        elif len(self.queue) < self.queue_capacity:
            self.queue.append(datagram)
        else:
            self.dropped += 1

    def _begin(self, datagram):
        self.busy = True
        ser = serialization_ticks(len(datagram.payload), self.rate_bps)
        self.sim.schedule_in(ser, lambda: self._depart(datagram))

    def _depart(self, datagram):
        self._propagate(datagram)
        if self.queue:
            self._begin(self.queue.popleft())
        else:
            self.busy = False

    def _propagate(self, datagram):
        self._propagating += 1
        self.sim.schedule_in(self.one_way_delay, lambda: self._arrive(datagram))

    def _arrive(self, datagram):
        self._propagating -= 1
        self.delivered += 1
        self.dst_node.receive(datagram)

    @property
    def in_flight(self):
        return len(self.queue) + (1 if self.busy else 0) + self._propagating


class Node:
    """Network node: bound ports for local delivery plus a static routing table."""

    def __init__(self, network, name):
        self.network = network
        self.name = name
        self.ports = {}
        self.routes = {}  # destination node name -> Link
        self.default_route = None

    def bind(self, port, handler):
        if port in self.ports:
            raise ConfigError(f"port {port} already bound on node {self.name}")
        self.ports[port] = handler

    def unbind(self, port):
        self.ports.pop(port, None)

    def send(self, datagram):
        self._forward(datagram)

    def receive(self, datagram):
        if datagram.dst.node == self.name:
            handler = self.ports.get(datagram.dst.port)
            if handler is None:
                self.network.unrouted += 1
                logger.debug("%s: no handler on port %d", self.name, datagram.dst.port)
                return
            handler(datagram)
        else:
            self._forward(datagram)

    def _forward(self, datagram):
        link = self.routes.get(datagram.dst.node, self.default_route)
        if link is None:
            raise ConfigError(f"node {self.name} has no route to {datagram.dst.node}")
        link.transmit(datagram)


class Network:
    """Container for nodes and links, with path helpers and global counters."""

    def __init__(self, sim):
        self.sim = sim
        self.nodes = {}
        self.links = []
        self.unrouted = 0

    def add_node(self, name):
        if name in self.nodes:
            raise ConfigError(f"duplicate node {name}")
        node = Node(self, name)
        self.nodes[name] = node
        return node

    def connect(self, a, b, rate_bps, one_way_delay, queue_capacity):
        """Create the two directed links between nodes `a` and `b`."""
        ab = Link(self.sim, a, b, rate_bps, one_way_delay, queue_capacity)
        ba = Link(self.sim, b, a, rate_bps, one_way_delay, queue_capacity)
        self.links.extend((ab, ba))
        return ab, ba

    def path_delay(self, src_name, dst_name):
        """Sum of one-way link delays along the routed path src -> dst."""
        node = self.nodes[src_name]
        total = 0
        hops = 0
        while node.name != dst_name:
            link = node.routes.get(dst_name, node.default_route)
            if link is None:
                raise ConfigError(f"no route from {node.name} to {dst_name}")
            total += link.one_way_delay
            node = link.dst_node
            hops += 1
            if hops > 64:
                raise ConfigError("routing loop detected")
        return total

    def ping(self, a, b):
        """Minimum round-trip time between two nodes: propagation only."""
        return self.path_delay(a, b) + self.path_delay(b, a)

    def counters(self):
        injected = sum(l.injected for l in self.links)
        delivered = sum(l.delivered for l in self.links)
        dropped = sum(l.dropped for l in self.links)
        in_flight = sum(l.in_flight for l in self.links)
        return {"injected": injected, "delivered": delivered,
                "dropped": dropped, "in_flight": in_flight}

    def assert_conservation(self):
        for link in self.links:
            if link.injected != link.delivered + link.dropped + link.in_flight:
                raise LogicError(
                    f"conservation violated on {link.src_node.name}->{link.dst_node.name}: "
                    f"{link.injected} != {link.delivered}+{link.dropped}+{link.in_flight}")
            if len(link.queue) > link.queue_capacity:
                raise LogicError("queue occupancy exceeds capacity")


@dataclass
class TopologyConfig:
    """Dumb-bell parameters. Delays are one-way, in ticks.

    `queue_capacity=None` sizes the bottleneck queue to one bandwidth-delay
    product of max-size packets, rounded up.
    """

    pairs: int = 2
    bottleneck_rate_bps: int = 2_000_000
    bottleneck_delay: int = ms(25)
    access_rate_bps: int = 100_000_000
    access_delay: int = field(default_factory=lambda: ms(12.5))
    queue_capacity: int | None = None
    bdp_packet_size: int = 1460
    access_queue_capacity: int = 256

    def min_rtt(self):
        return 2 * (2 * self.access_delay + self.bottleneck_delay)

    def bdp_bytes(self):
        return self.bottleneck_rate_bps * self.min_rtt() // 8_000_000

    def bottleneck_queue(self):
        if self.queue_capacity is not None:
            return self.queue_capacity
        return max(1, math.ceil(self.bdp_bytes() / self.bdp_packet_size))


class Dumbbell(Network):
    """N client/server pairs joined through a shared bottleneck link."""

    def __init__(self, sim, cfg):
        super().__init__(sim)
        if cfg.pairs < 1:
            raise ConfigError("dumb-bell needs at least one client/server pair")
        self.cfg = cfg
        left = self.add_node("router_l")
        right = self.add_node("router_r")
        queue = cfg.bottleneck_queue()
        self.bottleneck_lr, self.bottleneck_rl = self.connect(
            left, right, cfg.bottleneck_rate_bps, cfg.bottleneck_delay, queue)
        left.routes["router_r"] = self.bottleneck_lr
        right.routes["router_l"] = self.bottleneck_rl

        self.client_names = []
        self.server_names = []
        for i in range(cfg.pairs):
            client = self.add_node(f"client_{i}")
            server = self.add_node(f"server_{i}")
            self.client_names.append(client.name)
            self.server_names.append(server.name)

            to_l, from_l = self.connect(client, left,
                                        cfg.access_rate_bps, cfg.access_delay,
                                        cfg.access_queue_capacity)
            to_r, from_r = self.connect(server, right,
                                        cfg.access_rate_bps, cfg.access_delay,
                                        cfg.access_queue_capacity)
            # Edge nodes reach everything through their access link.
            client.default_route = to_l
            server.default_route = to_r
            left.routes[client.name] = from_l
            left.routes[server.name] = self.bottleneck_lr
            right.routes[server.name] = from_r
            right.routes[client.name] = self.bottleneck_rl


def build_dumbbell(sim, cfg):
    return Dumbbell(sim, cfg)
