from quicsim.sim.engine import MS, SEC, US, Simulator, ms, sec
from quicsim.sim.network import (
    Address,
    Datagram,
    Dumbbell,
    Link,
    Network,
    Node,
    TopologyConfig,
    build_dumbbell,
    serialization_ticks,
)

__all__ = [
    "MS", "SEC", "US", "Simulator", "ms", "sec",
    "Address", "Datagram", "Dumbbell", "Link", "Network", "Node",
    "TopologyConfig", "build_dumbbell", "serialization_ticks",
]
