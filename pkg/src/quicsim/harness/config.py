"""Experiment configuration: a flat key-value file plus command-line
overrides. Durations in the file use the unit named by the key suffix
(_s, _ms) and are stored internally as integer ticks."""

from dataclasses import dataclass, field, replace

from quicsim.errors import ConfigError
from quicsim.sim.engine import ms, sec


@dataclass
class ExperimentConfig:
    flows: int = 2
    cc: str = "newreno"
    duration: int = sec(18)
    seed: int = 1
    bottleneck_rate_bps: int = 2_000_000
    bottleneck_delay: int = ms(25)
    access_rate_bps: int = 100_000_000
    access_delay: int = field(default_factory=lambda: ms(12.5))
    queue_capacity: int = 0          # 0 selects one BDP of max-size packets
    app_packet_bytes: int = 1000
    app_interval: int = ms(2)
    app_streams: int = 1
    app_total_bytes: int = 0         # 0 means unlimited
    flow_start_offset: int = ms(100)  # flow k starts at (k-1) * offset
    trace_interval: int = ms(10)
    out_dir: str = "results"
    plots: bool = True

    def validate(self):
        if self.flows < 1:
            raise ConfigError("flows must be >= 1")
        if self.duration <= 0 or self.trace_interval <= 0:
            raise ConfigError("durations must be positive")
        if self.bottleneck_rate_bps <= 0 or self.access_rate_bps <= 0:
            raise ConfigError("link rates must be positive")
        if self.bottleneck_delay < 0 or self.access_delay < 0:
            raise ConfigError("delays must be non-negative")
        if self.app_packet_bytes <= 0 or self.app_interval <= 0:
            raise ConfigError("application packet size and interval must be positive")
        if self.app_streams < 1:
            raise ConfigError("app_streams must be >= 1")
        return self

    def flow_start(self, k):
        """Start time of flow k (0-based)."""
        return k * self.flow_start_offset

    def min_rtt(self):
        return 2 * (2 * self.access_delay + self.bottleneck_delay)


# file key -> (attribute, converter)
_KEYS = {
    "flows": ("flows", int),
    "cc": ("cc", str),
    "duration_s": ("duration", lambda v: sec(float(v))),
    "seed": ("seed", int),
    "bottleneck_rate_bps": ("bottleneck_rate_bps", int),
    "bottleneck_delay_ms": ("bottleneck_delay", lambda v: ms(float(v))),
    "access_rate_bps": ("access_rate_bps", int),
    "access_delay_ms": ("access_delay", lambda v: ms(float(v))),
    "queue_capacity_pkts": ("queue_capacity", int),
    "app_packet_bytes": ("app_packet_bytes", int),
    "app_interval_ms": ("app_interval", lambda v: ms(float(v))),
    "app_streams": ("app_streams", int),
    "app_total_bytes": ("app_total_bytes", int),
    "flow_start_offset_ms": ("flow_start_offset", lambda v: ms(float(v))),
    "trace_interval_ms": ("trace_interval", lambda v: ms(float(v))),
    "out_dir": ("out_dir", str),
}


def parse_config_file(path, base=None):
    """Read `key = value` lines ('#' comments allowed) over `base`."""
    cfg = base or ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    updates = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        attr, convert = _KEYS[key]
        try:
            updates[attr] = convert(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return replace(cfg, **updates)
