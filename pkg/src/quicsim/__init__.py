"""quicsim: a deterministic discrete-event network simulator hosting a
QUIC-style transport stack with pluggable congestion control."""

__version__ = "0.1.0"
