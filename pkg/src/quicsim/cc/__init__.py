from quicsim.cc.base import (
    INITIAL_WINDOW,
    MIN_WINDOW,
    MSS,
    CongestionAlgorithm,
    CongestionController,
    CongestionState,
    LossRule,
)
from quicsim.cc.algorithms import (
    NewReno,
    QuicCongestionControl,
    Vegas,
    algorithm_names,
    create_algorithm,
)

__all__ = [
    "INITIAL_WINDOW", "MIN_WINDOW", "MSS",
    "CongestionAlgorithm", "CongestionController", "CongestionState",
    "LossRule", "NewReno", "Vegas", "QuicCongestionControl",
    "algorithm_names", "create_algorithm",
]
