"""Fluid-model and packet-level simulation of TCP Reno over a Drop Tail bottleneck."""

__version__ = "0.1.0"

from .dynamics import (ModelParams, equilibrium_rate, rate_derivative,  # noqa: E402
                       window_derivative)
from .errors import (ConfigError, DomainError, EmptySeries, NoEquilibrium,  # noqa: E402
                     WindowTooSmall)
from .integrator import Trajectory, integrate  # noqa: E402
from .loss import LossModel, Variant, loss_probability  # noqa: E402
from .packetsim import PacketSimConfig, PacketSimResult, run_packet_sim  # noqa: E402
from .stationary import (Kind, StationaryPoint, classify_extremum,  # noqa: E402
                         find_stationary_points, lemma_report)

__all__ = [
    "ConfigError", "DomainError", "EmptySeries", "Kind", "LossModel", "ModelParams",
    "NoEquilibrium", "PacketSimConfig", "PacketSimResult", "StationaryPoint", "Trajectory",
    "Variant", "WindowTooSmall", "classify_extremum", "equilibrium_rate",
    "find_stationary_points", "integrate", "lemma_report", "loss_probability",
    "rate_derivative", "run_packet_sim", "window_derivative",
]
