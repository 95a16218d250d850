"""Rolling-horizon ride-sharing dispatch with demand forecasting and vehicle relocation."""

from .dispatch import DispatchParams, dispatch_epoch, penalty
from .engine import SimConfig, run
from .network import build_grid, load_travel_matrix
from .report import compare, summarize

__all__ = ["DispatchParams", "SimConfig", "build_grid", "compare", "dispatch_epoch", "load_travel_matrix",
           "penalty", "run", "summarize"]
