"""Planning and simulation of tiled 360-degree video streaming over a
multi-antenna, multi-carrier downlink."""
from .config import RunConfig, load_config, preset
from .model import ProbabilityCase, StreamingModel, TilingGrid
from .sim import ViewTrace, run_multi_user, run_single_user
from .solver_mu import cccp_plan_gop, slot_adapt
from .solver_su import plan_gop_su, solve_rate_program

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "load_config", "preset", "ProbabilityCase", "StreamingModel", "TilingGrid",
    "ViewTrace", "run_single_user", "run_multi_user", "cccp_plan_gop", "slot_adapt",
    "plan_gop_su", "solve_rate_program",
]
