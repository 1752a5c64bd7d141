"""Linear threshold cascades and their nonlinear opinion dynamics relaxation."""

from .graph import (
    WeightedDigraph,
    fcm_thresholds,
    inf_norm,
    is_strongly_connected,
    load_graph,
    serialize,
    spectral_radius,
)
from .ltm import CascadeReport, LtmInstance, ltm_cascade, ltm_step
from .nod import (
    AgentThresholds,
    InputSchedule,
    NodInstance,
    NodOptions,
    Pulse,
    Trajectory,
    agent_thresholds,
    check_neutral_stability,
    integrate,
    nod_cascade,
    nod_cascades,
    nod_rhs,
    sat,
    single_agent_bifurcation,
)
from .relaxation import GammaStarResult, RelaxationParams, check_nondegenerate, delta_gap, gamma_star, relax
from .generate import random_instance

__version__ = "0.1.0"
