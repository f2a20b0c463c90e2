"""Generalized Hegselmann-Krause opinion dynamics: simulation, convergence analysis and control."""

__version__ = "0.1.0"

from hkdyn.dynamics import (  # noqa: E402
    UNBOUNDED,
    NeighborhoodSpec,
    OpinionState,
    hk_step,
    neighbors,
    range_stats,
    weighted_step,
)
from hkdyn.influence import InfluenceFunction, check_influence_assumptions  # noqa: E402
from hkdyn.cost import CostFunction, CostProfile, argmin_update, cost_step, local_cost  # noqa: E402
from hkdyn.simulation import (  # noqa: E402
    Dynamics,
    StopRule,
    Trajectory,
    cluster_equilibrium,
    detect_convergence,
    is_order_preserved,
    simulate,
)

__all__ = [
    "UNBOUNDED",
    "CostFunction",
    "CostProfile",
    "Dynamics",
    "InfluenceFunction",
    "NeighborhoodSpec",
    "OpinionState",
    "StopRule",
    "Trajectory",
    "argmin_update",
    "check_influence_assumptions",
    "cluster_equilibrium",
    "cost_step",
    "detect_convergence",
    "hk_step",
    "is_order_preserved",
    "local_cost",
    "neighbors",
    "range_stats",
    "simulate",
    "weighted_step",
]
