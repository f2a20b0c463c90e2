"""External-agent campaigns: plant one non-updating opinion per step to push everyone past a target."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hkdyn.dynamics import NeighborhoodSpec, OpinionState, _drift_update, as_state, pairwise
from hkdyn.simulation import Dynamics, Trajectory

log = logging.getLogger(__name__)

GREEDY_RECURSIVE = "GREEDY_RECURSIVE"
FIXED_OFFSET = "FIXED_OFFSET"
SCRIPTED = "SCRIPTED"

DONE = None  # plan result once every agent has reached the target


@dataclass(frozen=True)
class CampaignSpec:
    theta: float
    gamma: float
    strategy: str = GREEDY_RECURSIVE
    delta: float | None = None  # FIXED_OFFSET distance above the current minimum
    placements: tuple[float | None, ...] = ()  # SCRIPTED; None = no external agent that step
    max_steps: int = 100_000

    def __post_init__(self):
        if self.strategy not in (GREEDY_RECURSIVE, FIXED_OFFSET, SCRIPTED):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not self.gamma > 0 or not math.isfinite(self.gamma):
            raise ValueError("campaigns need a finite positive gamma")
        if self.strategy == FIXED_OFFSET and self.delta is None:
            raise ValueError("FIXED_OFFSET needs delta")
        object.__setattr__(self, "placements", tuple(self.placements))

    def to_dict(self) -> dict:
        doc = {"theta": self.theta, "gamma": self.gamma, "strategy": self.strategy, "max_steps": self.max_steps}
        if self.delta is not None:
            doc["delta"] = self.delta
        if self.placements:
            doc["placements"] = list(self.placements)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> CampaignSpec:
        return cls(
            float(doc["theta"]),
            float(doc["gamma"]),
            doc.get("strategy", GREEDY_RECURSIVE),
            None if doc.get("delta") is None else float(doc["delta"]),
            tuple(None if p is None else float(p) for p in doc.get("placements", ())),
            int(doc.get("max_steps", 100_000)),
        )


@dataclass
class CampaignResult:
    success: bool
    T: int | None
    placements: list[float | None]  # placements[t] acts on the step t -> t+1
    trajectory: Trajectory
    bound_cap: float
    strategy: str
    herded: list[frozenset[int]] = field(default_factory=list)  # greedy only: group herded at each step

    @property
    def status(self) -> str:
        return "REACHED" if self.success else "NOT_REACHED"

    @property
    def within_bound(self) -> bool:
        return self.success and self.T <= math.ceil(self.bound_cap - 1e-9)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "status": self.status,
            "T": self.T,
            "bound_cap": self.bound_cap,
            "within_bound": self.within_bound,
            "strategy": self.strategy,
            "placements": self.placements,
        }


def offset_placement(anchor: float, delta: float) -> float:
    """``anchor + delta``, nudged down so the rounded distance never exceeds ``delta``."""
    x0 = anchor + delta
    while x0 - anchor > delta:
        x0 = np.nextafter(x0, -np.inf)
    return float(x0)


def step_with_external(state: OpinionState, spec: NeighborhoodSpec, x0: float | None) -> OpinionState:
    """HK step where agents within ``gamma`` of ``x0`` count it as one extra neighbor."""
    x = state.opinions
    diff, mask = pairwise(x, spec)
    weights = np.where(mask, 1.0, 0.0)
    reach = np.zeros(x.size, dtype=bool) if x0 is None else np.abs(x0 - x) <= spec.gamma
    if not reach.any():
        return state.advance(_drift_update(x, weights, diff, mask.sum(axis=1)))
    # External pull is added after the truthful sum so unreached agents match hk_step exactly.
    drift = (weights * diff).sum(axis=1) + np.where(reach, x0 - x, 0.0)
    return state.advance(x + drift / (mask.sum(axis=1) + reach))


def group_partition(state: OpinionState, spec: NeighborhoodSpec) -> list[list[int]]:
    """Maximal chains of sorted agents with consecutive gaps ``<= gamma``, lowest first."""
    x = state.opinions
    order = np.argsort(x, kind="stable")
    if not spec.bounded:
        return [[int(i) for i in order]]
    cuts = np.flatnonzero(np.diff(x[order]) > spec.gamma) + 1
    return [[int(i) for i in chunk] for chunk in np.split(order, cuts)]


def _target_group(state: OpinionState, spec: NeighborhoodSpec, theta: float):
    x = state.opinions
    for group in reversed(group_partition(state, spec)):
        if x[group].min() < theta:
            return group
    return None


def greedy_recursive_plan_step(state: OpinionState, spec: NeighborhoodSpec, theta: float) -> float | None:
    """Place the external agent ``gamma`` above the lowest member of the topmost group still below ``theta``."""
    group = _target_group(state, spec, theta)
    if group is None:
        return DONE
    return offset_placement(float(state.opinions[group].min()), spec.gamma)


def run_campaign(init, spec: CampaignSpec) -> CampaignResult:
    state = as_state(init)
    nspec = NeighborhoodSpec(spec.gamma)
    n = state.n
    bound_cap = (spec.theta - float(state.opinions.min())) * n / spec.gamma
    states = [state]
    placements: list[float | None] = []
    herded: list[frozenset[int]] = []
    T = 0 if np.all(state.opinions >= spec.theta) else None

    t = 0
    while T is None and t < spec.max_steps:
        if spec.strategy == GREEDY_RECURSIVE:
            group = _target_group(state, nspec, spec.theta)
            herded.append(frozenset(group))
            x0 = offset_placement(float(state.opinions[group].min()), spec.gamma)
        elif spec.strategy == FIXED_OFFSET:
            x0 = offset_placement(float(state.opinions.min()), spec.delta)
        else:
            x0 = spec.placements[t] if t < len(spec.placements) else None
        placements.append(x0)
        state = step_with_external(state, nspec, x0)
        states.append(state)
        t += 1
        if np.all(state.opinions >= spec.theta):
            T = t

    traj = Trajectory(states, Dynamics.hk(spec.gamma), None, "CONVERGED" if T is not None else "NOT_CONVERGED", T)
    result = CampaignResult(T is not None, T, placements, traj, bound_cap, spec.strategy, herded)
    if spec.strategy == GREEDY_RECURSIVE and result.success and not result.within_bound:
        log.warning("greedy campaign took T=%d > ceil(bound_cap)=%d", T, math.ceil(bound_cap))
    return result


def lower_bound_scenario(n: int, gamma: float, start: float) -> OpinionState:
    """All ``n`` agents share opinion ``start``; no placement can split them."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return OpinionState(0, np.full(n, float(start)))


def lower_bound_steps(n: int, gamma: float, start: float, theta: float) -> float:
    """Minimum steps any placement schedule needs from the all-equal state."""
    return (theta - start) * (n + 1) / gamma - 1


def herding_segments(result: CampaignResult) -> list[list[float]]:
    """Split greedy placements into runs where consecutive herded groups overlap."""
    segments: list[list[float]] = []
    prev: frozenset[int] | None = None
    for group, x0 in zip(result.herded, result.placements):
        if prev is None or not (group & prev):
            segments.append([])
        segments[-1].append(x0)
        prev = group
    return segments
