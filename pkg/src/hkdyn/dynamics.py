"""Opinion states, neighbor sets and the synchronous averaging updates.

Agents are indexed from 0 in the Python API. Exported files number truthful
agents from 1 so that id 0 stays free for an external agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hkdyn.influence import InfluenceFunction


@dataclass(frozen=True, eq=False)
class OpinionState:
    """Opinions of all ``n`` agents at time ``step``. The array is read-only."""

    step: int
    opinions: np.ndarray

    def __post_init__(self):
        x = np.array(self.opinions, dtype=float, copy=True).reshape(-1)
        if x.size < 1:
            raise ValueError("an opinion state needs at least one agent")
        if not np.all(np.isfinite(x)):
            raise ValueError("opinions must be finite")
        if self.step < 0:
            raise ValueError("step must be non-negative")
        x.setflags(write=False)
        object.__setattr__(self, "opinions", x)

    @property
    def n(self) -> int:
        return self.opinions.size

    def advance(self, opinions) -> OpinionState:
        return OpinionState(self.step + 1, opinions)

    def __eq__(self, other):
        if not isinstance(other, OpinionState):
            return NotImplemented
        return self.step == other.step and np.array_equal(self.opinions, other.opinions)

    def __len__(self):
        return self.n


def as_state(x, step: int = 0) -> OpinionState:
    return x if isinstance(x, OpinionState) else OpinionState(step, x)


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Confidence threshold; ``gamma = inf`` means everyone hears everyone."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")

    @classmethod
    def unbounded(cls) -> NeighborhoodSpec:
        return cls(math.inf)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.gamma)

    def to_json(self):
        return self.gamma if self.bounded else "UNBOUNDED"

    @classmethod
    def from_json(cls, value) -> NeighborhoodSpec:
        if value == "UNBOUNDED":
            return cls.unbounded()
        return cls(float(value))


UNBOUNDED = NeighborhoodSpec.unbounded()


def neighbors(state: OpinionState, i: int, spec: NeighborhoodSpec) -> set[int]:
    """Indices ``j`` with ``|x_j - x_i| <= gamma``; always contains ``i``."""
    if not 0 <= i < state.n:
        raise IndexError(f"agent index {i} out of range for n={state.n}")
    if not spec.bounded:
        return set(range(state.n))
    x = state.opinions
    return {int(j) for j in np.flatnonzero(np.abs(x - x[i]) <= spec.gamma)} | {i}


def pairwise(x: np.ndarray, spec: NeighborhoodSpec):
    """Return ``(diff, mask)`` with ``diff[i, j] = x_j - x_i`` and the neighbor mask."""
    diff = x[None, :] - x[:, None]
    if spec.bounded:
        mask = np.abs(diff) <= spec.gamma
    else:
        mask = np.ones(diff.shape, dtype=bool)
    return diff, mask


def _drift_update(x: np.ndarray, weights: np.ndarray, diff: np.ndarray, counts) -> np.ndarray:
    # Every averaging variant goes through this one expression so reductions agree bit-for-bit.
    return x + (weights * diff).sum(axis=1) / counts


def hk_step(state: OpinionState, spec: NeighborhoodSpec) -> OpinionState:
    """Classical update: each agent moves to the mean of its neighbors' opinions."""
    if not spec.bounded:
        raise ValueError("hk_step needs a finite gamma")
    x = state.opinions
    diff, mask = pairwise(x, spec)
    weights = np.where(mask, 1.0, 0.0)
    return state.advance(_drift_update(x, weights, diff, mask.sum(axis=1)))


def weighted_step(state: OpinionState, spec: NeighborhoodSpec, f: InfluenceFunction) -> OpinionState:
    """Distance-weighted update; the drift is divided by the neighbor count."""
    x = state.opinions
    diff, mask = pairwise(x, spec)
    weights = np.where(mask, f(np.abs(diff)), 0.0)
    return state.advance(_drift_update(x, weights, diff, mask.sum(axis=1)))


def range_stats(state: OpinionState) -> tuple[float, float]:
    x = state.opinions
    return float(x.min()), float(x.max())
