"""Cost-minimizing opinion updates with separate inertial and disharmonic costs.

Each agent picks the minimizer of

    g(|x - x_i|) + sum_{j in N_i, j != i} h(|x - x_j|)

over the hull of its neighbors' opinions. Both costs are convex and strictly
increasing, so the objective is convex and its right derivative is monotone;
the minimizer is located by bisection on the sign of that derivative, which
resolves the argmin to floating-point precision even where the objective
itself is numerically flat.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from hkdyn.dynamics import NeighborhoodSpec, OpinionState, pairwise

DEFAULT_TOL = 1e-12
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class CostFunction:
    """``c(d)`` for ``d >= 0``: ``POWER`` (``d**p``, ``p >= 1``) or a piecewise-linear ``TABLE``."""

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        keys = {"POWER": {"p"}, "TABLE": {"x", "y"}}.get(self.family)
        if keys is not None and set(self.params) != keys:
            raise ValueError(f"{self.family} cost takes parameters {sorted(keys)}, got {sorted(self.params)}")
        if self.family == "POWER":
            if not float(self.params["p"]) >= 1:
                raise ValueError("POWER cost needs p >= 1")
        elif self.family == "TABLE":
            xs, ys = self._knots()
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("TABLE cost needs matching knot lists of length >= 2")
            if xs[0] != 0 or ys[0] != 0:
                raise ValueError("TABLE cost must start at (0, 0)")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("TABLE knots must increase strictly")
            slopes = np.diff(ys) / np.diff(xs)
            if np.any(slopes <= 0):
                raise ValueError("TABLE cost must be strictly increasing")
            if np.any(np.diff(slopes) < 0):
                raise ValueError("TABLE cost must be convex; the argmin is ill-defined otherwise")
        else:
            raise ValueError(f"unknown cost family {self.family!r}")

    @classmethod
    def power(cls, p: float) -> CostFunction:
        return cls("POWER", {"p": float(p)})

    @classmethod
    def table(cls, x, y) -> CostFunction:
        return cls("TABLE", {"x": [float(v) for v in x], "y": [float(v) for v in y]})

    def __hash__(self):
        return hash((self.family, repr(sorted(self.params.items()))))

    def _knots(self):
        return np.asarray(self.params["x"], dtype=float), np.asarray(self.params["y"], dtype=float)

    def _slopes(self):
        xs, ys = self._knots()
        return xs, np.diff(ys) / np.diff(xs)

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self.family == "POWER":
            return d ** float(self.params["p"])
        xs, ys = self._knots()
        slopes = np.diff(ys) / np.diff(xs)
        tail = ys[-1] + slopes[-1] * (d - xs[-1])
        return np.where(d <= xs[-1], np.interp(d, xs, ys), tail)

    def right_slope(self, d):
        """Right derivative at ``d >= 0``."""
        d = np.asarray(d, dtype=float)
        if self.family == "POWER":
            p = float(self.params["p"])
            if p == 1:
                return np.ones_like(d)
            return p * d ** (p - 1)
        xs, slopes = self._slopes()
        idx = np.clip(np.searchsorted(xs, d, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    def left_slope(self, d):
        """Left derivative at ``d > 0``."""
        d = np.asarray(d, dtype=float)
        if self.family == "POWER":
            p = float(self.params["p"])
            if p == 1:
                return np.ones_like(d)
            return p * d ** (p - 1)
        xs, slopes = self._slopes()
        idx = np.clip(np.searchsorted(xs, d, side="left") - 1, 0, slopes.size - 1)
        return slopes[idx]

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, doc: dict) -> CostFunction:
        doc = dict(doc)
        family = doc.pop("family")
        if family == "POWER" and set(doc) == {"p"}:
            return cls.power(doc["p"])
        if family == "TABLE" and set(doc) == {"x", "y"}:
            return cls.table(doc["x"], doc["y"])
        return cls(family, doc)


@dataclass(frozen=True)
class CostProfile:
    g: CostFunction  # inertial
    h: CostFunction  # disharmonic

    @classmethod
    def quadratic(cls) -> CostProfile:
        return cls(CostFunction.power(2), CostFunction.power(2))

    def to_dict(self) -> dict:
        return {"g": self.g.to_dict(), "h": self.h.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> CostProfile:
        return cls(CostFunction.from_dict(doc["g"]), CostFunction.from_dict(doc["h"]))


def _signed_right_slope(c: CostFunction, x, a):
    """Right derivative of ``x -> c(|x - a|)``."""
    x, a = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(a, dtype=float))
    out = np.empty(x.shape)
    above = x > a
    below = x < a
    at = ~(above | below)
    out[above] = c.right_slope(x[above] - a[above])
    out[below] = -c.left_slope(a[below] - x[below])
    out[at] = c.right_slope(np.zeros(int(at.sum())))
    return out


def local_cost(x: float, i: int, state: OpinionState, spec: NeighborhoodSpec, profile: CostProfile) -> float:
    """Cost agent ``i`` would pay for adopting opinion ``x``."""
    op = state.opinions
    diff, mask = pairwise(op, spec)
    others = mask[i].copy()
    others[i] = False
    return float(profile.g(abs(x - op[i])) + np.sum(profile.h(np.abs(x - op[others]))))


def _bisect_argmin(op, mask, agents, profile: CostProfile, tol: float) -> np.ndarray:
    """Vectorized argmin for the rows ``agents`` that share ``profile``."""
    sub = mask[agents]
    own = op[agents]
    others = sub.copy()
    others[np.arange(agents.size), agents] = False
    lo = np.where(sub, op[None, :], np.inf).min(axis=1)
    hi = np.where(sub, op[None, :], -np.inf).max(axis=1)
    for _ in range(MAX_BISECTIONS):
        active = (hi - lo) > tol
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        slope = _signed_right_slope(profile.g, mid, own)
        pulls = _signed_right_slope(profile.h, mid[:, None], op[None, :])
        slope = slope + np.where(others, pulls, 0.0).sum(axis=1)
        go_right = slope < 0
        lo = np.where(active & go_right, mid, lo)
        hi = np.where(active & ~go_right, mid, hi)
    return 0.5 * (lo + hi)


def argmin_update(
    i: int, state: OpinionState, spec: NeighborhoodSpec, profile: CostProfile, tol: float = DEFAULT_TOL
) -> float:
    """New opinion of agent ``i``: minimizer of its local cost within ``tol``."""
    if not 0 <= i < state.n:
        raise IndexError(f"agent index {i} out of range for n={state.n}")
    _, mask = pairwise(state.opinions, spec)
    return float(_bisect_argmin(state.opinions, mask, np.array([i]), profile, tol)[0])


def cost_step(
    state: OpinionState,
    spec: NeighborhoodSpec,
    profiles: CostProfile | Sequence[CostProfile],
    tol: float = DEFAULT_TOL,
) -> OpinionState:
    """Synchronous update: every agent minimizes its local cost against the old state."""
    op = state.opinions
    _, mask = pairwise(op, spec)
    if isinstance(profiles, CostProfile):
        return state.advance(_bisect_argmin(op, mask, np.arange(state.n), profiles, tol))
    if len(profiles) != state.n:
        raise ValueError("need one cost profile per agent")
    out = np.empty(state.n)
    groups: dict[CostProfile, list[int]] = {}
    for i, p in enumerate(profiles):
        groups.setdefault(p, []).append(i)
    for p, idx in groups.items():
        agents = np.array(idx)
        out[agents] = _bisect_argmin(op, mask, agents, p, tol)
    return state.advance(out)
