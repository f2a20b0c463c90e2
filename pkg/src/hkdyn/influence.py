"""Influence (weight) functions for distance-weighted bounded-confidence updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

FAMILIES = ("CONSTANT_ONE", "EXP_SQ", "EXP_ABS", "EXP_SQRT", "PLATEAU_LINEAR", "TABLE")

PARAM_KEYS = {"PLATEAU_LINEAR": {"epsilon", "f_gamma", "gamma"}, "TABLE": {"x", "y"}}

GRID_POINTS = 1001
_SLACK = 1e-12


@dataclass(frozen=True)
class InfluenceFunction:
    """Weight ``f(d)`` applied to an opinion difference ``d >= 0``.

    ``params`` carries the family parameters:

    * ``PLATEAU_LINEAR``: ``epsilon``, ``f_gamma`` and ``gamma``. The weight is
      1 on ``[0, epsilon]`` and falls linearly to ``f_gamma`` at ``gamma``;
      past ``gamma`` the line continues, clipped at 0.
    * ``TABLE``: ``x`` and ``y`` knot lists, linearly interpolated and held
      constant past the last knot.
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown influence family {self.family!r}")
        if set(self.params) != PARAM_KEYS.get(self.family, set()):
            raise ValueError(f"{self.family} takes parameters {sorted(PARAM_KEYS.get(self.family, ()))}, got {sorted(self.params)}")
        if self.family == "PLATEAU_LINEAR":
            eps = float(self.params["epsilon"])
            gamma = float(self.params["gamma"])
            f_gamma = float(self.params["f_gamma"])
            if not 0 < eps < gamma:
                raise ValueError("PLATEAU_LINEAR needs 0 < epsilon < gamma")
            if not 0 < f_gamma <= 1:
                raise ValueError("PLATEAU_LINEAR needs f(gamma) in (0, 1]")
        if self.family == "TABLE":
            xs = np.asarray(self.params["x"], dtype=float)
            ys = np.asarray(self.params["y"], dtype=float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("TABLE needs matching x/y knot lists of length >= 2")
            if xs[0] != 0 or np.any(np.diff(xs) <= 0):
                raise ValueError("TABLE knots must start at 0 and increase strictly")
            if ys[0] != 1 or np.any(np.diff(ys) > 0) or ys.min() < 0:
                raise ValueError("TABLE values must start at 1, stay in [0, 1] and not increase")

    # Constructors -----------------------------------------------------------

    @classmethod
    def constant_one(cls) -> InfluenceFunction:
        return cls("CONSTANT_ONE")

    @classmethod
    def exp_sq(cls) -> InfluenceFunction:
        return cls("EXP_SQ")

    @classmethod
    def exp_abs(cls) -> InfluenceFunction:
        return cls("EXP_ABS")

    @classmethod
    def exp_sqrt(cls) -> InfluenceFunction:
        return cls("EXP_SQRT")

    @classmethod
    def plateau_linear(cls, epsilon: float, f_gamma: float, gamma: float) -> InfluenceFunction:
        return cls("PLATEAU_LINEAR", {"epsilon": epsilon, "f_gamma": f_gamma, "gamma": gamma})

    @classmethod
    def table(cls, x, y) -> InfluenceFunction:
        return cls("TABLE", {"x": [float(v) for v in x], "y": [float(v) for v in y]})

    # Evaluation -------------------------------------------------------------

    def __call__(self, d):
        d = np.abs(np.asarray(d, dtype=float))
        fam = self.family
        if fam == "CONSTANT_ONE":
            return np.ones_like(d)
        if fam == "EXP_SQ":
            return np.exp(-(d**2))
        if fam == "EXP_ABS":
            return np.exp(-d)
        if fam == "EXP_SQRT":
            return np.exp(-np.sqrt(d))
        if fam == "PLATEAU_LINEAR":
            eps = float(self.params["epsilon"])
            gamma = float(self.params["gamma"])
            slope = (1.0 - float(self.params["f_gamma"])) / (gamma - eps)
            return np.where(d <= eps, 1.0, np.clip(1.0 - slope * (d - eps), 0.0, 1.0))
        xs = np.asarray(self.params["x"], dtype=float)
        ys = np.asarray(self.params["y"], dtype=float)
        return np.interp(d, xs, ys)

    def to_dict(self) -> dict:
        return {"family": self.family, **{k: v for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> InfluenceFunction:
        doc = dict(doc)
        family = doc.pop("family")
        return cls(family, doc)

    def __hash__(self):
        return hash((self.family, repr(sorted(self.params.items()))))


def validate_influence(f: InfluenceFunction, gamma: float, points: int = GRID_POINTS) -> None:
    """Raise ``ValueError`` unless f(0)=1, f is non-increasing and lies in [0, 1] on [0, gamma]."""
    grid = np.linspace(0.0, gamma, points)
    vals = f(grid)
    if abs(vals[0] - 1.0) > _SLACK:
        raise ValueError("influence function must satisfy f(0) = 1")
    if np.any(np.diff(vals) > _SLACK):
        raise ValueError("influence function must be non-increasing")
    if vals.min() < -_SLACK or vals.max() > 1 + _SLACK:
        raise ValueError("influence function must take values in [0, 1]")


@dataclass(frozen=True)
class AssumptionReport:
    plateau: bool
    positive_at_gamma: bool
    xf_nondecreasing: bool
    worst_violation: float

    @property
    def all_hold(self) -> bool:
        return self.plateau and self.positive_at_gamma and self.xf_nondecreasing

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.plateau, self.positive_at_gamma, self.xf_nondecreasing)


def check_influence_assumptions(
    f: InfluenceFunction, gamma: float, epsilon: float, points: int = GRID_POINTS
) -> AssumptionReport:
    """Grid-check the three finite-time convergence conditions on ``[0, gamma]``.

    (i) ``f == 1`` on ``[0, epsilon]``; (ii) ``f(gamma) > 0``; (iii) ``x f(x)``
    non-decreasing. ``worst_violation`` is the largest amount by which any of
    the three fails (0 when all hold).
    """
    if not (math.isfinite(gamma) and 0 < epsilon < gamma):
        raise ValueError("need 0 < epsilon < gamma < inf")
    if points < 1000:
        raise ValueError("use at least 1000 grid points")
    grid = np.union1d(np.linspace(0.0, gamma, points), [epsilon])
    vals = f(grid)

    plateau_dev = float(np.max(np.abs(vals[grid <= epsilon] - 1.0)))
    f_gamma = float(f(gamma))
    xf_drop = float(max(0.0, -np.min(np.diff(grid * vals))))

    worst = max(
        plateau_dev if plateau_dev > _SLACK else 0.0,
        -f_gamma if f_gamma <= 0 else 0.0,
        xf_drop if xf_drop > _SLACK else 0.0,
    )
    return AssumptionReport(
        plateau=plateau_dev <= _SLACK,
        positive_at_gamma=f_gamma > 0,
        xf_nondecreasing=xf_drop <= _SLACK,
        worst_violation=worst,
    )
