"""Trajectory simulation, convergence detection and equilibrium analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hkdyn.cost import CostProfile, cost_step
from hkdyn.dynamics import NeighborhoodSpec, OpinionState, as_state, hk_step, weighted_step
from hkdyn.influence import InfluenceFunction

FIXPOINT_TOL = 1e-12
ASYMPTOTIC_TOL = 1e-9
ASYMPTOTIC_WINDOW = 10

FIXED_POINT = "FIXED_POINT"
ASYMPTOTIC = "ASYMPTOTIC"


@dataclass(frozen=True)
class Dynamics:
    """Which step operation to apply: ``HK``, ``WEIGHTED`` (needs ``influence``) or ``COST`` (needs ``profile``)."""

    kind: str
    spec: NeighborhoodSpec
    influence: InfluenceFunction | None = None
    profile: CostProfile | None = None
    tol: float = 1e-12  # argmin tolerance for COST

    def __post_init__(self):
        if self.kind not in ("HK", "WEIGHTED", "COST"):
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == "WEIGHTED" and self.influence is None:
            raise ValueError("WEIGHTED dynamics need an influence function")
        if self.kind == "COST" and self.profile is None:
            raise ValueError("COST dynamics need a cost profile")
        if self.kind == "HK" and not self.spec.bounded:
            raise ValueError("HK dynamics need a finite gamma")

    @classmethod
    def hk(cls, gamma: float) -> Dynamics:
        return cls("HK", NeighborhoodSpec(gamma))

    @classmethod
    def weighted(cls, spec: NeighborhoodSpec | float, f: InfluenceFunction) -> Dynamics:
        if not isinstance(spec, NeighborhoodSpec):
            spec = NeighborhoodSpec(spec)
        return cls("WEIGHTED", spec, influence=f)

    @classmethod
    def cost(cls, spec: NeighborhoodSpec | float, profile: CostProfile, tol: float = 1e-12) -> Dynamics:
        if not isinstance(spec, NeighborhoodSpec):
            spec = NeighborhoodSpec(spec)
        return cls("COST", spec, profile=profile, tol=tol)

    def step(self, state: OpinionState) -> OpinionState:
        if self.kind == "HK":
            return hk_step(state, self.spec)
        if self.kind == "WEIGHTED":
            return weighted_step(state, self.spec, self.influence)
        return cost_step(state, self.spec, self.profile, self.tol)

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "gamma": self.spec.to_json()}
        if self.influence is not None:
            doc["influence"] = self.influence.to_dict()
        if self.profile is not None:
            doc["profile"] = self.profile.to_dict()
            doc["tol"] = self.tol
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> Dynamics:
        spec = NeighborhoodSpec.from_json(doc["gamma"])
        influence = InfluenceFunction.from_dict(doc["influence"]) if "influence" in doc else None
        profile = CostProfile.from_dict(doc["profile"]) if "profile" in doc else None
        return cls(doc["kind"], spec, influence, profile, float(doc.get("tol", 1e-12)))


@dataclass(frozen=True)
class StopRule:
    """``mode`` is ``None`` (run exactly ``max_steps``), ``FIXED_POINT`` or ``ASYMPTOTIC``."""

    max_steps: int = 10_000
    mode: str | None = FIXED_POINT
    tol: float = FIXPOINT_TOL
    window: int = ASYMPTOTIC_WINDOW

    def __post_init__(self):
        if self.mode not in (None, FIXED_POINT, ASYMPTOTIC):
            raise ValueError(f"unknown stop mode {self.mode!r}")
        if self.max_steps < 0 or self.window < 1 or self.tol < 0:
            raise ValueError("invalid stop rule")

    @classmethod
    def fixpoint(cls, tol: float = FIXPOINT_TOL, max_steps: int = 10_000) -> StopRule:
        return cls(max_steps, FIXED_POINT, tol)

    @classmethod
    def asymptotic(cls, tol: float = ASYMPTOTIC_TOL, window: int = ASYMPTOTIC_WINDOW, max_steps: int = 10_000) -> StopRule:
        return cls(max_steps, ASYMPTOTIC, tol, window)

    @classmethod
    def steps(cls, max_steps: int) -> StopRule:
        return cls(max_steps, None)

    def to_dict(self) -> dict:
        return {"max_steps": self.max_steps, "mode": self.mode, "tol": self.tol, "window": self.window}

    @classmethod
    def from_dict(cls, doc: dict) -> StopRule:
        return cls(int(doc["max_steps"]), doc.get("mode"), float(doc.get("tol", FIXPOINT_TOL)), int(doc.get("window", ASYMPTOTIC_WINDOW)))


@dataclass
class Trajectory:
    """States ``x(0), ..., x(T)``; ``status`` is ``CONVERGED``, ``NOT_CONVERGED`` or ``COMPLETED``."""

    states: list[OpinionState]
    config: Dynamics | None = None
    seed: int | None = None
    status: str = "COMPLETED"
    convergence_step: int | None = None

    @property
    def converged(self) -> bool:
        return self.status == "CONVERGED"

    @property
    def final(self) -> OpinionState:
        return self.states[-1]

    def matrix(self) -> np.ndarray:
        """``(T + 1) x n`` array of opinions."""
        return np.vstack([s.opinions for s in self.states])

    def __len__(self):
        return len(self.states)


def max_displacement(a: OpinionState, b: OpinionState) -> float:
    return float(np.max(np.abs(b.opinions - a.opinions)))


def simulate(init, config: Dynamics, stop: StopRule = StopRule(), seed: int | None = None) -> Trajectory:
    """Apply ``config.step`` until ``stop`` fires.

    A fixpoint at step ``t`` ends the trajectory at ``x(t)``; the confirming
    step is not stored. An asymptotic stop keeps the ``window`` confirming
    steps. Hitting ``max_steps`` first gives status ``NOT_CONVERGED``.
    """
    state = as_state(init)
    states = [state]
    quiet = 0
    for t in range(stop.max_steps):
        nxt = config.step(state)
        d = max_displacement(state, nxt)
        if stop.mode == FIXED_POINT and d <= stop.tol:
            return Trajectory(states, config, seed, "CONVERGED", t)
        states.append(nxt)
        state = nxt
        if stop.mode == ASYMPTOTIC:
            quiet = quiet + 1 if d < stop.tol else 0
            if quiet >= stop.window:
                return Trajectory(states, config, seed, "CONVERGED", t + 1 - stop.window)
    if stop.mode is None:
        return Trajectory(states, config, seed, "COMPLETED", None)
    return Trajectory(states, config, seed, "NOT_CONVERGED", None)


@dataclass
class Cluster:
    representative: float
    members: list[int]

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class Equilibrium:
    clusters: list[Cluster]
    separated: bool  # every gap between neighboring representatives exceeds gamma

    def __len__(self):
        return len(self.clusters)

    @property
    def representatives(self) -> list[float]:
        return [c.representative for c in self.clusters]


@dataclass
class ConvergenceReport:
    converged: bool
    mode: str
    convergence_step: int | None
    final_clusters: list[Cluster] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "mode": self.mode,
            "convergence_step": self.convergence_step,
            "final_clusters": [
                {"representative": c.representative, "members": c.members} for c in self.final_clusters
            ],
        }


def cluster_equilibrium(state: OpinionState, spec: NeighborhoodSpec, merge_tol: float = 1e-6) -> Equilibrium:
    """Group agents whose sorted opinions are chained by gaps ``<= merge_tol``."""
    x = state.opinions
    order = np.argsort(x, kind="stable")
    xs = x[order]
    breaks = np.flatnonzero(np.diff(xs) > merge_tol) + 1
    clusters = [
        Cluster(float(np.mean(xs[chunk[0] : chunk[-1] + 1])), sorted(int(i) for i in order[chunk]))
        for chunk in np.split(np.arange(x.size), breaks)
    ]
    reps = np.array([c.representative for c in clusters])
    if spec.bounded:
        separated = bool(np.all(np.diff(reps) > spec.gamma))
    else:
        separated = len(clusters) == 1
    return Equilibrium(clusters, separated)


def detect_convergence(
    traj: Trajectory,
    mode: str = FIXED_POINT,
    tol: float | None = None,
    window: int = ASYMPTOTIC_WINDOW,
    merge_tol: float = 1e-6,
) -> ConvergenceReport:
    """Scan a recorded trajectory for the first convergence step.

    ``FIXED_POINT``: first ``t`` with ``max_i |x_i(t+1) - x_i(t)| <= tol``. If
    no recorded pair qualifies and the trajectory knows its dynamics, one more
    step is applied to the final state to test it.
    ``ASYMPTOTIC``: first ``t`` whose next ``window`` displacements all stay
    below ``tol``.
    """
    if not traj.states:
        raise ValueError("empty trajectory")
    if tol is None:
        tol = FIXPOINT_TOL if mode == FIXED_POINT else ASYMPTOTIC_TOL
    disp = [max_displacement(a, b) for a, b in zip(traj.states, traj.states[1:])]
    step = None
    if mode == FIXED_POINT:
        hits = [t for t, d in enumerate(disp) if d <= tol]
        if hits:
            step = hits[0]
        elif traj.config is not None:
            if max_displacement(traj.final, traj.config.step(traj.final)) <= tol:
                step = len(traj.states) - 1
    elif mode == ASYMPTOTIC:
        run = 0
        for t, d in enumerate(disp):
            run = run + 1 if d < tol else 0
            if run >= window:
                step = t + 1 - window
                break
    else:
        raise ValueError(f"unknown mode {mode!r}")
    clusters = []
    if step is not None:
        spec = traj.config.spec if traj.config is not None else NeighborhoodSpec.unbounded()
        clusters = cluster_equilibrium(traj.final, spec, merge_tol).clusters
    return ConvergenceReport(step is not None, mode, step, clusters)


def is_order_preserved(traj: Trajectory, slack: float = 1e-12) -> bool:
    """True iff the stable sort order of ``x(0)`` sorts every later state (within ``slack``)."""
    order = np.argsort(traj.states[0].opinions, kind="stable")
    for s in traj.states[1:]:
        if np.any(np.diff(s.opinions[order]) < -slack):
            return False
    return True
