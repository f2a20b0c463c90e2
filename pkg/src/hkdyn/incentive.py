"""Budgeted one-step incentive allocation and its repeated greedy horizon.

An incentive ``r_i`` in [0, 1] scales agent ``i``'s quadratic inertial cost
from 1 to ``1 - r_i``. Its next opinion is the exact minimizer

    x_i(2) = (sum_{j in N_i} x_j - r_i x_i) / (|N_i| - r_i)
           = x_i + S_i / (|N_i| - r_i),     S_i = sum_{j in N_i} (x_j - x_i),

and the planner minimizes sum_i (theta - x_i(2))^2 subject to sum_i r_i <= rho.

The objective is separable, so for a fixed multiplier ``lam`` every agent's
best response minimizes a one-dimensional function whose stationarity
condition is a cubic in ``u = 1 / (|N_i| - r_i)``. The solver bisects on
``lam`` to meet the budget, then polishes candidates with projected gradient
steps and a Newton solve of the KKT system on the active set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from hkdyn.dynamics import NeighborhoodSpec, OpinionState, _drift_update, as_state, pairwise

BUDGET_SLACK = 1e-9
PG_COARSE_TOL = 1e-6
REACHABLE = "REACHABLE"
UNREACHABLE = "UNREACHABLE"
EVEN = "EVEN"
FRONT_LOADED = "FRONT_LOADED"


class SolverError(RuntimeError):
    """Solver stopped before the KKT residual reached ``tol``; ``allocation`` holds the best iterate."""

    def __init__(self, message: str, allocation: IncentiveAllocation):
        super().__init__(message)
        self.allocation = allocation


@dataclass(frozen=True)
class IncentiveProblem:
    state: OpinionState
    spec: NeighborhoodSpec
    theta: float
    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("budget rho must be non-negative")
        object.__setattr__(self, "state", as_state(self.state))

    def to_dict(self) -> dict:
        return {
            "opinions": self.state.opinions.tolist(),
            "gamma": self.spec.to_json(),
            "theta": self.theta,
            "rho": self.rho,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> IncentiveProblem:
        return cls(OpinionState(0, doc["opinions"]), NeighborhoodSpec.from_json(doc["gamma"]), float(doc["theta"]), float(doc["rho"]))


@dataclass
class IncentiveAllocation:
    r: np.ndarray
    lam: float
    objective: float
    next_state: OpinionState
    residual: float = 0.0
    flags: list[str] = field(default_factory=list)

    @property
    def spend(self) -> float:
        return float(self.r.sum())

    def to_dict(self) -> dict:
        return {
            "r": self.r.tolist(),
            "lambda": self.lam,
            "objective": self.objective,
            "residual": self.residual,
            "spend": self.spend,
            "flags": self.flags,
            "next_opinions": self.next_state.opinions.tolist(),
        }


def _neighbor_terms(state: OpinionState, spec: NeighborhoodSpec):
    x = state.opinions
    diff, mask = pairwise(x, spec)
    weights = np.where(mask, 1.0, 0.0)
    return x, diff, weights, mask.sum(axis=1)


def post_incentive_update(state: OpinionState, r, spec: NeighborhoodSpec) -> OpinionState:
    """Next opinions after inertial weights drop to ``1 - r``; ``r = 0`` is exactly ``hk_step``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (state.n,):
        raise ValueError("need one incentive per agent")
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("incentives must lie in [0, 1]")
    x, diff, weights, counts = _neighbor_terms(state, spec)
    denom = counts - r
    with np.errstate(invalid="ignore", divide="ignore"):
        nxt = _drift_update(x, weights, diff, denom)
    # Isolated agent with r = 1: the 0/0 limit keeps its opinion.
    return state.advance(np.where(denom == 0, x, nxt))


def objective(next_state: OpinionState, theta: float) -> float:
    return float(np.sum((theta - next_state.opinions) ** 2))


@dataclass
class UnconstrainedAllocation:
    r: np.ndarray
    flags: list[str]

    @property
    def reachable(self) -> np.ndarray:
        return np.array([f == REACHABLE for f in self.flags])


def unconstrained_allocation(state: OpinionState, spec: NeighborhoodSpec, theta: float) -> UnconstrainedAllocation:
    """Per-agent incentive that lands exactly on ``theta``: ``r_i (x_i - theta) = sum_j x_j - |N_i| theta``.

    Targets outside [0, 1] are flagged ``UNREACHABLE`` and clipped to the bound
    that minimizes the agent's own squared miss: 1 when ``theta`` lies beyond the
    neighbor mean, 0 when it lies between ``x_i`` and that mean or on the far side
    of ``x_i`` (more incentive would only push the agent away).
    """
    state = as_state(state)
    x, diff, weights, counts = _neighbor_terms(state, spec)
    sums = np.where(weights > 0, x[None, :], 0.0).sum(axis=1)
    drift = (weights * diff).sum(axis=1)
    r = np.zeros(state.n)
    flags = []
    for i in range(state.n):
        num = sums[i] - counts[i] * theta
        den = x[i] - theta
        if counts[i] == 1 or drift[i] == 0:
            flags.append(REACHABLE if den == 0 else UNREACHABLE)
            continue
        if den == 0:
            flags.append(REACHABLE if num == 0 else UNREACHABLE)
            continue
        with np.errstate(over="ignore"):
            ri = num / den
        if -1e-12 <= ri <= 1 + 1e-12:
            r[i] = min(max(ri, 0.0), 1.0)
            flags.append(REACHABLE)
        else:
            same_side = (drift[i] > 0) == (theta > x[i])
            r[i] = 1.0 if same_side and ri > 1 else 0.0
            flags.append(UNREACHABLE)
    return UnconstrainedAllocation(r, flags)


# Per-agent geometry --------------------------------------------------------


@dataclass(frozen=True)
class _Terms:
    a: np.ndarray  # theta - x_i
    S: np.ndarray  # sum of neighbor differences
    N: np.ndarray  # neighbor counts (float)

    def u(self, r):
        with np.errstate(divide="ignore"):
            return np.where(self.S == 0, 0.0, 1.0 / (self.N - r))

    def phi(self, r):
        return (self.a - self.S * self.u(r)) ** 2

    def grad(self, r):
        u = self.u(r)
        return -2.0 * self.S * u**2 * (self.a - self.S * u)

    def hess(self, r):
        u = self.u(r)
        return -2.0 * self.S * u**3 * (2.0 * self.a - 3.0 * self.S * u)


def _terms(problem: IncentiveProblem) -> _Terms:
    x, diff, weights, counts = _neighbor_terms(problem.state, problem.spec)
    return _Terms(problem.theta - x, (weights * diff).sum(axis=1), counts.astype(float))


def _cubic_roots(c3, c2, c0) -> np.ndarray:
    """Real roots of ``c3 u^3 + c2 u^2 + c0`` row-wise (NaN where missing), via companion eigenvalues."""
    m = c3.size
    comp = np.zeros((m, 3, 3))
    # Companion of u^3 + p u^2 + 0 u + q: first row [-p, 0, -q].
    comp[:, 0, 0] = -(c2 / c3)
    comp[:, 0, 2] = -(c0 / c3)
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    eig = np.linalg.eigvals(comp)
    real = np.where(np.abs(eig.imag) <= 1e-9 * (1 + np.abs(eig.real)), eig.real, np.nan)
    for _ in range(3):  # Newton polish on the original cubic
        f = c3[:, None] * real**3 + c2[:, None] * real**2 + c0[:, None]
        df = 3 * c3[:, None] * real**2 + 2 * c2[:, None] * real
        with np.errstate(invalid="ignore", divide="ignore"):
            step = np.where(df != 0, f / df, 0.0)
        real = real - np.nan_to_num(step, nan=0.0)
    return real


def _best_response(t: _Terms, lam: float) -> np.ndarray:
    """Smallest global minimizer of ``phi_i(r) + lam * r`` over [0, 1], for every agent."""
    n = t.a.size
    cands = [np.zeros(n), np.ones(n)]
    live = (t.S != 0) & (t.N >= 2)
    if live.any() and lam > 0:
        S, a, N = t.S[live], t.a[live], t.N[live]
        roots = _cubic_roots(2 * S**2, -2 * a * S, np.full(S.size, lam))
        for k in range(3):
            u = roots[:, k]
            with np.errstate(invalid="ignore", divide="ignore"):
                rk = N - 1.0 / u
            ok = np.isfinite(rk) & (rk > 0) & (rk < 1)
            full = np.zeros(n)
            full[live] = np.where(ok, rk, 0.0)
            cands.append(full)
    R = np.vstack(cands)
    vals = t.phi(R) + lam * R
    vals[:, ~live] = np.where(R[:, ~live] == 0, 0.0, np.inf)
    best = np.min(vals, axis=0)
    # Ties go to the smallest incentive so the selection is monotone in lam.
    tied = vals <= best + 1e-15 * (1 + np.abs(best))
    return np.min(np.where(tied, R, np.inf), axis=0)


def project_budget_box(v: np.ndarray, rho: float) -> np.ndarray:
    """Euclidean projection onto ``{r in [0, 1]^n : sum r <= rho}``."""
    c = np.clip(v, 0.0, 1.0)
    if c.sum() <= rho:
        return c
    lo, hi = 0.0, float(np.max(v))
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.clip(v - tau, 0.0, 1.0).sum() > rho:
            lo = tau
        else:
            hi = tau
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return np.clip(v - hi, 0.0, 1.0)


def _kkt(t: _Terms, r: np.ndarray, rho: float, bound_tol: float = 1e-12) -> tuple[float, float]:
    """Multiplier estimate and projected-stationarity residual at ``r``."""
    g = t.grad(r)
    at_lo = r <= bound_tol
    at_hi = r >= 1 - bound_tol
    inner = ~(at_lo | at_hi)
    active = r.sum() >= rho - 1e-12
    lam = 0.0
    if active:
        if inner.any():
            lam = max(0.0, float(np.mean(-g[inner])))
        else:
            lower = max([0.0] + list(-g[at_lo]))
            upper = min(list(-g[at_hi]) or [np.inf])
            lam = lower if lower <= upper else 0.5 * (lower + upper)
    dl = g + lam
    res = np.where(inner, np.abs(dl), np.where(at_lo, np.maximum(0.0, -dl), np.maximum(0.0, dl)))
    slack = abs(lam * (r.sum() - rho))
    return lam, float(max(res.max(initial=0.0), slack))


def _projected_gradient(t: _Terms, r: np.ndarray, rho: float, tol: float, max_iter: int) -> np.ndarray:
    alpha = 1.0
    F = float(t.phi(r).sum())
    for _ in range(max_iter):
        g = t.grad(r)
        if np.max(np.abs(r - project_budget_box(r - g, rho)), initial=0.0) <= tol:
            break
        while True:
            trial = project_budget_box(r - alpha * g, rho)
            Ft = float(t.phi(trial).sum())
            if Ft <= F + 1e-4 * float(g @ (trial - r)) or alpha < 1e-14:
                break
            alpha *= 0.5
        if np.array_equal(trial, r):
            break
        r, F = trial, Ft
        alpha = min(1.0, alpha * 2.0)
    return r


def _newton_refine(t: _Terms, r: np.ndarray, rho: float, iters: int = 50) -> np.ndarray:
    """Solve the KKT system on the current active set; returns ``r`` unchanged if it fails."""
    best = r
    _, best_res = _kkt(t, r, rho)
    inner = (r > 1e-12) & (r < 1 - 1e-12)
    if not inner.any():
        return r
    idx = np.flatnonzero(inner)
    active = r.sum() >= rho - 1e-12
    cur = r.copy()
    lam = _kkt(t, r, rho)[0]
    for _ in range(iters):
        g = t.grad(cur)[idx]
        h = t.hess(cur)[idx]
        k = idx.size
        if active:
            J = np.zeros((k + 1, k + 1))
            J[np.arange(k), np.arange(k)] = h
            J[:k, k] = 1.0
            J[k, :k] = 1.0
            F = np.concatenate([g + lam, [cur.sum() - rho]])
        else:
            J = np.diag(h)
            F = g
        try:
            delta = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        nxt = cur.copy()
        nxt[idx] = cur[idx] + delta[:k]
        if np.any(nxt[idx] <= 0) or np.any(nxt[idx] >= 1):
            break
        cur = nxt
        if active:
            lam = lam + delta[k]
        if np.max(np.abs(delta)) <= 1e-16:
            break
    if np.all(cur >= 0) and np.all(cur <= 1) and cur.sum() <= rho + BUDGET_SLACK:
        _, res = _kkt(t, cur, rho)
        if res < best_res and float(t.phi(cur).sum()) <= float(t.phi(r).sum()) + 1e-12:
            best = cur
    return best


def _allocation(problem: IncentiveProblem, r: np.ndarray, t: _Terms) -> IncentiveAllocation:
    lam, res = _kkt(t, r, problem.rho)
    nxt = post_incentive_update(problem.state, r, problem.spec)
    return IncentiveAllocation(r, lam, objective(nxt, problem.theta), nxt, res)


def solve_one_step(problem: IncentiveProblem, tol: float = 1e-8, max_iter: int = 10_000) -> IncentiveAllocation:
    """Minimize next-step squared distance to ``theta`` under the incentive budget.

    Raises ``SolverError`` (carrying the best iterate) when no candidate reaches
    a KKT residual of ``tol``.
    """
    t = _terms(problem)
    n = problem.state.n
    rho = problem.rho

    free = unconstrained_allocation(problem.state, problem.spec, problem.theta).r
    if free.sum() <= rho:
        return _allocation(problem, free, t)

    def spend(lam):
        return float(_best_response(t, lam).sum())

    u_max = np.where(t.N >= 2, 1.0 / np.maximum(t.N - 1, 1), 1.0)
    hi = float(np.max(2 * np.abs(t.S) * u_max**2 * (np.abs(t.a) + np.abs(t.S) * u_max))) + 1.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(mid) > rho:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    r_hi = _best_response(t, hi)
    r_lo = _best_response(t, lo)

    starts = [r_hi, project_budget_box(r_lo, rho), np.zeros(n), project_budget_box(free, rho)]
    leftover = rho - r_hi.sum()
    if leftover > BUDGET_SLACK:
        # Best responses jump at the critical multiplier; let one jumping agent absorb the leftover budget.
        for j in np.flatnonzero(np.abs(r_lo - r_hi) > 1e-9):
            s = r_hi.copy()
            s[j] = min(1.0, s[j] + leftover)
            starts.append(s)

    best = None
    fallback = None
    for s in starts:
        # A loose gradient phase finds the active set; Newton then polishes the KKT system.
        r = _newton_refine(t, _projected_gradient(t, s.copy(), rho, PG_COARSE_TOL, max_iter), rho)
        cand = _allocation(problem, r, t)
        if cand.residual > tol:
            r = _newton_refine(t, _projected_gradient(t, r, rho, tol * 1e-2, max_iter), rho)
            cand = _allocation(problem, r, t)
        if fallback is None or (cand.residual, cand.objective) < (fallback.residual, fallback.objective):
            fallback = cand
        if cand.residual <= tol and (best is None or cand.objective < best.objective - 1e-15):
            best = cand
    if best is None:
        raise SolverError(f"KKT residual {fallback.residual:.3e} above tol {tol:.1e}", fallback)
    return best


def brute_force_oracle(problem: IncentiveProblem, grid_step: float = 0.005) -> IncentiveAllocation:
    """Exhaustive grid search over the budget-feasible box, then halving pattern search to 1e-6."""
    n = problem.state.n
    if n > 3:
        raise ValueError("brute_force_oracle is limited to n <= 3")
    x = problem.state.opinions
    diff, mask = pairwise(x, problem.spec)
    nbr_sum = np.where(mask, x[None, :], 0.0).sum(axis=1)
    counts = mask.sum(axis=1).astype(float)
    theta, rho = problem.theta, problem.rho

    def next_op(i, r):
        r = np.asarray(r, dtype=float)
        if counts[i] == 1:
            return np.full(r.shape, x[i])
        return (nbr_sum[i] - r * x[i]) / (counts[i] - r)

    def total(r) -> float:
        return float(sum((theta - next_op(i, r[i])) ** 2 for i in range(n)))

    grid = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    grid[-1] = min(grid[-1], 1.0)
    per = [(theta - next_op(i, grid)) ** 2 for i in range(n)]
    vals = np.zeros((grid.size,) * n)
    spent = np.zeros((grid.size,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = grid.size
        vals = vals + per[i].reshape(shape)
        spent = spent + grid.reshape(shape)
    vals = np.where(spent <= rho + 1e-12, vals, np.inf)
    idx = np.unravel_index(int(np.argmin(vals)), vals.shape)
    r = grid[list(idx)].astype(float)
    best = total(r)

    moves = []
    for i in range(n):
        for sgn in (1, -1):
            e = np.zeros(n)
            e[i] = sgn
            moves.append(e)
    for i, j in itertools.permutations(range(n), 2):
        e = np.zeros(n)
        e[i], e[j] = 1, -1
        moves.append(e)

    step = grid_step / 2
    while step >= 1e-6:
        improved = True
        while improved:
            improved = False
            for e in moves:
                cand = np.clip(r + step * e, 0.0, 1.0)
                if cand.sum() > rho + 1e-12:
                    continue
                v = total(cand)
                if v < best - 1e-15:
                    r, best, improved = cand, v, True
        step /= 2

    t = _terms(problem)
    lam, res = _kkt(t, r, rho)
    nxt = post_incentive_update(problem.state, r, problem.spec)
    return IncentiveAllocation(r, lam, objective(nxt, theta), nxt, res)


@dataclass
class HorizonResult:
    allocations: list[IncentiveAllocation]
    states: list[OpinionState]
    aggregate_cost: float
    spend: list[float]


def greedy_horizon(
    init,
    spec: NeighborhoodSpec,
    theta: float,
    rho_total: float,
    T: int,
    split: str = EVEN,
    tol: float = 1e-8,
) -> HorizonResult:
    """Repeat the one-step allocation ``T`` times; cost sums squared target distance over steps 1..T."""
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    if split not in (EVEN, FRONT_LOADED):
        raise ValueError(f"unknown budget split {split!r}")
    state = as_state(init)
    remaining = float(rho_total)
    allocations, states, spend = [], [state], []
    cost = 0.0
    for _ in range(T):
        budget = rho_total / T if split == EVEN else remaining
        budget = max(0.0, min(budget, remaining))
        alloc = solve_one_step(IncentiveProblem(state, spec, theta, budget), tol)
        allocations.append(alloc)
        spend.append(alloc.spend)
        remaining = max(0.0, remaining - alloc.spend)
        state = alloc.next_state
        states.append(state)
        cost += alloc.objective
    return HorizonResult(allocations, states, cost, spend)
