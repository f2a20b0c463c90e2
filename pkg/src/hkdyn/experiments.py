"""Scenario runners, scaling studies and plot-data export.

A run directory holds ``trajectory.csv`` (``t,agent,opinion``; truthful
agents numbered from 1, the external agent as 0), ``report.json`` and
``manifest.json``. The manifest embeds the full scenario so it can be fed
back as a scenario file to reproduce the run byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from hkdyn import __version__
from hkdyn.campaign import run_campaign
from hkdyn.incentive import greedy_horizon, unconstrained_allocation
from hkdyn.scenario import (
    PRNG_NAME,
    ScalingStudy,
    Scenario,
    canonical_json,
    config_hash,
    derive_seed,
    generate_init,
)
from hkdyn.simulation import ASYMPTOTIC, FIXED_POINT, StopRule, cluster_equilibrium, detect_convergence, simulate

TOOL = "hkdyn"


def fmt(v: float) -> str:
    return f"{float(v):.17g}"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def trajectory_csv(states, placements: Iterable[float | None] | None = None) -> str:
    """``t,agent,opinion`` rows; ``placements[t]`` is logged as agent 0 at step ``t``."""
    placements = list(placements) if placements is not None else []
    buf = io.StringIO()
    buf.write("t,agent,opinion\n")
    for s in states:
        t = s.step
        if t < len(placements) and placements[t] is not None:
            buf.write(f"{t},0,{fmt(placements[t])}\n")
        for i, v in enumerate(s.opinions, start=1):
            buf.write(f"{t},{i},{fmt(v)}\n")
    return buf.getvalue()


def read_trajectory_csv(path) -> tuple[np.ndarray, dict[int, float]]:
    """Return the ``(T + 1) x n`` opinion matrix and the ``{t: x0}`` placements."""
    rows: dict[int, dict[int, float]] = {}
    placements: dict[int, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t, agent, v = int(row["t"]), int(row["agent"]), float(row["opinion"])
            if agent == 0:
                placements[t] = v
            else:
                rows.setdefault(t, {})[agent] = v
    steps = sorted(rows)
    n = max(len(r) for r in rows.values())
    mat = np.array([[rows[t][i] for i in range(1, n + 1)] for t in steps])
    return mat, placements


def _manifest(scenario_doc: dict, seed: int, kind: str, outputs, status="ok", error=None, partial=False) -> dict:
    return {
        "tool": TOOL,
        "version": __version__,
        "prng": PRNG_NAME,
        "seed": seed,
        "kind": kind,
        "config_hash": config_hash(scenario_doc),
        "scenario": scenario_doc,
        "status": status,
        "error": error,
        "partial": partial,
        "outputs": sorted(outputs),
    }


def _simulate_outputs(s: Scenario):
    init = generate_init(s.init, s.n, s.seed)
    traj = simulate(init, s.dynamics, s.stop, seed=s.seed)
    mode = s.stop.mode or FIXED_POINT
    report = detect_convergence(traj, mode, s.stop.tol, s.stop.window)
    eq = cluster_equilibrium(traj.final, s.gamma)
    doc = {
        "status": traj.status,
        "steps": len(traj) - 1,
        "convergence": report.to_dict(),
        "range": [float(traj.final.opinions.min()), float(traj.final.opinions.max())],
        "clusters": len(eq),
        "separated": eq.separated,
    }
    return trajectory_csv(traj.states), doc, None if traj.status != "NOT_CONVERGED" else "NOT_CONVERGED"


def _campaign_outputs(s: Scenario):
    init = generate_init(s.init, s.n, s.seed)
    res = run_campaign(init, s.campaign)
    return trajectory_csv(res.trajectory.states, res.placements), res.to_dict(), None if res.success else "NOT_REACHED"


def _incentive_outputs(s: Scenario):
    init = generate_init(s.init, s.n, s.seed)
    plan = s.incentive
    free = unconstrained_allocation(init, s.gamma, plan.theta)
    res = greedy_horizon(init, s.gamma, plan.theta, plan.rho, plan.T, plan.split)
    doc = {
        "theta": plan.theta,
        "rho": plan.rho,
        "T": plan.T,
        "split": plan.split,
        "aggregate_cost": res.aggregate_cost,
        "spend": res.spend,
        "allocations": [a.to_dict() for a in res.allocations],
        "unconstrained": {"r": free.r.tolist(), "flags": free.flags},
    }
    return trajectory_csv(res.states), doc, None


RUNNERS = {"simulate": _simulate_outputs, "campaign": _campaign_outputs, "incentivize": _incentive_outputs}


def run_scenario(scenario: Scenario, out_dir) -> dict:
    """Execute ``scenario`` into ``out_dir`` and return the manifest.

    Exceptions are recorded in the manifest, then re-raised. Runs that exhaust
    ``max_steps`` keep their outputs but get status ``incomplete``.
    """
    out = Path(out_dir)
    doc = scenario.to_dict()
    try:
        csv_text, report, shortfall = RUNNERS[scenario.kind](scenario)
    except Exception as exc:
        manifest = _manifest(doc, scenario.seed, scenario.kind, [], "error",
                             {"type": type(exc).__name__, "message": str(exc)}, partial=True)
        write_atomic(out / "manifest.json", canonical_json(manifest))
        raise
    write_atomic(out / "trajectory.csv", csv_text)
    write_atomic(out / "report.json", canonical_json(report))
    outputs = ["trajectory.csv", "report.json"]
    if shortfall is None:
        manifest = _manifest(doc, scenario.seed, scenario.kind, outputs)
    else:
        error = {"type": shortfall, "message": "stop rule exhausted max_steps"}
        manifest = _manifest(doc, scenario.seed, scenario.kind, outputs, "incomplete", error, partial=True)
    write_atomic(out / "manifest.json", canonical_json(manifest))
    return manifest


def scaling_study(study: ScalingStudy, out_dir=None) -> dict:
    """Run every ``(n, rep)`` cell; censored runs keep ``steps = None``."""
    runs = []
    for n in study.n_values:
        dyn = study.dynamics_for(n)
        cap = study.cap_factor * n * n
        for rep in range(study.repetitions):
            seed = derive_seed(study.seed, n, rep)
            init = generate_init(study.init, n, seed)
            traj = simulate(init, dyn, StopRule.fixpoint(max_steps=study.steps_for(n)), seed=seed)
            steps = traj.convergence_step
            censored = steps is None
            runs.append({
                "n": n,
                "rep": rep,
                "seed": seed,
                "gamma": dyn.spec.gamma,
                "steps": steps,
                "censored": censored,
                "cap_violation": (censored and study.steps_for(n) > cap) or (not censored and steps > cap),
            })
    summary = []
    for n in study.n_values:
        cells = [r for r in runs if r["n"] == n]
        done = [r["steps"] for r in cells if not r["censored"]]
        summary.append({
            "n": n,
            "median": statistics.median(done) if done else None,
            "max": max(done) if done else None,
            "censored": sum(r["censored"] for r in cells),
            "cap_violations": sum(r["cap_violation"] for r in cells),
        })
    result = {"runs": runs, "summary": summary}
    if out_dir is not None:
        out = Path(out_dir)
        write_atomic(out / "runs.csv", _table(runs, ["n", "rep", "seed", "gamma", "steps", "censored", "cap_violation"]))
        write_atomic(out / "scaling.csv", _table(summary, ["n", "median", "max", "censored", "cap_violations"]))
        write_atomic(out / "report.json", canonical_json(result))
        doc = study.to_dict()
        write_atomic(out / "manifest.json", canonical_json(
            _manifest(doc, study.seed, "scaling", ["runs.csv", "scaling.csv", "report.json"])))
    return result


def _table(rows, cols) -> str:
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        vals = []
        for c in cols:
            v = r[c]
            vals.append("" if v is None else fmt(v) if isinstance(v, float) else str(v))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


# Plot data ------------------------------------------------------------------

TRAJECTORY = "TRAJECTORY"
PLACEMENTS = "PLACEMENTS"
SCALING = "SCALING"


def _svg(path: Path, draw) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = TOOL
    fig, ax = plt.subplots(figsize=(7, 4))
    draw(ax)
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    write_atomic(path, buf.getvalue())


def emit_plot_data(run_dir, kind: str, out_dir=None) -> list[Path]:
    """Write plot-ready CSV plus a static SVG line chart; returns the written paths.

    ``TRAJECTORY``: ``plot_trajectory.csv`` with columns ``t,agent_1..agent_n``.
    ``PLACEMENTS``: the same plus ``plot_placements.csv`` (``t,x0``, one row per placement).
    ``SCALING``: ``plot_scaling.csv`` with ``n,median,max``.
    """
    run = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run
    kind = kind.upper()
    written = []
    if kind in (TRAJECTORY, PLACEMENTS):
        src = run / "trajectory.csv"
        if not src.exists():
            raise FileNotFoundError(src)
        mat, placed = read_trajectory_csv(src)
        cols = ["t"] + [f"agent_{i}" for i in range(1, mat.shape[1] + 1)]
        lines = [",".join(cols)]
        lines += [",".join([str(t)] + [fmt(v) for v in row]) for t, row in enumerate(mat)]
        write_atomic(out / "plot_trajectory.csv", "\n".join(lines) + "\n")
        written.append(out / "plot_trajectory.csv")
        pts = sorted(placed.items())

        def draw(ax):
            ax.plot(np.arange(mat.shape[0]), mat, lw=0.6)
            if kind == PLACEMENTS and pts:
                ax.plot([t for t, _ in pts], [v for _, v in pts], "r*", ms=4, label="external agent")
                ax.legend(loc="best")
            ax.set_xlabel("t")
            ax.set_ylabel("opinion")

        if kind == PLACEMENTS:
            text = "t,x0\n" + "".join(f"{t},{fmt(v)}\n" for t, v in pts)
            write_atomic(out / "plot_placements.csv", text)
            written.append(out / "plot_placements.csv")
        svg = out / f"plot_{kind.lower()}.svg"
        _svg(svg, draw)
        written.append(svg)
    elif kind == SCALING:
        src = run / "scaling.csv"
        if not src.exists():
            raise FileNotFoundError(src)
        with open(src, newline="") as fh:
            rows = list(csv.DictReader(fh))
        text = "n,median,max\n" + "".join(f"{r['n']},{r['median']},{r['max']}\n" for r in rows)
        write_atomic(out / "plot_scaling.csv", text)
        written.append(out / "plot_scaling.csv")
        ns = [int(r["n"]) for r in rows if r["median"]]

        def draw(ax):
            ax.plot(ns, [float(r["median"]) for r in rows if r["median"]], "o-", label="median")
            ax.plot(ns, [float(r["max"]) for r in rows if r["max"]], "s--", label="max")
            ax.set_xlabel("n")
            ax.set_ylabel("convergence steps")
            ax.legend(loc="best")

        _svg(out / "plot_scaling.svg", draw)
        written.append(out / "plot_scaling.svg")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    return written


def load_document(path) -> dict:
    return json.loads(Path(path).read_text())
