"""Command-line front end.

    hkdyn simulate    --scenario FILE --out DIR [--seed U64]
    hkdyn campaign    --scenario FILE --out DIR [--seed U64]
    hkdyn incentivize --scenario FILE --out DIR [--seed U64]
    hkdyn scaling     --scenario FILE --out DIR [--seed U64]
    hkdyn plot        --run DIR --kind {trajectory,placements,scaling} [--out DIR]

A run manifest is accepted wherever a scenario file is. Exit status is 0 on
success, 1 on errors and 2 when a run exhausted ``max_steps``; the manifest
carries the machine-readable reason either way.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from hkdyn.experiments import TOOL, _manifest, canonical_json, emit_plot_data, run_scenario, scaling_study, write_atomic
from hkdyn.scenario import ScalingStudy, Scenario

log = logging.getLogger(TOOL)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "campaign", "incentivize", "scaling"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")
    p = sub.add_parser("plot")
    p.add_argument("--run", required=True, type=Path)
    p.add_argument("--kind", required=True, choices=["trajectory", "placements", "scaling"])
    p.add_argument("--out", type=Path, default=None)
    return parser


def _fail(out: Path, kind: str, exc: Exception, doc=None) -> int:
    manifest = _manifest(doc or {}, None, kind, [], "error", {"type": type(exc).__name__, "message": str(exc)}, True)
    write_atomic(out / "manifest.json", canonical_json(manifest))
    log.error("%s: %s", type(exc).__name__, exc)
    return 1


def _run(args) -> int:
    try:
        doc = json.loads(args.scenario.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(args.out, args.command, exc)

    if args.command == "scaling":
        try:
            study = ScalingStudy.from_dict(doc)
            if args.seed is not None:
                study = dataclasses.replace(study, seed=args.seed)
            result = scaling_study(study, args.out)
        except Exception as exc:  # noqa: BLE001 - reported through the manifest
            return _fail(args.out, "scaling", exc, doc)
        log.info("scaling summary: %s", result["summary"])
        return 0

    try:
        scenario = Scenario.from_dict(doc)
        if scenario.kind != args.command:
            raise ValueError(f"scenario kind {scenario.kind!r} does not match command {args.command!r}")
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
    except Exception as exc:  # noqa: BLE001
        return _fail(args.out, args.command, exc, doc)
    try:
        manifest = run_scenario(scenario, args.out)
    except Exception as exc:  # noqa: BLE001 - run_scenario already wrote the manifest
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0 if manifest["status"] == "ok" else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "plot":
        try:
            for path in emit_plot_data(args.run, args.kind, args.out):
                print(path)
        except (FileNotFoundError, ValueError) as exc:
            log.error("%s", exc)
            return 1
        return 0
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
