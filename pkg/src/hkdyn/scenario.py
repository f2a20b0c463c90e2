"""Scenario documents: initial-condition generators, run configuration and canonical JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from hkdyn.campaign import CampaignSpec
from hkdyn.dynamics import NeighborhoodSpec, OpinionState
from hkdyn.incentive import EVEN
from hkdyn.simulation import Dynamics, StopRule

PRNG_NAME = "numpy.random.PCG64"
KINDS = ("simulate", "campaign", "incentivize")
INIT_KINDS = ("UNIFORM_RANDOM", "EQUALLY_SPACED", "TWO_CLUSTER", "EXPLICIT")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(study_seed: int, n: int, rep: int) -> int:
    """Per-cell seed: first 64-bit word of ``SeedSequence([study_seed, n, rep])``."""
    ss = np.random.SeedSequence([int(study_seed), int(n), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class InitSpec:
    """``UNIFORM_RANDOM(lo, hi)``, ``EQUALLY_SPACED(lo, hi)``, ``TWO_CLUSTER(c1, c2, width)`` or ``EXPLICIT(values)``."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    c1: float = 0.25
    c2: float = 0.75
    width: float = 0.1
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown generator {self.kind!r}")
        nums = [self.lo, self.hi, self.c1, self.c2, self.width, *self.values]
        if not all(np.isfinite(nums)):
            raise ValueError("generator bounds must be finite")
        if self.kind in ("UNIFORM_RANDOM", "EQUALLY_SPACED") and self.hi < self.lo:
            raise ValueError("generator needs lo <= hi")
        if self.kind == "TWO_CLUSTER" and self.width < 0:
            raise ValueError("cluster width must be non-negative")
        if self.kind == "EXPLICIT" and not self.values:
            raise ValueError("EXPLICIT generator needs values")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def to_dict(self) -> dict:
        if self.kind == "EXPLICIT":
            return {"kind": self.kind, "values": list(self.values)}
        if self.kind == "TWO_CLUSTER":
            return {"kind": self.kind, "c1": self.c1, "c2": self.c2, "width": self.width}
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, doc: dict) -> InitSpec:
        doc = dict(doc)
        kind = doc.pop("kind")
        if "values" in doc:
            doc["values"] = tuple(doc["values"])
        return cls(kind, **{k: (v if k == "values" else float(v)) for k, v in doc.items()})


def generate_init(spec: InitSpec, n: int, seed: int = 0) -> OpinionState:
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind == "EXPLICIT":
        if len(spec.values) != n:
            raise ValueError(f"EXPLICIT generator has {len(spec.values)} values, scenario says n={n}")
        return OpinionState(0, np.array(spec.values))
    if spec.kind == "EQUALLY_SPACED":
        if n == 1:
            return OpinionState(0, [spec.lo])
        i = np.arange(n)
        return OpinionState(0, spec.lo + i * (spec.hi - spec.lo) / (n - 1))
    rng = make_rng(seed)
    if spec.kind == "UNIFORM_RANDOM":
        return OpinionState(0, rng.uniform(spec.lo, spec.hi, n))
    first = (n + 1) // 2
    half = spec.width / 2
    a = rng.uniform(spec.c1 - half, spec.c1 + half, first)
    b = rng.uniform(spec.c2 - half, spec.c2 + half, n - first)
    return OpinionState(0, np.concatenate([a, b]))


@dataclass(frozen=True)
class IncentivePlan:
    theta: float
    rho: float
    T: int = 1
    split: str = EVEN

    def to_dict(self) -> dict:
        return {"theta": self.theta, "rho": self.rho, "T": self.T, "split": self.split}

    @classmethod
    def from_dict(cls, doc: dict) -> IncentivePlan:
        return cls(float(doc["theta"]), float(doc["rho"]), int(doc.get("T", 1)), doc.get("split", EVEN))


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    n: int
    init: InitSpec
    dynamics: Dynamics
    stop: StopRule = StopRule()
    seed: int = 0
    campaign: CampaignSpec | None = None
    incentive: IncentivePlan | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.kind == "campaign" and self.campaign is None:
            raise ValueError("campaign scenarios need a campaign section")
        if self.kind == "incentivize" and self.incentive is None:
            raise ValueError("incentivize scenarios need an incentive section")

    @property
    def gamma(self) -> NeighborhoodSpec:
        return self.dynamics.spec

    def to_dict(self) -> dict:
        dyn = self.dynamics.to_dict()
        doc: dict[str, Any] = {
            "name": self.name,
            "kind": self.kind,
            "n": self.n,
            "init": self.init.to_dict(),
            "gamma": dyn.pop("gamma"),
            "dynamics": dyn,
            "stop": self.stop.to_dict(),
            "seed": self.seed,
        }
        if self.campaign is not None:
            camp = self.campaign.to_dict()
            camp.pop("gamma")
            doc["campaign"] = camp
        if self.incentive is not None:
            doc["incentive"] = self.incentive.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> Scenario:
        if "scenario" in doc and "tool" in doc:  # a run manifest
            doc = doc["scenario"]
        dynamics = Dynamics.from_dict({**doc.get("dynamics", {"kind": "HK"}), "gamma": doc["gamma"]})
        campaign = None
        if doc.get("campaign") is not None:
            campaign = CampaignSpec.from_dict({**doc["campaign"], "gamma": doc["gamma"]})
        incentive = IncentivePlan.from_dict(doc["incentive"]) if doc.get("incentive") is not None else None
        return cls(
            name=doc.get("name", "scenario"),
            kind=doc.get("kind", "simulate"),
            n=int(doc["n"]),
            init=InitSpec.from_dict(doc["init"]),
            dynamics=dynamics,
            stop=StopRule.from_dict(doc["stop"]) if "stop" in doc else StopRule(),
            seed=int(doc.get("seed", 0)),
            campaign=campaign,
            incentive=incentive,
        )


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def dumps(s: Scenario) -> str:
    return canonical_json(s.to_dict())


def loads(text: str) -> Scenario:
    return Scenario.from_dict(json.loads(text))


def load(path) -> Scenario:
    return loads(Path(path).read_text())


@dataclass(frozen=True)
class ScalingStudy:
    """Convergence steps vs ``n``. ``spacing_ratio`` sets ``gamma = spacing / ratio`` per ``n``
    for equally spaced inits; otherwise ``gamma`` is fixed."""

    name: str
    n_values: tuple[int, ...]
    repetitions: int
    dynamics: dict  # Dynamics document without gamma
    init: InitSpec
    gamma: float | None = None
    spacing_ratio: float | None = None
    seed: int = 0
    max_steps: int | None = None  # default 10 n^2 + 1 per n
    cap_factor: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if (self.gamma is None) == (self.spacing_ratio is None):
            raise ValueError("give exactly one of gamma and spacing_ratio")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        kind = self.dynamics.get("kind")
        fam = self.dynamics.get("influence", {}).get("family")
        if not (kind == "HK" or (kind == "WEIGHTED" and fam in ("CONSTANT_ONE", "PLATEAU_LINEAR"))):
            raise ValueError("scaling studies need a finite-time dynamics (HK, CONSTANT_ONE or PLATEAU_LINEAR)")

    def gamma_for(self, n: int) -> float:
        if self.gamma is not None:
            return self.gamma
        spacing = (self.init.hi - self.init.lo) / max(n - 1, 1)
        return spacing / self.spacing_ratio

    def dynamics_for(self, n: int) -> Dynamics:
        return Dynamics.from_dict({**self.dynamics, "gamma": self.gamma_for(n)})

    def steps_for(self, n: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return int(self.cap_factor * n * n) + 1

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "kind": "scaling",
            "n_values": list(self.n_values),
            "repetitions": self.repetitions,
            "dynamics": self.dynamics,
            "init": self.init.to_dict(),
            "seed": self.seed,
            "cap_factor": self.cap_factor,
        }
        for key in ("gamma", "spacing_ratio", "max_steps"):
            if getattr(self, key) is not None:
                doc[key] = getattr(self, key)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ScalingStudy:
        if "scenario" in doc and "tool" in doc:
            doc = doc["scenario"]
        return cls(
            name=doc.get("name", "scaling"),
            n_values=tuple(doc["n_values"]),
            repetitions=int(doc.get("repetitions", 1)),
            dynamics=dict(doc.get("dynamics", {"kind": "HK"})),
            init=InitSpec.from_dict(doc["init"]),
            gamma=None if doc.get("gamma") is None else float(doc["gamma"]),
            spacing_ratio=None if doc.get("spacing_ratio") is None else float(doc["spacing_ratio"]),
            seed=int(doc.get("seed", 0)),
            max_steps=None if doc.get("max_steps") is None else int(doc["max_steps"]),
            cap_factor=float(doc.get("cap_factor", 10.0)),
        )
