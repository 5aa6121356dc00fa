"""Pydantic models for laws, experiment specifications, run configs and summaries.

These are the structured data exchanged between the CLI, the experiment
harness and the result files. Simulation state (graphs, rotors, heights)
lives in numpy arrays inside the simulation modules instead.
"""

from __future__ import annotations

import math
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

# Every vertex of the doubly infinite gasket has exactly four neighbours.
AMBIENT_DEGREE = 4

_SUM_TOLERANCE = 1e-12


class Half(str, Enum):
    """Which half of the doubly infinite gasket a prefractal covers."""

    PLUS = "plus"
    MINUS = "minus"
    BOTH = "both"


class Policy(str, Enum):
    """Order in which unstable vertices are toppled."""

    FIFO = "fifo"
    LIFO = "lifo"
    RANDOM = "random"
    # Topple every unstable vertex floor(h/4) times per round
    BULK = "bulk"


class ExperimentKind(str, Enum):
    """Monte Carlo experiments driven by the harness."""

    REFLECTING_FREQUENCY = "reflecting-frequency"
    LEMMA_NINE = "lemma-nine"
    RETURN_TIMES = "return-times"
    ABELIAN_EXPLOSION = "abelian-explosion"
    DIVISIBLE_EXPLOSION = "divisible-explosion"
    GREEN_RATIO = "green-ratio"
    CLT = "clt"


class StartVertex(str, Enum):
    """Where walks of the return/exit experiments start."""

    ORIGIN = "origin"
    RANDOM = "random"


class OverlayKind(str, Enum):
    """Per-vertex data drawn on top of a rendered graph."""

    NONE = "none"
    ROTORS = "rotors"
    HEIGHTS = "heights"
    ODOMETER = "odometer"


# ── Laws ─────────────────────────────────────────────────────────────


class RotorLaw(BaseModel):
    """Law of the initial rotor: p_i is the chance to point at the i-th neighbour.

    The neighbour order is the ambient anticlockwise cyclic order.
    """

    probabilities: tuple[float, float, float, float] = Field(
        (0.25, 0.25, 0.25, 0.25),
        description="Probabilities of the four rotor indices",
    )

    @field_validator("probabilities")
    @classmethod
    def _check_probabilities(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if any(not p > 0 for p in value):
            raise ValueError("every rotor probability must be positive")
        if abs(math.fsum(value) - 1.0) > _SUM_TOLERANCE:
            raise ValueError("rotor probabilities must sum to 1")
        return value

    @classmethod
    def uniform(cls) -> RotorLaw:
        return cls()

    @property
    def min_probability(self) -> float:
        return min(self.probabilities)

    def as_array(self) -> np.ndarray:
        p = np.asarray(self.probabilities, dtype=np.float64)
        return p / p.sum()


class _FiniteLaw(BaseModel):
    """Finitely supported law given as (value, probability) pairs."""

    support: list[tuple[float, float]] = Field(..., min_length=1)

    @model_validator(mode="before")
    @classmethod
    def _accept_mapping(cls, data: Any) -> Any:
        # Shorthand: {"2": 0.5, "5": 0.5}
        if isinstance(data, dict) and "support" not in data:
            return {"support": [[float(k), float(v)] for k, v in data.items()]}
        return data

    @field_validator("support")
    @classmethod
    def _check_support(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        values = [v for v, _ in value]
        if len(set(values)) != len(values):
            raise ValueError("support values must be distinct")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ValueError("support values must be finite and non-negative")
        if any(not p > 0 for _, p in value):
            raise ValueError("probabilities must be positive")
        if abs(math.fsum(p for _, p in value) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        return sorted(value)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.support], dtype=np.float64)

    @property
    def probabilities(self) -> np.ndarray:
        p = np.array([p for _, p in self.support], dtype=np.float64)
        return p / p.sum()

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probabilities))

    @property
    def variance(self) -> float:
        centred = self.values - self.mean
        return float(np.dot(centred * centred, self.probabilities))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def is_degenerate(self) -> bool:
        return len(self.support) == 1

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return rng.choice(self.values, size=size, p=self.probabilities)


class HeightLaw(_FiniteLaw):
    """Law of the i.i.d. chip count at each vertex (non-negative integers)."""

    support: list[tuple[int, float]] = Field(
        ..., min_length=1, description="(chips, probability) pairs"
    )

    @field_validator("support", mode="before")
    @classmethod
    def _check_integral(cls, value: Any) -> Any:
        try:
            pairs = [(float(v), float(p)) for v, p in value]
        except (TypeError, ValueError) as e:
            raise ValueError(f"support must be (chips, probability) pairs: {e}") from e
        for v, _ in pairs:
            if not math.isfinite(v) or v != int(v):
                raise ValueError("chip counts must be integers")
        return [(int(v), p) for v, p in pairs]

    @property
    def delta(self) -> float:
        """Excess of the mean over the critical density 3."""
        return self.mean - 3.0

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        return super().sample(rng, size).astype(np.int64)

    def truncated(self, cap: int) -> HeightLaw:
        """Law of sigma * 1{sigma <= cap}: values above cap become 0."""
        merged: dict[int, float] = {}
        for v, p in self.support:
            key = v if v <= cap else 0
            merged[key] = merged.get(key, 0.0) + p
        return HeightLaw(support=sorted(merged.items()))


class MassLaw(_FiniteLaw):
    """Law of the i.i.d. real mass at each vertex of a divisible sandpile."""

    support: list[tuple[float, float]] = Field(
        ..., min_length=1, description="(mass, probability) pairs"
    )


# ── Experiments ──────────────────────────────────────────────────────


class ExperimentSpec(BaseModel):
    """Seeded description of one Monte Carlo experiment."""

    kind: ExperimentKind
    levels: list[int] = Field(..., min_length=1, description="Prefractal levels")
    trials: int = Field(..., ge=1, description="Trials per level")
    master_seed: int = Field(0, ge=0, description="Seed all trial streams derive from")
    rotor_law: RotorLaw = Field(default_factory=RotorLaw)
    height_law: Optional[HeightLaw] = None
    mass_law: Optional[MassLaw] = None
    step_cap: int = Field(10_000_000, gt=0, description="Max rotor/random walk steps")
    topple_cap: int = Field(10**10, gt=0, description="Max topplings per stabilization")
    sweep_cap: int = Field(200_000, gt=0, description="Max divisible relaxation sweeps")
    epsilon: float = Field(1e-9, gt=0, description="Divisible stability tolerance")
    max_level: int = Field(10, ge=1, description="Largest level a lazy walk may grow to")
    start: StartVertex = StartVertex.ORIGIN
    policy: Policy = Policy.BULK
    source: tuple[int, int] = Field((0, 0), description="Green function start x")
    target: tuple[int, int] = Field((0, 0), description="Green function target y")
    confidence: float = Field(0.99, gt=0, lt=1)

    @field_validator("levels")
    @classmethod
    def _check_levels(cls, value: list[int]) -> list[int]:
        if any(n < 0 for n in value):
            raise ValueError("levels must be non-negative")
        return sorted(set(value))

    @model_validator(mode="after")
    def _check_kind_requirements(self) -> ExperimentSpec:
        kind = self.kind
        if kind in (ExperimentKind.ABELIAN_EXPLOSION, ExperimentKind.CLT):
            if self.height_law is None:
                raise ValueError(f"{kind.value} needs a height law")
        if kind is ExperimentKind.DIVISIBLE_EXPLOSION and self.mass_law is None:
            raise ValueError("divisible-explosion needs a mass law")
        needs_cut_set = (
            ExperimentKind.REFLECTING_FREQUENCY,
            ExperimentKind.LEMMA_NINE,
            ExperimentKind.GREEN_RATIO,
        )
        if kind in needs_cut_set and min(self.levels) < 1:
            raise ValueError(f"{kind.value} needs levels >= 1")
        return self


class StatSummary(BaseModel):
    """Summary of one output column at one level."""

    count: int
    mean: Optional[float] = None
    stderr: Optional[float] = None
    median: Optional[float] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    successes: Optional[int] = Field(None, description="Indicator columns only")
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None


class LevelSummary(BaseModel):
    """Per-level statistics of an experiment."""

    level: int
    trials: int
    failures: int = 0
    columns: dict[str, StatSummary] = Field(default_factory=dict)
    extras: dict[str, Any] = Field(default_factory=dict)


class ExperimentSummary(BaseModel):
    """Summary written next to the per-trial records."""

    kind: ExperimentKind
    master_seed: int
    trials: int
    confidence: float
    levels: list[LevelSummary] = Field(default_factory=list)
    extras: dict[str, Any] = Field(default_factory=dict)


# ── CLI configuration ────────────────────────────────────────────────


class RenderOptions(BaseModel):
    """Styling of SVG renders."""

    scale: float = Field(24.0, gt=0, description="Pixels per unit edge length")
    margin: float = Field(16.0, ge=0)
    stroke_width: float = Field(1.0, gt=0)
    vertex_radius: float = Field(3.0, gt=0)
    palette: list[str] = Field(
        default_factory=lambda: ["#f7f7f7", "#9ecae1", "#3182bd", "#08306b"],
        min_length=4,
        max_length=4,
        description="Fill colours for heights 0..3",
    )
    overflow_color: str = Field("#d62728", description="Fill for heights above 3")
    odometer_color: str = Field("#e6550d")
    rotor_color: str = Field("#cb181d")
    edge_color: str = Field("#636363")


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation.

    The echoed JSON leaves out ``out`` and ``workers``: they change where
    and how fast results are produced, never what they contain.
    """

    command: str
    level: Optional[int] = Field(None, ge=0)
    half: Half = Half.BOTH
    experiment: Optional[ExperimentSpec] = None
    steps: Optional[int] = Field(None, ge=0, description="rotor-run step count")
    cap: Optional[int] = Field(None, gt=0, description="Topple cap of single stabilizations")
    max_level: int = Field(10, ge=1, description="Largest level a rotor-run walk may grow to")
    seed: int = Field(0, ge=0)
    policy: Policy = Policy.FIFO
    overlay: OverlayKind = OverlayKind.NONE
    figure: Optional[str] = Field(None, description="Named render preset")
    rotor_law: RotorLaw = Field(default_factory=RotorLaw)
    height_law: Optional[HeightLaw] = None
    render: RenderOptions = Field(default_factory=RenderOptions)
    out: Optional[Path] = Field(None, exclude=True)
    workers: int = Field(1, ge=1, exclude=True)

    def echo_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"
