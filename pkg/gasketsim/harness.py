"""Seeded, reproducible Monte Carlo experiments.

Every trial draws from its own counter-based generator, seeded from
``(master_seed, level, trial)``, so records do not depend on how trials are
split across worker processes. Experiments that are cheap per trial
(reflecting frequencies, CLT samples) are vectorized in fixed-size blocks
seeded from ``(master_seed, level, block)`` instead.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import repeat
from typing import Any, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import spsolve

from gasketsim.divisible import check_critical_law, divisible_explosion_trial
from gasketsim.errors import ConfigError, FrontierExceeded, GasketSimError
from gasketsim.graph import PrefractalGraph, build, cut_set_mask, vertex_count
from gasketsim.lattice import ORIGIN
from gasketsim.rotor import (
    Exited,
    LazyWalk,
    Returned,
    WalkState,
    corner_reflecting_indices,
    force_reflecting,
    run_until_exit,
    sample_config,
)
from gasketsim.sandpile import explosion_threshold, explosion_trial
from gasketsim.stats import (
    correlation_matrix,
    ks_normal,
    mean_stderr,
    ratio_stderr,
    summarize_column,
)
from gasketsim.types import (
    AMBIENT_DEGREE,
    ExperimentKind,
    ExperimentSpec,
    ExperimentSummary,
    Half,
    HeightLaw,
    LevelSummary,
    MassLaw,
    RotorLaw,
    StartVertex,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
UNIT_TRIALS = 32
OK = "ok"

_TRIAL_TAG = 0
_BLOCK_TAG = 1
# Cap on draws held in memory at once by the CLT sampler
_CLT_CHUNK = 1 << 22
_SMALL_VOLUME = 30
_SMALL_SAMPLE = 100


# ── Seeds ────────────────────────────────────────────────────────────


def derive_seed(master_seed: int, level: int, index: int, tag: int = _TRIAL_TAG) -> int:
    """64-bit seed of one trial (or block), a pure function of its coordinates."""
    state = np.random.SeedSequence([master_seed, level, index, tag]).generate_state(1, np.uint64)
    return int(state[0])


def trial_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ── Record tables ────────────────────────────────────────────────────


def _as_array(values: list) -> np.ndarray:
    if any(v is None for v in values):
        return np.array(values, dtype=object)
    if all(isinstance(v, (bool, np.bool_)) for v in values):
        return np.array(values, dtype=bool)
    if all(isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in values):
        return np.array(values, dtype=np.int64)
    if all(isinstance(v, (int, float, np.number)) for v in values):
        return np.array(values, dtype=np.float64)
    return np.array(values, dtype=object)


def _format_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def _format_column(col: np.ndarray) -> list[str]:
    if col.dtype == bool:
        return np.where(col, "1", "0").tolist()
    if np.issubdtype(col.dtype, np.integer):
        return col.astype(str).tolist()
    return [_format_value(v) for v in col.tolist()]


class TrialTable:
    """Columnar per-trial records: level, trial, seed, status, then outputs."""

    KEYS = ("level", "trial", "seed", "status")

    def __init__(self, columns: Sequence[str], data: Optional[dict[str, np.ndarray]] = None) -> None:
        self.columns = tuple(columns)
        names = self.KEYS + self.columns
        if data is None:
            data = {name: np.empty(0, dtype=object) for name in names}
        missing = set(names) - set(data)
        if missing:
            raise ValueError(f"missing columns: {sorted(missing)}")
        self.data = data

    @classmethod
    def from_rows(cls, columns: Sequence[str], rows: list[dict[str, Any]]) -> TrialTable:
        # 64-bit seeds do not fit a signed column
        data = {"seed": np.array([row["seed"] for row in rows], dtype=np.uint64)}
        for name in cls.KEYS + tuple(columns):
            if name != "seed":
                data[name] = _as_array([row.get(name) for row in rows])
        return cls(columns, data)

    @classmethod
    def concat(cls, columns: Sequence[str], tables: Sequence[TrialTable]) -> TrialTable:
        names = cls.KEYS + tuple(columns)
        if not tables:
            return cls(columns)
        return cls(columns, {name: np.concatenate([t.data[name] for t in tables]) for name in names})

    def __len__(self) -> int:
        return len(self.data["level"])

    def sorted(self) -> TrialTable:
        """Rows ordered by (level, trial)."""
        order = np.lexsort((self.data["trial"].astype(np.int64), self.data["level"].astype(np.int64)))
        return TrialTable(self.columns, {k: v[order] for k, v in self.data.items()})

    def levels(self) -> list[int]:
        return sorted({int(v) for v in self.data["level"]})

    def ok_mask(self, level: Optional[int] = None) -> np.ndarray:
        mask = self.data["status"] == OK
        if level is not None:
            mask &= self.data["level"].astype(np.int64) == level
        return np.asarray(mask, dtype=bool)

    def values(self, name: str, level: Optional[int] = None) -> np.ndarray:
        """Float values of a column over successful rows (missing as NaN)."""
        col = self.data[name][self.ok_mask(level)]
        return np.array([np.nan if v is None else float(v) for v in col.tolist()], dtype=np.float64)

    def to_csv(self, master_seed: int) -> str:
        names = self.KEYS + self.columns
        formatted = [_format_column(self.data[name]) for name in names]
        seed_text = str(master_seed)
        lines = [",".join(("master_seed",) + names)]
        lines.extend(seed_text + "," + ",".join(parts) for parts in zip(*formatted))
        return "\n".join(lines) + "\n"


# ── Experiments ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class WorkUnit:
    """A slice of trials handed to one worker call."""

    level: int
    start: int
    stop: int
    block: int = -1


@runtime_checkable
class Experiment(Protocol):
    """Protocol for experiment kinds. Implement this to add a new experiment."""

    columns: tuple[str, ...]
    indicators: tuple[str, ...]

    def check(self, spec: ExperimentSpec) -> None:
        """Reject specs outside the experiment's scope (raises ConfigError)."""
        ...

    def units(self, spec: ExperimentSpec) -> list[WorkUnit]:
        """Split the trials into work units, independent of worker count."""
        ...

    def run_unit(self, spec: ExperimentSpec, unit: WorkUnit) -> TrialTable:
        ...

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        ...

    def extras(self, spec: ExperimentSpec, table: TrialTable) -> dict[str, Any]:
        ...


class PerTrialExperiment:
    """Base for experiments that simulate one trial at a time."""

    columns: tuple[str, ...] = ()
    indicators: tuple[str, ...] = ()

    def check(self, spec: ExperimentSpec) -> None:
        pass

    def units(self, spec: ExperimentSpec) -> list[WorkUnit]:
        return [
            WorkUnit(level, start, min(start + UNIT_TRIALS, spec.trials))
            for level in spec.levels
            for start in range(0, spec.trials, UNIT_TRIALS)
        ]

    def run_unit(self, spec: ExperimentSpec, unit: WorkUnit) -> TrialTable:
        rows = []
        for trial in range(unit.start, unit.stop):
            seed = derive_seed(spec.master_seed, unit.level, trial)
            row: dict[str, Any] = {"level": unit.level, "trial": trial, "seed": seed}
            try:
                row.update(self.trial(spec, unit.level, trial_rng(seed)))
                row["status"] = OK
            except GasketSimError as e:
                logger.warning("trial %d at level %d failed: %s", trial, unit.level, e)
                row["status"] = f"failed:{type(e).__name__}"
            rows.append(row)
        return TrialTable.from_rows(self.columns, rows)

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        raise NotImplementedError

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        return {}

    def extras(self, spec: ExperimentSpec, table: TrialTable) -> dict[str, Any]:
        return {}


class ReflectingFrequency(PerTrialExperiment):
    """Frequency of reflecting cut sets under i.i.d. rotors.

    A_n depends only on the four corner rotors of level n, and corners of
    different levels are distinct vertices, so each trial draws just the
    corner rotors of every requested level, all from one configuration.
    """

    columns = ("reflecting",)
    indicators = ("reflecting",)

    def units(self, spec: ExperimentSpec) -> list[WorkUnit]:
        return [
            WorkUnit(0, start, min(start + BLOCK_SIZE, spec.trials), block)
            for block, start in enumerate(range(0, spec.trials, BLOCK_SIZE))
        ]

    def run_unit(self, spec: ExperimentSpec, unit: WorkUnit) -> TrialTable:
        seed = derive_seed(spec.master_seed, 0, unit.block, _BLOCK_TAG)
        rng = trial_rng(seed)
        count = unit.stop - unit.start
        levels = spec.levels
        targets = np.array([corner_reflecting_indices(n) for n in levels], dtype=np.int64)
        draws = rng.choice(AMBIENT_DEGREE, size=(count, len(levels), 4), p=spec.rotor_law.as_array())
        hits = (draws == targets[None, :, :]).all(axis=2)
        trials = np.arange(unit.start, unit.stop, dtype=np.int64)
        return TrialTable(
            self.columns,
            {
                "level": np.repeat(np.array(levels, dtype=np.int64), count),
                "trial": np.tile(trials, len(levels)),
                "seed": np.full(count * len(levels), seed, dtype=np.uint64),
                "status": np.full(count * len(levels), OK, dtype=object),
                "reflecting": hits.T.reshape(-1),
            },
        )

    @staticmethod
    def expected(spec: ExperimentSpec, level: int) -> float:
        p = spec.rotor_law.as_array()
        return float(np.prod(p[list(corner_reflecting_indices(level))]))

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        values = table.values("reflecting", level)
        p = self.expected(spec, level)
        freq = float(values.mean()) if len(values) else math.nan
        band = 4.0 * math.sqrt(p * (1.0 - p) / max(len(values), 1))
        return {
            "expected": p,
            "lower_bound": spec.rotor_law.min_probability**4,
            "within_4_sigma": bool(abs(freq - p) <= band),
        }

    def extras(self, spec: ExperimentSpec, table: TrialTable) -> dict[str, Any]:
        matrix = np.stack([table.values("reflecting", n) for n in spec.levels], axis=1)
        none = ~matrix.astype(bool).any(axis=1)
        expected_none = float(np.prod([1.0 - self.expected(spec, n) for n in spec.levels]))
        return {
            "correlation": correlation_matrix(matrix),
            "correlation_4_sigma": 4.0 / math.sqrt(len(matrix)),
            "none_frequency": float(none.mean()),
            "none_expected": expected_none,
        }


@lru_cache(maxsize=32)
def _walk_regions(level: int) -> tuple[PrefractalGraph, np.ndarray, np.ndarray]:
    """Level n+1 graph with masks of S_n and of S_n plus its outer boundary."""
    graph = build(level + 1, Half.BOTH)
    cut = cut_set_mask(graph, level)
    region = graph.level_mask(level, Half.BOTH)
    cut.flags.writeable = False
    region.flags.writeable = False
    return graph, cut, region


class LemmaNine(PerTrialExperiment):
    """Walks from S_n with reflecting boundary must return before leaving."""

    columns = ("start_a", "start_b", "returned_first", "time", "exit_a", "exit_b", "capped")
    indicators = ("returned_first",)

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        graph, cut, region = _walk_regions(level)
        rotors = force_reflecting(graph, sample_config(spec.rotor_law, graph, rng), level)
        if spec.start is StartVertex.RANDOM:
            start = graph.coord(int(rng.choice(np.flatnonzero(cut))))
        else:
            start = ORIGIN
        walk = WalkState.start(graph, rotors, start)
        outcome = run_until_exit(walk, region, spec.step_cap)
        exited = isinstance(outcome, Exited)
        return {
            "start_a": start.a,
            "start_b": start.b,
            "returned_first": isinstance(outcome, Returned),
            "time": outcome.time,
            "exit_a": outcome.vertex.a if exited else None,
            "exit_b": outcome.vertex.b if exited else None,
            "capped": not exited and not isinstance(outcome, Returned),
        }

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        exits = table.values("exit_a", level)
        return {"violations": int((~np.isnan(exits)).sum())}


class ReturnTimes(PerTrialExperiment):
    """First return times to the start of rotor walks on the infinite gasket.

    The level is the prefractal the lazy walk starts on.
    """

    columns = ("returned", "escaped", "return_time", "steps", "final_level", "reflecting_level")
    indicators = ("returned", "escaped")

    def check(self, spec: ExperimentSpec) -> None:
        if max(spec.levels) > spec.max_level:
            raise ConfigError("start level exceeds max_level")

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        walk = LazyWalk(spec.rotor_law, rng, start_level=level, max_level=spec.max_level)
        try:
            outcome = walk.run_until_return(spec.step_cap)
        except FrontierExceeded:
            # left SG_max_level without returning
            outcome = None
        returned = isinstance(outcome, Returned)
        return {
            "returned": returned,
            "escaped": outcome is None,
            "return_time": outcome.time if returned else None,
            "steps": walk.state.time,
            "final_level": walk.graph.level,
            "reflecting_level": walk.smallest_reflecting_level(),
        }

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        returned = table.values("returned", level)
        escaped = table.values("escaped", level)
        times = table.values("return_time", level)
        times = times[~np.isnan(times)]
        guaranteed = ~np.isnan(table.values("reflecting_level", level))
        bins = np.floor(np.log2(times)).astype(np.int64) if len(times) else np.empty(0, np.int64)
        histogram = {str(1 << int(k)): int(c) for k, c in zip(*np.unique(bins, return_counts=True))}
        return {
            "non_return_fraction": float(1.0 - returned.mean()) if len(returned) else None,
            "escaped": int((escaped == 1).sum()),
            "capped": int(((returned == 0) & (escaped == 0)).sum()),
            "histogram": histogram,
            "guaranteed": int(guaranteed.sum()),
            "guaranteed_returned": int((guaranteed & (returned == 1)).sum()),
        }


class AbelianExplosion(PerTrialExperiment):
    """Excess mass leaving SG_n^+ through its corners for i.i.d. heights."""

    columns = (
        "N_n",
        "u_o",
        "T_o",
        "sink_mass",
        "stable_total",
        "exit_o",
        "exit_x",
        "exit_y",
        "threshold",
        "indicator",
    )
    indicators = ("indicator",)

    def check(self, spec: ExperimentSpec) -> None:
        explosion_threshold(spec.height_law)

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        return explosion_trial(spec.height_law, level, rng, spec.policy, spec.topple_cap)

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        threshold = explosion_threshold(spec.height_law)
        volume = vertex_count(level, Half.PLUS)
        stable = table.values("stable_total", level)
        u_o = table.values("u_o", level)
        return {
            "volume": volume,
            "case": "supercritical" if threshold.supercritical else "critical",
            "threshold": threshold.value(volume),
            "frequency_bound": 1.0 / 3.0 if threshold.supercritical else None,
            "stable_bound": 3 * volume,
            "stable_bound_violations": int((stable > 3 * volume).sum()),
            "median_u_o": float(np.median(u_o)) if len(u_o) else None,
        }


class DivisibleExplosion(PerTrialExperiment):
    """Emitted mass at o for critical divisible sandpiles on SG_n^+."""

    columns = (
        "N_n",
        "u_o",
        "sink_mass",
        "stable_total",
        "converged",
        "sweeps",
        "threshold",
        "indicator",
    )
    indicators = ("indicator", "converged")

    def check(self, spec: ExperimentSpec) -> None:
        check_critical_law(spec.mass_law)

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        return divisible_explosion_trial(spec.mass_law, level, rng, spec.epsilon, spec.sweep_cap)

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        total = table.values("N_n", level)
        balance = table.values("stable_total", level) + table.values("sink_mass", level)
        drift = np.abs(total - balance) > 1e-6 * np.maximum(total, 1.0)
        unconverged = int((table.values("converged", level) == 0).sum())
        if unconverged:
            logger.warning(
                "%d divisible runs at level %d hit the sweep cap; their odometers are lower bounds",
                unconverged,
                level,
            )
        u_o = table.values("u_o", level)
        return {
            "volume": vertex_count(level, Half.PLUS),
            # censored odometers enter the median as lower bounds
            "median_u_o": float(np.median(u_o)) if len(u_o) else None,
            "unconverged": unconverged,
            "conservation_violations": int(drift.sum()),
        }


def exact_green(graph: PrefractalGraph, region: np.ndarray, x: tuple[int, int], y: tuple[int, int]) -> float:
    """Expected visits to y (time 0 included) of simple random walk from x before leaving region."""
    xi, yi = graph.index(x), graph.index(y)
    if not region[yi]:
        return 0.0
    idx = np.flatnonzero(region)
    q = graph.adjacency[idx][:, idx] / AMBIENT_DEGREE
    rhs = np.zeros(len(idx))
    rhs[int(np.searchsorted(idx, yi))] = 1.0
    g = spsolve((identity(len(idx), format="csr") - q).tocsc(), rhs)
    return float(g[int(np.searchsorted(idx, xi))])


def srw_visits(
    graph: PrefractalGraph,
    region: np.ndarray,
    x: tuple[int, int],
    y: tuple[int, int],
    rng: np.random.Generator,
    step_cap: int,
) -> Optional[int]:
    """Visits to y of one simple random walk from x before it leaves region.

    Returns None if the walk is still inside after ``step_cap`` steps.
    """
    table = graph.neighbor_table
    inside = region.tolist()
    pos = graph.index(x)
    target = graph.index(y)
    visits = 1 if pos == target else 0
    steps = 0
    while steps < step_cap:
        for slot in rng.integers(0, AMBIENT_DEGREE, size=1024).tolist():
            pos = table[pos][slot]
            steps += 1
            if pos < 0 or not inside[pos]:
                return visits
            if pos == target:
                visits += 1
            if steps >= step_cap:
                break
    return None


class GreenRatio(PerTrialExperiment):
    """Truncated Green functions of simple and uniform rotor walks.

    Both walks start at ``source`` and count visits to ``target`` until they
    first leave S_n together with its outer boundary.
    """

    columns = ("srw_visits", "urw_visits", "urw_steps")

    def check(self, spec: ExperimentSpec) -> None:
        for level in spec.levels:
            graph, cut, _ = _walk_regions(level)
            if spec.source not in graph or not cut[graph.index(spec.source)]:
                raise ConfigError(f"source {spec.source} is not in S_{level}")

    def trial(self, spec: ExperimentSpec, level: int, rng: np.random.Generator) -> dict[str, Any]:
        graph, _, region = _walk_regions(level)
        x, y = spec.source, spec.target
        srw = srw_visits(graph, region, x, y, rng, spec.step_cap) if y in graph else 0
        walk = WalkState.start(graph, sample_config(spec.rotor_law, graph, rng), x)
        outcome = run_until_exit(walk, region, spec.step_cap, stop_on_return=False)
        urw: Optional[int] = None
        if isinstance(outcome, Exited):
            urw = walk.visit_count(y) if y in graph and region[graph.index(y)] else 0
        return {"srw_visits": srw, "urw_visits": urw, "urw_steps": outcome.time}

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        graph, _, region = _walk_regions(level)
        y = spec.target
        exact = exact_green(graph, region, spec.source, y) if y in graph else 0.0
        srw = table.values("srw_visits", level)
        urw = table.values("urw_visits", level)
        srw_mean, srw_se = mean_stderr(srw[~np.isnan(srw)])
        urw_mean, urw_se = mean_stderr(urw[~np.isnan(urw)])
        ratio = srw_mean / urw_mean if urw_mean else math.nan
        return {
            "exact_srw": exact,
            "srw_mean": srw_mean,
            "srw_stderr": srw_se,
            "urw_mean": urw_mean,
            "urw_stderr": urw_se,
            "ratio": ratio,
            "ratio_stderr": ratio_stderr(srw_mean, srw_se, urw_mean, urw_se),
        }


def _chip_totals(law: HeightLaw, volume: int, count: int, rng: np.random.Generator) -> np.ndarray:
    rows = max(1, _CLT_CHUNK // volume)
    return np.concatenate(
        [law.sample(rng, (min(rows, count - i), volume)).sum(axis=1) for i in range(0, count, rows)]
    )


def _standardize(law: HeightLaw, totals: np.ndarray, volume: int) -> np.ndarray:
    return (totals - law.mean * volume) / (law.std * math.sqrt(volume))


def clt_statistic(law: HeightLaw, level: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Samples of (N_n - mu|V_n|) / (sigma_0 sqrt|V_n|) for i.i.d. heights on SG_n^+.

    Raises:
        ConfigError: If the law has zero variance.
    """
    if law.std == 0:
        raise ConfigError("CLT statistic needs a law with positive variance")
    volume = vertex_count(level, Half.PLUS)
    return _standardize(law, _chip_totals(law, volume, samples, rng), volume)


class CltCheck(PerTrialExperiment):
    """Standardized total chip count (N_n - mu|V_n|) / (sigma_0 sqrt|V_n|)."""

    columns = ("N_n", "z")

    def check(self, spec: ExperimentSpec) -> None:
        if spec.height_law.std == 0:
            raise ConfigError("CLT statistic needs a law with positive variance")

    def units(self, spec: ExperimentSpec) -> list[WorkUnit]:
        return [
            WorkUnit(level, start, min(start + BLOCK_SIZE, spec.trials), block)
            for level in spec.levels
            for block, start in enumerate(range(0, spec.trials, BLOCK_SIZE))
        ]

    def run_unit(self, spec: ExperimentSpec, unit: WorkUnit) -> TrialTable:
        law = spec.height_law
        seed = derive_seed(spec.master_seed, unit.level, unit.block, _BLOCK_TAG)
        rng = trial_rng(seed)
        volume = vertex_count(unit.level, Half.PLUS)
        count = unit.stop - unit.start
        totals = _chip_totals(law, volume, count, rng)
        z = _standardize(law, totals, volume)
        return TrialTable(
            self.columns,
            {
                "level": np.full(count, unit.level, dtype=np.int64),
                "trial": np.arange(unit.start, unit.stop, dtype=np.int64),
                "seed": np.full(count, seed, dtype=np.uint64),
                "status": np.full(count, OK, dtype=object),
                "N_n": totals.astype(np.int64),
                "z": z.astype(np.float64),
            },
        )

    def level_extras(self, spec: ExperimentSpec, level: int, table: TrialTable) -> dict[str, Any]:
        z = table.values("z", level)
        volume = vertex_count(level, Half.PLUS)
        small = volume < _SMALL_VOLUME or len(z) < _SMALL_SAMPLE
        if small:
            logger.warning(
                "CLT statistic at level %d uses |V|=%d and %d samples; normal approximation is rough",
                level,
                volume,
                len(z),
            )
        return {
            "volume": volume,
            "mean": float(z.mean()),
            "variance": float(z.var(ddof=1)) if len(z) > 1 else None,
            "ks_distance": ks_normal(z),
            "small_sample": small,
        }


EXPERIMENTS: dict[ExperimentKind, Experiment] = {
    ExperimentKind.REFLECTING_FREQUENCY: ReflectingFrequency(),
    ExperimentKind.LEMMA_NINE: LemmaNine(),
    ExperimentKind.RETURN_TIMES: ReturnTimes(),
    ExperimentKind.ABELIAN_EXPLOSION: AbelianExplosion(),
    ExperimentKind.DIVISIBLE_EXPLOSION: DivisibleExplosion(),
    ExperimentKind.GREEN_RATIO: GreenRatio(),
    ExperimentKind.CLT: CltCheck(),
}


# ── Running ──────────────────────────────────────────────────────────


@dataclass
class ExperimentResult:
    """Sorted per-trial records and their summary."""

    spec: ExperimentSpec
    table: TrialTable
    summary: ExperimentSummary

    def records_csv(self) -> str:
        return self.table.to_csv(self.spec.master_seed)

    def summary_json(self) -> str:
        return self.summary.model_dump_json(indent=2) + "\n"


def _run_unit(spec: ExperimentSpec, unit: WorkUnit) -> TrialTable:
    logger.debug("unit level=%d trials=%d..%d", unit.level, unit.start, unit.stop)
    return EXPERIMENTS[spec.kind].run_unit(spec, unit)


def summarize(spec: ExperimentSpec, table: TrialTable) -> ExperimentSummary:
    experiment = EXPERIMENTS[spec.kind]
    levels = []
    for level in spec.levels:
        at_level = table.data["level"].astype(np.int64) == level
        ok = table.ok_mask(level)
        levels.append(
            LevelSummary(
                level=level,
                trials=int(at_level.sum()),
                failures=int(at_level.sum() - ok.sum()),
                columns={
                    name: summarize_column(
                        table.values(name, level),
                        indicator=name in experiment.indicators,
                        confidence=spec.confidence,
                    )
                    for name in experiment.columns
                },
                extras=experiment.level_extras(spec, level, table),
            )
        )
    return ExperimentSummary(
        kind=spec.kind,
        master_seed=spec.master_seed,
        trials=spec.trials,
        confidence=spec.confidence,
        levels=levels,
        extras=experiment.extras(spec, table),
    )


def run(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    """Run an experiment; the result does not depend on ``workers``.

    Raises:
        ConfigError: If ``spec`` is outside the experiment's scope.
    """
    experiment = EXPERIMENTS[spec.kind]
    experiment.check(spec)
    units = experiment.units(spec)
    logger.info(
        "running %s: levels=%s trials=%d master_seed=%d (%d units, %d workers)",
        spec.kind.value,
        spec.levels,
        spec.trials,
        spec.master_seed,
        len(units),
        workers,
    )
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_unit, repeat(spec), units))
    else:
        parts = [_run_unit(spec, unit) for unit in units]
    table = TrialTable.concat(experiment.columns, parts).sorted()
    failures = len(table) - int(table.ok_mask().sum())
    if failures:
        logger.warning("%d of %d trials failed", failures, len(table))
    summary = summarize(spec, table)
    logger.info("finished %s: %d records", spec.kind.value, len(table))
    return ExperimentResult(spec=spec, table=table, summary=summary)


# ── Convenience entry points ─────────────────────────────────────────


def explosion_experiment(
    law: HeightLaw, levels: Sequence[int], trials: int, master_seed: int = 0, workers: int = 1, **options: Any
) -> ExperimentResult:
    spec = ExperimentSpec(
        kind=ExperimentKind.ABELIAN_EXPLOSION,
        levels=list(levels),
        trials=trials,
        master_seed=master_seed,
        height_law=law,
        **options,
    )
    return run(spec, workers)


def divisible_explosion_experiment(
    law: MassLaw, levels: Sequence[int], trials: int, master_seed: int = 0, workers: int = 1, **options: Any
) -> ExperimentResult:
    spec = ExperimentSpec(
        kind=ExperimentKind.DIVISIBLE_EXPLOSION,
        levels=list(levels),
        trials=trials,
        master_seed=master_seed,
        mass_law=law,
        **options,
    )
    return run(spec, workers)


def return_time_study(
    law: RotorLaw,
    trials: int,
    step_cap: int,
    max_level: int,
    master_seed: int = 0,
    start_level: int = 1,
    workers: int = 1,
) -> ExperimentResult:
    spec = ExperimentSpec(
        kind=ExperimentKind.RETURN_TIMES,
        levels=[start_level],
        trials=trials,
        master_seed=master_seed,
        rotor_law=law,
        step_cap=step_cap,
        max_level=max_level,
    )
    return run(spec, workers)


def green_ratio(
    x: tuple[int, int],
    y: tuple[int, int],
    level: int,
    trials: int,
    master_seed: int = 0,
    workers: int = 1,
    **options: Any,
) -> ExperimentResult:
    spec = ExperimentSpec(
        kind=ExperimentKind.GREEN_RATIO,
        levels=[level],
        trials=trials,
        master_seed=master_seed,
        source=tuple(x),
        target=tuple(y),
        **options,
    )
    return run(spec, workers)


def clt_experiment(
    law: HeightLaw, levels: Sequence[int], samples: int, master_seed: int = 0, workers: int = 1
) -> ExperimentResult:
    spec = ExperimentSpec(
        kind=ExperimentKind.CLT,
        levels=list(levels),
        trials=samples,
        master_seed=master_seed,
        height_law=law,
    )
    return run(spec, workers)
