"""Rotor configurations, the rotor-walk step rule, and walk runners.

A rotor index always refers to the *ambient* cyclic order of a vertex
(four slots, anticlockwise from the smallest direction). The walker first
advances the rotor at its position by one (mod 4), then moves to the
neighbour the rotor now points to.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np

from gasketsim.errors import FrontierExceeded, MissingRotorError
from gasketsim.graph import (
    DEFAULT_MAX_VERTICES,
    PrefractalGraph,
    build,
    corners,
    cut_set_mask,
    outer_boundary_mask,
)
from gasketsim.lattice import DIRECTION_STEPS, ORIGIN, LatticeCoord
from gasketsim.types import AMBIENT_DEGREE, Half, RotorLaw

logger = logging.getLogger(__name__)

UNSET = -1


# ── Outcomes ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Returned:
    """The walk came back to its start after ``time`` steps."""

    time: int


@dataclass(frozen=True)
class Exited:
    """The walk first stepped outside the region at step ``time``."""

    time: int
    vertex: LatticeCoord


@dataclass(frozen=True)
class CapExceeded:
    """The step cap ran out; the walk state is preserved."""

    time: int


WalkOutcome = Union[Returned, Exited, CapExceeded]


# ── Rotor configurations ─────────────────────────────────────────────


class RotorConfig:
    """Rotor index per vertex of a graph (``-1`` where unset)."""

    def __init__(self, graph: PrefractalGraph, indices: Optional[np.ndarray] = None) -> None:
        self.graph = graph
        if indices is None:
            indices = np.full(len(graph), UNSET, dtype=np.int8)
        indices = np.asarray(indices, dtype=np.int8)
        if indices.shape != (len(graph),):
            raise ValueError("rotor array does not match the graph")
        if ((indices < UNSET) | (indices >= AMBIENT_DEGREE)).any():
            raise ValueError(f"rotor indices must lie in 0..{AMBIENT_DEGREE - 1}")
        self.indices = indices

    @classmethod
    def constant(cls, graph: PrefractalGraph, index: int = 0) -> RotorConfig:
        return cls(graph, np.full(len(graph), index, dtype=np.int8))

    @classmethod
    def from_mapping(cls, graph: PrefractalGraph, mapping: dict) -> RotorConfig:
        """Build from ``{"a,b": index}`` or ``{(a, b): index}``."""
        config = cls(graph)
        for key, index in mapping.items():
            v = LatticeCoord.parse(key) if isinstance(key, str) else key
            config[v] = int(index)
        return config

    def __getitem__(self, v: tuple[int, int]) -> int:
        r = int(self.indices[self.graph.index(v)])
        if r == UNSET:
            raise MissingRotorError(v)
        return r

    def __setitem__(self, v: tuple[int, int], index: int) -> None:
        if not 0 <= index < AMBIENT_DEGREE:
            raise ValueError(f"rotor index {index} outside 0..{AMBIENT_DEGREE - 1}")
        self.indices[self.graph.index(v)] = index

    def __len__(self) -> int:
        return int((self.indices != UNSET).sum())

    def copy(self) -> RotorConfig:
        return RotorConfig(self.graph, self.indices.copy())

    def points_to(self, v: tuple[int, int]) -> LatticeCoord:
        """The ambient neighbour the rotor at ``v`` currently points to."""
        i = self.graph.index(v)
        r = self[v]
        step = DIRECTION_STEPS[int(self.graph.directions[i, r])]
        return self.graph.coord(i).translate(step)

    def remap(self, graph: PrefractalGraph) -> RotorConfig:
        """Carry the rotors over to a graph containing this one."""
        target = graph.indices(self.graph.coords)
        if (target < 0).any():
            raise ValueError("target graph does not contain the current one")
        indices = np.full(len(graph), UNSET, dtype=np.int8)
        indices[target] = self.indices
        return RotorConfig(graph, indices)

    def to_json_dict(self) -> dict[str, int]:
        return {
            self.graph.coord(int(i)).key(): int(self.indices[i])
            for i in np.flatnonzero(self.indices != UNSET)
        }


def sample_config(
    law: RotorLaw,
    graph: PrefractalGraph,
    rng: np.random.Generator,
    vertices: Optional[np.ndarray] = None,
) -> RotorConfig:
    """Independent rotor draws from ``law`` at every vertex (or a mask of them)."""
    config = RotorConfig(graph)
    count = len(graph) if vertices is None else int(np.count_nonzero(vertices))
    draws = rng.choice(AMBIENT_DEGREE, size=count, p=law.as_array()).astype(np.int8)
    if vertices is None:
        config.indices[:] = draws
    else:
        config.indices[vertices] = draws
    return config


# ── Walk state and stepping ──────────────────────────────────────────


@dataclass
class WalkState:
    """Walker position, rotors, step counter and arrival counts.

    The start vertex counts as one visit, so for every vertex the number of
    departures equals its visits minus one if the walker currently sits there.
    """

    graph: PrefractalGraph
    position: int
    rotors: RotorConfig
    time: int = 0
    visits: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.rotors.graph is not self.graph:
            raise ValueError("rotor configuration belongs to another graph")
        if self.visits is None:
            self.visits = np.zeros(len(self.graph), dtype=np.int64)
            self.visits[self.position] = 1

    @classmethod
    def start(
        cls, graph: PrefractalGraph, rotors: RotorConfig, at: tuple[int, int] = ORIGIN
    ) -> WalkState:
        return cls(graph=graph, position=graph.index(at), rotors=rotors)

    @property
    def coord(self) -> LatticeCoord:
        return self.graph.coord(self.position)

    def visit_count(self, v: tuple[int, int]) -> int:
        return int(self.visits[self.graph.index(v)])


def step(w: WalkState) -> WalkState:
    """Advance the rotor at the walker's position and follow it.

    Raises:
        MissingRotorError: If the rotor at the position is unset.
        FrontierExceeded: If the rotor points outside the materialized
            graph; the state is left unchanged.
    """
    i = w.position
    r = int(w.rotors.indices[i])
    if r == UNSET:
        raise MissingRotorError(w.coord)
    r = (r + 1) % AMBIENT_DEGREE
    j = int(w.graph.neighbors[i, r])
    if j < 0:
        raise FrontierExceeded(w.coord, w.graph.level)
    w.rotors.indices[i] = r
    w.position = j
    w.time += 1
    w.visits[j] += 1
    return w


def _drive(w: WalkState, step_cap: int, stop: bytearray) -> tuple[int, bool]:
    """Step until ``stop[position]`` holds or ``step_cap`` steps are taken."""
    table = w.graph.neighbor_table
    rotors = w.rotors.indices.tolist()
    visits = w.visits.tolist()
    pos = w.position
    taken = 0
    hit = False
    try:
        while taken < step_cap:
            r = rotors[pos]
            if r == UNSET:
                raise MissingRotorError(w.graph.coord(pos))
            r = (r + 1) % AMBIENT_DEGREE
            nxt = table[pos][r]
            if nxt < 0:
                raise FrontierExceeded(w.graph.coord(pos), w.graph.level)
            rotors[pos] = r
            pos = nxt
            taken += 1
            visits[pos] += 1
            if stop[pos]:
                hit = True
                break
    finally:
        w.rotors.indices[:] = rotors
        w.visits[:] = visits
        w.position = pos
        w.time += taken
    return taken, hit


def run_until_return(
    w: WalkState, origin: Optional[tuple[int, int]] = None, step_cap: int = 10**7
) -> Union[Returned, CapExceeded]:
    """Walk until the first return to ``origin`` (default: the start).

    Raises:
        ValueError: If the walker does not start at ``origin``.
        FrontierExceeded: Propagated; the state stays valid for a retry.
    """
    target = w.position if origin is None else w.graph.index(origin)
    if target != w.position:
        raise ValueError("walk must start at the origin it should return to")
    stop = bytearray(len(w.graph))
    stop[target] = 1
    taken, hit = _drive(w, step_cap, stop)
    return Returned(taken) if hit else CapExceeded(taken)


def _region_mask(graph: PrefractalGraph, region) -> np.ndarray:
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region
    return graph.mask_of(region)


def run_until_exit(
    w: WalkState, region, step_cap: int = 10**7, stop_on_return: bool = True
) -> WalkOutcome:
    """Walk until the walker returns to its start or first leaves ``region``.

    Args:
        w: Walk state; its position must lie in ``region``.
        region: Boolean vertex mask or an iterable of coordinates.
        step_cap: Maximum number of steps.
        stop_on_return: If false, returns to the start are ignored and the
            walk only stops on leaving the region (or at the cap).

    Returns:
        :class:`Returned`, :class:`Exited` or :class:`CapExceeded`.
    """
    inside = _region_mask(w.graph, region)
    start = w.position
    if not inside[start]:
        raise ValueError("walk must start inside the region")
    stop = bytearray((~inside).astype(np.uint8).tobytes())
    if stop_on_return:
        stop[start] = 1
    taken, hit = _drive(w, step_cap, stop)
    if not hit:
        return CapExceeded(taken)
    if w.position == start:
        return Returned(taken)
    return Exited(taken, w.coord)


def run_steps(w: WalkState, steps: int) -> list[tuple[int, int, int]]:
    """Take ``steps`` steps and return the trace ``(t, a, b)`` including t=0."""
    trace = [(w.time, *w.coord)]
    for _ in range(steps):
        step(w)
        trace.append((w.time, *w.coord))
    return trace


def trace_to_csv(trace: Iterable[tuple[int, int, int]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t", "a", "b"])
    writer.writerows(trace)
    return buffer.getvalue()


# ── Reflecting boundaries ────────────────────────────────────────────


def _slot_inside(graph: PrefractalGraph, y: int, inside: np.ndarray) -> list[bool]:
    return [bool(j >= 0 and inside[j]) for j in graph.neighbors[y]]


def _serves_inside_first(flags: list[bool], r: int) -> bool:
    seen_outside = False
    for k in range(1, AMBIENT_DEGREE + 1):
        if flags[(r + k) % AMBIENT_DEGREE]:
            if seen_outside:
                return False
        else:
            seen_outside = True
    return True


def reflecting_rotors(graph: PrefractalGraph, region, y: tuple[int, int]) -> list[int]:
    """Rotor indices at ``y`` that serve every region neighbour first."""
    inside = _region_mask(graph, region)
    flags = _slot_inside(graph, graph.index(y), inside)
    return [r for r in range(AMBIENT_DEGREE) if _serves_inside_first(flags, r)]


def is_reflecting(
    graph: PrefractalGraph,
    region,
    rotors: RotorConfig,
    boundary: Optional[np.ndarray] = None,
) -> bool:
    """Whether ``region`` has reflecting boundary under ``rotors``.

    For every outer-boundary vertex y, the successive increments of the
    rotor at y must reach all of y's neighbours in the region before any
    neighbour outside it.

    Raises:
        MissingRotorError: If a boundary rotor is unset.
    """
    inside = _region_mask(graph, region)
    if boundary is None:
        boundary = outer_boundary_mask(graph, inside)
    for y in np.flatnonzero(boundary):
        r = int(rotors.indices[y])
        if r == UNSET:
            raise MissingRotorError(graph.coord(int(y)))
        if not _serves_inside_first(_slot_inside(graph, int(y), inside), r):
            return False
    return True


def reflecting_at_level(graph: PrefractalGraph, rotors: RotorConfig, n: int) -> bool:
    """Whether S_n has reflecting boundary; its outer boundary is the corner set."""
    boundary = graph.mask_of(corners(n))
    return is_reflecting(graph, cut_set_mask(graph, n), rotors, boundary=boundary)


def force_reflecting(graph: PrefractalGraph, rotors: RotorConfig, n: int) -> RotorConfig:
    """Set the corner rotors of level n so that S_n has reflecting boundary."""
    for c, index in zip(corners(n), corner_reflecting_indices(n)):
        rotors[c] = index
    return rotors


@lru_cache(maxsize=None)
def corner_reflecting_indices(n: int) -> tuple[int, int, int, int]:
    """The rotor index at each of x_n, y_n, z_n, t_n that makes S_n reflecting.

    Each corner has two neighbours in S_n and two outside it, adjacent in
    the cyclic order, so exactly one index works.
    """
    graph = build(n + 1, Half.BOTH)
    inside = cut_set_mask(graph, n)
    found = []
    for c in corners(n):
        options = reflecting_rotors(graph, inside, c)
        if len(options) != 1:
            raise AssertionError(f"corner {c} has {len(options)} reflecting rotor states")
        found.append(options[0])
    return tuple(found)  # type: ignore[return-value]


def smallest_reflecting_level(
    graph: PrefractalGraph, rotors: RotorConfig, n_max: int
) -> Optional[int]:
    """Least n in 1..n_max such that S_n has reflecting boundary, else None."""
    for n in range(1, min(n_max, graph.level) + 1):
        if reflecting_at_level(graph, rotors, n):
            return n
    return None


# ── Walks on the infinite gasket ─────────────────────────────────────


class LazyWalk:
    """Rotor walk on the doubly infinite gasket, materialized on demand.

    The walk starts on a small prefractal. Whenever it would step off the
    materialized graph, the graph is rebuilt one level higher, the rotors
    and visit counts are carried over, and rotors of the new vertices are
    drawn from ``law`` in canonical vertex order. ``initial`` keeps the
    rotors as they were drawn, before the walk moved any of them.
    """

    def __init__(
        self,
        law: RotorLaw,
        rng: np.random.Generator,
        start_level: int = 1,
        max_level: int = 10,
        start: tuple[int, int] = ORIGIN,
        max_vertices: int = DEFAULT_MAX_VERTICES,
    ) -> None:
        self.law = law
        self.rng = rng
        self.max_level = max_level
        self.max_vertices = max_vertices
        graph = build(start_level, Half.BOTH, max_vertices)
        rotors = sample_config(law, graph, rng)
        self.initial = rotors.copy()
        self.state = WalkState.start(graph, rotors, start)

    @property
    def graph(self) -> PrefractalGraph:
        return self.state.graph

    def grow(self) -> None:
        """Materialize one more level.

        Raises:
            FrontierExceeded: If ``max_level`` is already reached.
        """
        old = self.state
        level = old.graph.level + 1
        if level > self.max_level:
            raise FrontierExceeded(old.coord, old.graph.level)
        graph = build(level, Half.BOTH, self.max_vertices)
        rotors = old.rotors.remap(graph)
        initial = self.initial.remap(graph)
        fresh = rotors.indices == UNSET
        drawn = sample_config(self.law, graph, self.rng, fresh).indices[fresh]
        rotors.indices[fresh] = drawn
        initial.indices[fresh] = drawn
        target = graph.indices(old.graph.coords)
        visits = np.zeros(len(graph), dtype=np.int64)
        visits[target] = old.visits
        self.initial = initial
        self.state = WalkState(
            graph=graph,
            position=int(target[old.position]),
            rotors=rotors,
            time=old.time,
            visits=visits,
        )
        logger.debug("walk grew to level %d (%d vertices)", level, len(graph))

    def run_until_return(self, step_cap: int) -> Union[Returned, CapExceeded]:
        """Run until the walk returns to its start, growing the graph as needed.

        Raises:
            FrontierExceeded: If the walk needs more than ``max_level`` levels.
        """
        origin = self.state.coord
        began = self.state.time
        while True:
            remaining = step_cap - (self.state.time - began)
            stop = bytearray(len(self.graph))
            stop[self.graph.index(origin)] = 1
            try:
                _, hit = _drive(self.state, remaining, stop)
            except FrontierExceeded:
                self.grow()
                continue
            elapsed = self.state.time - began
            return Returned(elapsed) if hit else CapExceeded(elapsed)

    def smallest_reflecting_level(self) -> Optional[int]:
        """Least n whose cut set is reflecting under the initial rotors.

        Only levels whose corners are materialized can be checked.
        """
        return smallest_reflecting_level(self.graph, self.initial, self.graph.level)

    def run_steps(self, steps: int) -> list[tuple[int, int, int]]:
        """Take ``steps`` steps, growing as needed; returns the ``(t, a, b)`` trace."""
        trace = [(self.state.time, *self.state.coord)]
        for _ in range(steps):
            try:
                step(self.state)
            except FrontierExceeded:
                self.grow()
                step(self.state)
            trace.append((self.state.time, *self.state.coord))
        return trace
