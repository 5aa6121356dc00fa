"""Abelian sandpile stabilization on finite gasket domains with a sink.

Heights are int64 arrays aligned with the vertex order of a
:class:`~gasketsim.graph.PrefractalGraph`. A :class:`Domain` marks which
vertices may topple; the toppling threshold is the ambient degree 4
everywhere, and chips sent across an edge leaving the domain go to the sink.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

from gasketsim.errors import ConfigError, ToppleCapExceeded
from gasketsim.graph import PrefractalGraph, build, corners, vertex_count
from gasketsim.lattice import ORIGIN
from gasketsim.types import AMBIENT_DEGREE, Half, HeightLaw, Policy

logger = logging.getLogger(__name__)

THRESHOLD = AMBIENT_DEGREE
CRITICAL_DENSITY = 3.0
DEFAULT_TOPPLE_CAP = 10**10

# Relative slack when deciding whether a law sits exactly at the critical density
_MEAN_TOLERANCE = 1e-12


# ── Domains ──────────────────────────────────────────────────────────


class Domain:
    """A finite vertex subset D of a materialized graph; its exterior is the sink.

    Vertices keep ambient degree 4 for toppling purposes: every ambient
    edge leaving D, materialized or not, counts as a sink edge.
    """

    def __init__(self, graph: PrefractalGraph, mask: np.ndarray) -> None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(graph),):
            raise ValueError("domain mask does not match the graph")
        self.graph = graph
        self.mask = mask
        self.mask.flags.writeable = False

    @classmethod
    def whole(cls, graph: PrefractalGraph) -> Domain:
        return cls(graph, np.ones(len(graph), dtype=bool))

    @classmethod
    def level(cls, graph: PrefractalGraph, n: int, half: Half | str = Half.BOTH) -> Domain:
        """SG_n (or one of its halves) as a domain inside ``graph``."""
        return cls(graph, graph.level_mask(n, half))

    @classmethod
    def of(cls, graph: PrefractalGraph, vertices: Iterable[tuple[int, int]]) -> Domain:
        return cls(graph, graph.mask_of(vertices))

    def __len__(self) -> int:
        return len(self.indices)

    def __repr__(self) -> str:
        return f"Domain({len(self)} of {len(self.graph)} vertices, level={self.graph.level})"

    @cached_property
    def indices(self) -> np.ndarray:
        """Graph indices of the domain vertices, canonical order."""
        return np.flatnonzero(self.mask)

    @cached_property
    def local_neighbors(self) -> np.ndarray:
        """``(|D|, 4)`` neighbour slots as domain-local indices, ``-1`` for sink edges."""
        local = np.full(len(self.graph) + 1, -1, dtype=np.int64)
        local[self.indices] = np.arange(len(self.indices))
        # index -1 (unmaterialized) reads the trailing -1 entry
        return local[self.graph.neighbors[self.indices]]

    @cached_property
    def interior_degree(self) -> np.ndarray:
        return (self.local_neighbors >= 0).sum(axis=1)

    @cached_property
    def sink_edges(self) -> np.ndarray:
        """Number of ambient edges from each domain vertex to the sink."""
        return AMBIENT_DEGREE - self.interior_degree

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Integer adjacency restricted to D (domain-local indices)."""
        sub = self.graph.adjacency[self.indices][:, self.indices]
        return sub.astype(np.int64).tocsr()

    @cached_property
    def spill_matrix(self) -> sparse.csr_matrix:
        """Adjacency from D to materialized vertices outside D, ``(V, |D|)``."""
        cols = self.graph.adjacency[:, self.indices].astype(np.int64)
        outside = (~self.mask).astype(np.int64)[:, None]
        spill = sparse.csr_matrix(cols.multiply(outside), dtype=np.int64)
        spill.eliminate_zeros()
        return spill

    def local_index(self, v: tuple[int, int]) -> int:
        i = self.graph.index(v)
        if not self.mask[i]:
            raise ValueError(f"{tuple(v)} is not in the domain")
        return int(np.searchsorted(self.indices, i))


# ── Results ──────────────────────────────────────────────────────────


@dataclass
class ToppleResult:
    """Outcome of stabilizing a configuration on a domain.

    ``final`` covers the whole graph: domain entries are the stable heights,
    exterior entries are the input heights plus any chips spilled onto them.
    ``topples`` is zero outside the domain.
    """

    domain: Domain
    final: np.ndarray
    topples: np.ndarray
    sink_mass: int
    total_topples: int

    @property
    def odometer(self) -> np.ndarray:
        """Mass emitted from each vertex, u = 4T."""
        return THRESHOLD * self.topples

    def topples_at(self, v: tuple[int, int]) -> int:
        return int(self.topples[self.domain.graph.index(v)])

    def odometer_at(self, v: tuple[int, int]) -> int:
        return THRESHOLD * self.topples_at(v)

    def exit_mass(self) -> np.ndarray:
        """Chips each domain vertex sent into the sink (domain-local order)."""
        return self.topples[self.domain.indices] * self.domain.sink_edges


@dataclass(frozen=True)
class LaplacianCheck:
    """Whether the Laplacian identity held, with the first violating vertex."""

    ok: bool
    vertex: Optional[tuple[int, int]] = None

    def __bool__(self) -> bool:
        return self.ok


# ── Sampling ─────────────────────────────────────────────────────────


def sample_iid(law: HeightLaw, domain: Domain, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. heights on the domain vertices (canonical order), zero elsewhere."""
    heights = np.zeros(len(domain.graph), dtype=np.int64)
    heights[domain.indices] = law.sample(rng, len(domain))
    return heights


def heights_from_mapping(graph: PrefractalGraph, mapping: dict) -> np.ndarray:
    """Height array from ``{(a, b): chips}``; unspecified vertices get 0."""
    heights = np.zeros(len(graph), dtype=np.int64)
    for v, chips in mapping.items():
        if chips < 0:
            raise ValueError(f"negative height at {v}")
        heights[graph.index(v)] = chips
    return heights


# ── Stabilization ────────────────────────────────────────────────────


def _check_sigma(domain: Domain, sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.shape != (len(domain.graph),):
        raise ValueError("configuration does not match the graph")
    if not np.issubdtype(sigma.dtype, np.integer):
        raise ValueError("abelian sandpile heights must be integers")
    if (sigma[domain.indices] < 0).any():
        raise ValueError("heights must be non-negative")
    return sigma.astype(np.int64)


def _stabilize_worklist(
    domain: Domain,
    heights: list[int],
    policy: Policy,
    topple_cap: int,
    rng: Optional[np.random.Generator],
) -> tuple[list[int], list[int], int]:
    table = domain.local_neighbors.tolist()
    topples = [0] * len(heights)
    queued = [h >= THRESHOLD for h in heights]
    pending = [i for i, flag in enumerate(queued) if flag]
    if policy is Policy.FIFO:
        work: deque[int] | list[int] = deque(pending)
        take = work.popleft  # type: ignore[union-attr]
    else:
        work = pending
        take = work.pop
    if policy is Policy.RANDOM and rng is None:
        rng = np.random.default_rng(0)

    total = 0
    sink = 0
    while work:
        if policy is Policy.RANDOM:
            k = int(rng.integers(len(work)))  # type: ignore[union-attr]
            work[k], work[-1] = work[-1], work[k]
        v = take()
        queued[v] = False
        k = heights[v] // THRESHOLD
        if k == 0:
            continue
        total += k
        if total > topple_cap:
            raise ToppleCapExceeded(topple_cap)
        heights[v] -= THRESHOLD * k
        topples[v] += k
        for j in table[v]:
            if j < 0:
                sink += k
                continue
            heights[j] += k
            if heights[j] >= THRESHOLD and not queued[j]:
                queued[j] = True
                work.append(j)
    return heights, topples, sink


def _stabilize_bulk(
    domain: Domain, heights: np.ndarray, topple_cap: int
) -> tuple[np.ndarray, np.ndarray, int]:
    adjacency = domain.adjacency
    topples = np.zeros_like(heights)
    total = 0
    rounds = 0
    while True:
        k = heights // THRESHOLD
        fired = int(k.sum())
        if fired == 0:
            break
        total += fired
        if total > topple_cap:
            raise ToppleCapExceeded(topple_cap)
        heights = heights - THRESHOLD * k + adjacency @ k
        topples += k
        rounds += 1
    sink = int((topples * domain.sink_edges).sum())
    logger.debug("bulk stabilization: %d topplings in %d rounds", total, rounds)
    return heights, topples, sink


def stabilize(
    domain: Domain,
    sigma: np.ndarray,
    policy: Policy | str = Policy.FIFO,
    topple_cap: int = DEFAULT_TOPPLE_CAP,
    rng: Optional[np.random.Generator] = None,
    spill: bool = False,
) -> ToppleResult:
    """Topple every unstable domain vertex until all heights are at most 3.

    Args:
        domain: Vertices allowed to topple.
        sigma: Heights over the whole graph (only domain entries are toppled).
        policy: Order of topplings. The stable result and the topple
            counts do not depend on it.
        topple_cap: Maximum total number of topplings.
        rng: Source for :attr:`Policy.RANDOM`.
        spill: If true, chips crossing to a materialized exterior vertex land
            on it instead of the sink; only unmaterialized edges feed the sink.

    Returns:
        The :class:`ToppleResult`.

    Raises:
        ToppleCapExceeded: If more than ``topple_cap`` topplings are needed.
    """
    policy = Policy(policy)
    sigma = _check_sigma(domain, sigma)
    local = sigma[domain.indices]

    if policy is Policy.BULK:
        final_local, topples_local, sink = _stabilize_bulk(domain, local, topple_cap)
    else:
        h, t, sink = _stabilize_worklist(domain, local.tolist(), policy, topple_cap, rng)
        final_local = np.asarray(h, dtype=np.int64)
        topples_local = np.asarray(t, dtype=np.int64)

    final = sigma.copy()
    final[domain.indices] = final_local
    topples = np.zeros(len(domain.graph), dtype=np.int64)
    topples[domain.indices] = topples_local
    if spill:
        spilled = np.asarray(domain.spill_matrix @ topples_local, dtype=np.int64)
        final += spilled
        sink -= int(spilled.sum())
    return ToppleResult(
        domain=domain,
        final=final,
        topples=topples,
        sink_mass=int(sink),
        total_topples=int(topples_local.sum()),
    )


def laplacian_check(domain: Domain, sigma: np.ndarray, result: ToppleResult) -> LaplacianCheck:
    """Verify final(x) = sigma(x) - 4T(x) + sum of T(y) over domain neighbours y, exactly."""
    idx = domain.indices
    t = result.topples[idx]
    expected = np.asarray(sigma, dtype=np.int64)[idx] - THRESHOLD * t + domain.adjacency @ t
    bad = np.flatnonzero(expected != result.final[idx])
    if len(bad):
        return LaplacianCheck(False, domain.graph.coord(int(idx[bad[0]])))
    return LaplacianCheck(True)


def is_stable(domain: Domain, heights: np.ndarray) -> bool:
    return bool((np.asarray(heights)[domain.indices] < THRESHOLD).all())


# ── Infinite volume ──────────────────────────────────────────────────


@dataclass
class InfiniteVolumeResult:
    """Odometer trajectory at o over a nested family of domains."""

    trajectory: list[int]
    final: ToppleResult
    topples: np.ndarray


def infinite_volume_run(
    sigma: np.ndarray,
    domains: Sequence[Domain],
    policy: Policy | str = Policy.BULK,
    topple_cap: int = DEFAULT_TOPPLE_CAP,
    rng: Optional[np.random.Generator] = None,
    origin: tuple[int, int] = ORIGIN,
) -> InfiniteVolumeResult:
    """Stabilize one configuration on D_1, then D_2, ... and track u_n(o).

    All domains live in the same graph and must be nested. Mass leaving
    D_n onto materialized vertices stays there, so stage n ends in the
    same state as stabilizing sigma on D_n from scratch.
    """
    if not domains:
        raise ValueError("need at least one domain")
    graph = domains[0].graph
    for inner, outer in zip(domains, domains[1:]):
        if outer.graph is not graph:
            raise ValueError("domains must share one graph")
        if (inner.mask & ~outer.mask).any():
            raise ValueError("domains must be nested")
    o = graph.index(origin)

    heights = np.asarray(sigma, dtype=np.int64)
    total = np.zeros(len(graph), dtype=np.int64)
    trajectory: list[int] = []
    result: Optional[ToppleResult] = None
    for domain in domains:
        result = stabilize(domain, heights, policy, topple_cap, rng, spill=True)
        total += result.topples
        heights = result.final
        trajectory.append(int(THRESHOLD * total[o]))
    assert result is not None
    return InfiniteVolumeResult(trajectory=trajectory, final=result, topples=total)


def nested_levels(n_max: int, half: Half | str = Half.BOTH) -> list[Domain]:
    """Domains SG_1 .. SG_{n_max} inside the level-n_max graph."""
    graph = build(n_max, half)
    return [Domain.level(graph, n, half) for n in range(1, n_max + 1)]


@dataclass
class TwoWaveResult:
    """Odometer at o after stabilizing the plus half, then the minus half."""

    first_wave: int
    second_wave: int
    final: np.ndarray


def two_wave_stabilize(
    sigma: np.ndarray,
    level: int,
    policy: Policy | str = Policy.BULK,
    topple_cap: int = DEFAULT_TOPPLE_CAP,
) -> TwoWaveResult:
    """Stabilize on SG_n^+ and then on SG_n^-, both inside SG_n.

    Chips crossing between the halves through o's neighbours stay in the
    graph; everything else leaving SG_n is lost. The returned configuration
    is stable on the minus half.
    """
    graph = build(level, Half.BOTH)
    o = graph.index(ORIGIN)
    first = stabilize(Domain.level(graph, level, Half.PLUS), sigma, policy, topple_cap, spill=True)
    second = stabilize(
        Domain.level(graph, level, Half.MINUS), first.final, policy, topple_cap, spill=True
    )
    u1 = int(first.odometer[o])
    return TwoWaveResult(first_wave=u1, second_wave=u1 + int(second.odometer[o]), final=second.final)


# ── Explosion trials ─────────────────────────────────────────────────


@dataclass(frozen=True)
class ExplosionThreshold:
    """Which case of the non-stabilization argument a law falls into."""

    delta: float
    sigma0: float

    @property
    def supercritical(self) -> bool:
        return self.delta > 0

    def value(self, volume: int) -> float:
        if self.supercritical:
            return self.delta * volume / 3.0
        return self.sigma0 * math.sqrt(volume) / 3.0

    def holds(self, u_o: int, volume: int) -> bool:
        # u >= delta|V|/3 when supercritical, strict > otherwise
        if self.supercritical:
            return u_o >= self.value(volume)
        return u_o > self.value(volume)


def explosion_threshold(law: HeightLaw) -> ExplosionThreshold:
    """Classify a height law for the explosion experiment.

    Raises:
        ConfigError: If the mean is below 3, or the law is critical but
            degenerate (the constant 3 configuration is already stable).
    """
    delta = law.delta
    if abs(delta) <= _MEAN_TOLERANCE * CRITICAL_DENSITY:
        delta = 0.0
    if delta < 0:
        raise ConfigError(f"height law mean {law.mean} is below the critical density 3")
    if delta == 0 and law.is_degenerate:
        raise ConfigError("the constant configuration 3 is already stable")
    return ExplosionThreshold(delta=delta, sigma0=law.std)


def corner_exit_mass(result: ToppleResult, level: int) -> dict[str, int]:
    """Chips that left SG_n^+ through o, x_n and y_n."""
    graph = result.domain.graph
    x, y, _, _ = corners(level)
    out = {}
    for name, v in (("o", ORIGIN), ("x", x), ("y", y)):
        i = graph.index(v)
        local = result.domain.local_index(v)
        out[name] = int(result.topples[i] * result.domain.sink_edges[local])
    return out


def explosion_trial(
    law: HeightLaw,
    level: int,
    rng: np.random.Generator,
    policy: Policy | str = Policy.BULK,
    topple_cap: int = DEFAULT_TOPPLE_CAP,
) -> dict[str, float | int | bool]:
    """One realization of the excess-mass experiment on SG_n^+.

    Returns a record with the total count N_n, u_n(o), T(o), the sink mass,
    the chips left on SG_n^+, the exit mass per corner, the threshold and
    whether u_n(o) reached it.
    """
    threshold = explosion_threshold(law)
    graph = build(level, Half.PLUS)
    domain = Domain.whole(graph)
    sigma = sample_iid(law, domain, rng)
    result = stabilize(domain, sigma, policy, topple_cap, rng)
    volume = vertex_count(level, Half.PLUS)
    o = graph.index(ORIGIN)
    u_o = int(result.odometer[o])
    exits = corner_exit_mass(result, level)
    return {
        "N_n": int(sigma.sum()),
        "u_o": u_o,
        "T_o": int(result.topples[o]),
        "sink_mass": result.sink_mass,
        "stable_total": int(result.final.sum()),
        "exit_o": exits["o"],
        "exit_x": exits["x"],
        "exit_y": exits["y"],
        "threshold": threshold.value(volume),
        "indicator": threshold.holds(u_o, volume),
    }


__all__ = [
    "CRITICAL_DENSITY",
    "Domain",
    "ExplosionThreshold",
    "InfiniteVolumeResult",
    "LaplacianCheck",
    "THRESHOLD",
    "ToppleResult",
    "TwoWaveResult",
    "corner_exit_mass",
    "explosion_threshold",
    "explosion_trial",
    "heights_from_mapping",
    "infinite_volume_run",
    "is_stable",
    "laplacian_check",
    "nested_levels",
    "sample_iid",
    "stabilize",
    "two_wave_stabilize",
]
