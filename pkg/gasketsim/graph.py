"""Exact construction of the Sierpinski gasket prefractals SG_n, SG_n^+ and SG_n^-.

Vertices are stored in canonical order, sorted lexicographically by
``(b, a)``. Neighbour lists follow the anticlockwise cyclic order of the
*ambient* doubly infinite gasket, starting at the smallest direction index.
Inside a prefractal every vertex has its four ambient neighbours except
the frontier corners; their missing slots are ``-1``.
"""

from __future__ import annotations

import json
import logging
from functools import cached_property, lru_cache
from typing import Iterable, Iterator

import numpy as np
from scipy import sparse

from gasketsim.errors import CapacityError, UnknownVertexError
from gasketsim.lattice import (
    DIRECTION_STEPS,
    Direction,
    LatticeCoord,
    reflect,
    to_euclidean,
)
from gasketsim.types import AMBIENT_DEGREE, Half

logger = logging.getLogger(__name__)

DEFAULT_MAX_VERTICES = 4_000_000

CORNER_NAMES = ("x", "y", "z", "t")

_KEY_SHIFT = np.int64(1) << np.int64(32)
_KEY_OFFSET = np.int64(1) << np.int64(31)

_V0 = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
_E0 = np.array(
    [[[0, 0], [1, 0]], [[0, 0], [0, 1]], [[1, 0], [0, 1]]], dtype=np.int64
)

# (dx + 1) * 3 + (dy + 1) -> direction index, -1 for non-steps
_STEP_CODE = np.full(9, -1, dtype=np.int8)
for _d, (_dx, _dy) in enumerate(DIRECTION_STEPS):
    _STEP_CODE[(_dx + 1) * 3 + (_dy + 1)] = _d


def vertex_count(n: int, half: Half = Half.PLUS) -> int:
    """Closed-form number of vertices of the level-n prefractal."""
    plus = (3 ** (n + 1) + 3) // 2
    return 2 * plus - 1 if Half(half) is Half.BOTH else plus


def edge_count(n: int, half: Half = Half.PLUS) -> int:
    """Closed-form number of edges of the level-n prefractal."""
    plus = 3 ** (n + 1)
    return 2 * plus if Half(half) is Half.BOTH else plus


def corners(n: int) -> tuple[LatticeCoord, LatticeCoord, LatticeCoord, LatticeCoord]:
    """The corners x_n, y_n, z_n, t_n of SG_n in lattice coordinates."""
    if n < 0:
        raise ValueError(f"level must be non-negative, got {n}")
    s = 1 << n
    return (
        LatticeCoord(s, 0),
        LatticeCoord(0, s),
        LatticeCoord(-s, s),
        LatticeCoord(-s, 0),
    )


# ── Construction ─────────────────────────────────────────────────────


def _keys(coords: np.ndarray) -> np.ndarray:
    return coords[..., 1] * _KEY_SHIFT + (coords[..., 0] + _KEY_OFFSET)


def _unique_sorted(coords: np.ndarray) -> np.ndarray:
    order = np.lexsort((coords[:, 0], coords[:, 1]))
    ordered = coords[order]
    keep = np.ones(len(ordered), dtype=bool)
    keep[1:] = np.any(ordered[1:] != ordered[:-1], axis=1)
    return ordered[keep]


def _reflect_array(coords: np.ndarray) -> np.ndarray:
    out = coords.copy()
    out[..., 0] = -coords[..., 0] - coords[..., 1]
    return out


def _plus_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """V_n and E_n by the triangle-doubling recursion."""
    verts, edges = _V0, _E0
    for k in range(n):
        s = 1 << k
        shifts = np.array([[0, 0], [s, 0], [0, s]], dtype=np.int64)
        verts = _unique_sorted((verts[None, :, :] + shifts[:, None, :]).reshape(-1, 2))
        edges = (edges[None, :, :, :] + shifts[:, None, None, :]).reshape(-1, 2, 2)
    return verts, edges


def _has_cell(a: int, b: int) -> bool:
    # Unit upward triangle with lower-left corner (a, b) belongs to SG^+
    return a >= 0 and b >= 0 and (a & b) == 0


def _plus_directions(v: tuple[int, int]) -> set[int]:
    a, b = v
    dirs: set[int] = set()
    if _has_cell(a, b):
        dirs.update((Direction.E, Direction.NE))
    if _has_cell(a - 1, b):
        dirs.update((Direction.NW, Direction.W))
    if _has_cell(a, b - 1):
        dirs.update((Direction.SW, Direction.SE))
    return dirs


def ambient_directions(v: tuple[int, int]) -> tuple[Direction, ...]:
    """Directions of the four neighbours of ``v`` in the infinite gasket."""
    dirs = _plus_directions(v)
    dirs.update(Direction(d).reflected for d in _plus_directions(reflect(v)))
    return tuple(Direction(d) for d in sorted(dirs))


def _assemble(level: int, half: Half, verts: np.ndarray, edges: np.ndarray) -> PrefractalGraph:
    keys = _keys(verts)
    tail = np.searchsorted(keys, _keys(edges[:, 0, :]))
    head = np.searchsorted(keys, _keys(edges[:, 1, :]))
    step = edges[:, 1, :] - edges[:, 0, :]
    code = _STEP_CODE[(step[:, 0] + 1) * 3 + (step[:, 1] + 1)].astype(np.int64)

    by_direction = np.full((len(verts), 6), -1, dtype=np.int64)
    by_direction[tail, code] = head
    by_direction[head, (code + 3) % 6] = tail

    present = by_direction >= 0
    degree = present.sum(axis=1)
    if degree.max(initial=0) > AMBIENT_DEGREE:
        raise AssertionError("gasket vertex with more than four neighbours")

    directions = np.empty((len(verts), AMBIENT_DEGREE), dtype=np.int8)
    full = degree == AMBIENT_DEGREE
    order = np.argsort(~present, axis=1, kind="stable")[:, :AMBIENT_DEGREE]
    directions[full] = order[full]
    for i in np.flatnonzero(~full):
        ambient = ambient_directions((int(verts[i, 0]), int(verts[i, 1])))
        directions[i] = ambient
    neighbors = np.take_along_axis(by_direction, directions.astype(np.int64), axis=1)
    if ((neighbors >= 0).sum(axis=1) != degree).any():
        raise AssertionError("materialized neighbour outside the ambient cyclic order")

    pairs = np.sort(np.stack([tail, head], axis=1), axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return PrefractalGraph(
        level=level,
        half=half,
        coords=verts,
        neighbors=neighbors.astype(np.int32),
        directions=directions,
        degree=degree.astype(np.int8),
        edges=pairs.astype(np.int32),
    )


@lru_cache(maxsize=16)
def _build_cached(n: int, half: Half) -> PrefractalGraph:
    verts, edges = _plus_arrays(n)
    if half is Half.MINUS:
        verts = _unique_sorted(_reflect_array(verts))
        edges = _reflect_array(edges)
    elif half is Half.BOTH:
        verts = _unique_sorted(np.concatenate([verts, _reflect_array(verts)]))
        edges = np.concatenate([edges, _reflect_array(edges)])
    graph = _assemble(n, half, verts, edges)
    logger.debug("built level-%d %s gasket: %d vertices", n, half.value, len(graph))
    return graph


def build(
    n: int,
    half: Half | str = Half.PLUS,
    max_vertices: int = DEFAULT_MAX_VERTICES,
) -> PrefractalGraph:
    """Build the level-n prefractal for one half or both halves.

    Args:
        n: Level, n >= 0.
        half: ``plus`` (V_n), ``minus`` (its mirror image) or ``both``
            (the two halves glued at the origin).
        max_vertices: Vertex budget; larger levels are refused.

    Returns:
        An immutable :class:`PrefractalGraph`. Builds are cached, so equal
        arguments return the same object.

    Raises:
        CapacityError: If the level needs more than ``max_vertices`` vertices.
    """
    if n < 0:
        raise ValueError(f"level must be non-negative, got {n}")
    half = Half(half)
    needed = vertex_count(n, half)
    if needed > max_vertices:
        raise CapacityError(n, needed, max_vertices)
    return _build_cached(n, half)


# ── Graph object ─────────────────────────────────────────────────────


class PrefractalGraph:
    """An immutable materialized gasket prefractal.

    Attributes:
        level: Prefractal level n.
        half: Which half (or both) is materialized.
        coords: ``(V, 2)`` lattice coordinates in canonical order.
        neighbors: ``(V, 4)`` neighbour indices in ambient cyclic order,
            ``-1`` where the ambient neighbour is not materialized.
        directions: ``(V, 4)`` direction index of each ambient slot.
        degree: ``(V,)`` number of materialized neighbours.
        edges: ``(E, 2)`` index pairs ``i < j``, sorted.
    """

    def __init__(
        self,
        level: int,
        half: Half,
        coords: np.ndarray,
        neighbors: np.ndarray,
        directions: np.ndarray,
        degree: np.ndarray,
        edges: np.ndarray,
    ) -> None:
        self.level = level
        self.half = half
        self.coords = coords
        self.neighbors = neighbors
        self.directions = directions
        self.degree = degree
        self.edges = edges
        self._keys = _keys(coords)
        for array in (self.coords, self.neighbors, self.directions, self.degree, self.edges, self._keys):
            array.flags.writeable = False

    def __len__(self) -> int:
        return len(self.coords)

    def __contains__(self, v: object) -> bool:
        try:
            self.index(v)  # type: ignore[arg-type]
        except (UnknownVertexError, TypeError, ValueError):
            return False
        return True

    def __iter__(self) -> Iterator[LatticeCoord]:
        return iter(self.vertices())

    def __repr__(self) -> str:
        return f"PrefractalGraph(level={self.level}, half={self.half.value}, vertices={len(self)})"

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    # ── Lookup ───────────────────────────────────────────────────────

    def index(self, v: tuple[int, int]) -> int:
        """Canonical index of a vertex.

        Raises:
            UnknownVertexError: If ``v`` is not materialized.
        """
        a, b = int(v[0]), int(v[1])
        key = np.int64(b) * _KEY_SHIFT + (np.int64(a) + _KEY_OFFSET)
        i = int(np.searchsorted(self._keys, key))
        if i >= len(self._keys) or self._keys[i] != key:
            raise UnknownVertexError(f"{(a, b)} is not a vertex of {self!r}")
        return i

    def indices(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`index`; missing coordinates map to ``-1``."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        keys = _keys(coords)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        found = self._keys[pos] == keys
        return np.where(found, pos, -1)

    def coord(self, i: int) -> LatticeCoord:
        a, b = self.coords[i]
        return LatticeCoord(int(a), int(b))

    def vertices(self) -> list[LatticeCoord]:
        return [LatticeCoord(int(a), int(b)) for a, b in self.coords]

    # ── Neighbourhoods ───────────────────────────────────────────────

    def cyclic_neighbors(self, v: tuple[int, int]) -> list[LatticeCoord]:
        """Materialized neighbours of ``v`` in anticlockwise order.

        Raises:
            UnknownVertexError: If ``v`` is not materialized.
        """
        i = self.index(v)
        return [self.coord(int(j)) for j in self.neighbors[i] if j >= 0]

    def ambient_neighbors(self, v: tuple[int, int]) -> list[LatticeCoord]:
        """All four neighbours of ``v`` in the infinite gasket, in rotor order."""
        i = self.index(v)
        c = self.coord(i)
        return [c.translate(DIRECTION_STEPS[int(d)]) for d in self.directions[i]]

    def is_saturated(self, v: tuple[int, int]) -> bool:
        """Whether every ambient neighbour of ``v`` is materialized."""
        return int(self.degree[self.index(v)]) == AMBIENT_DEGREE

    @cached_property
    def neighbor_table(self) -> tuple[tuple[int, ...], ...]:
        """Neighbour indices as nested tuples, for tight Python loops."""
        return tuple(tuple(row) for row in self.neighbors.tolist())

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency matrix of the materialized graph."""
        n = len(self)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    # ── Sub-structures ───────────────────────────────────────────────

    @property
    def corners(self) -> dict[str, LatticeCoord]:
        """Corners x_n, y_n, z_n, t_n of this level that this half contains."""
        if self.level < 0:
            return {}
        return {
            name: c for name, c in zip(CORNER_NAMES, corners(self.level)) if c in self
        }

    def level_mask(self, n: int, half: Half | str = Half.BOTH) -> np.ndarray:
        """Boolean mask of the vertices of the level-n prefractal.

        Raises:
            ValueError: If that prefractal is not contained in this graph.
        """
        sub = build(n, half)
        idx = self.indices(sub.coords)
        if (idx < 0).any():
            raise ValueError(f"level-{n} {Half(half).value} gasket is not inside {self!r}")
        mask = np.zeros(len(self), dtype=bool)
        mask[idx] = True
        return mask

    def mask_of(self, vertices: Iterable[tuple[int, int]]) -> np.ndarray:
        """Boolean mask of a set of coordinates (all must be materialized)."""
        mask = np.zeros(len(self), dtype=bool)
        for v in vertices:
            mask[self.index(v)] = True
        return mask

    # ── Export ───────────────────────────────────────────────────────

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "half": self.half.value,
            "vertices": self.coords.tolist(),
            "edges": self.edges.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":")) + "\n"


# ── Cut sets and boundaries ──────────────────────────────────────────


def cut_set(n: int) -> frozenset[LatticeCoord]:
    """S_n: the vertices of SG_n without its four corners."""
    graph = build(n, Half.BOTH)
    return frozenset(graph.vertices()) - frozenset(corners(n))


def cut_set_mask(graph: PrefractalGraph, n: int) -> np.ndarray:
    """Boolean mask of S_n inside a (larger) both-halves graph."""
    mask = graph.level_mask(n, Half.BOTH)
    for c in corners(n):
        mask[graph.index(c)] = False
    return mask


def outer_boundary(
    graph: PrefractalGraph, region: Iterable[tuple[int, int]]
) -> frozenset[LatticeCoord]:
    """Vertices outside ``region`` with a materialized neighbour inside it."""
    members = {LatticeCoord(int(v[0]), int(v[1])) for v in region}
    boundary: set[LatticeCoord] = set()
    for v in members:
        for j in graph.neighbors[graph.index(v)]:
            if j >= 0:
                c = graph.coord(int(j))
                if c not in members:
                    boundary.add(c)
    return frozenset(boundary)


def outer_boundary_mask(graph: PrefractalGraph, mask: np.ndarray) -> np.ndarray:
    """Vectorized :func:`outer_boundary` on a boolean vertex mask."""
    nbrs = graph.neighbors[mask]
    hit = np.zeros(len(graph), dtype=bool)
    hit[nbrs[nbrs >= 0]] = True
    return hit & ~mask


def euclidean_coords(graph: PrefractalGraph) -> np.ndarray:
    """``(V, 2)`` float array of Euclidean vertex positions."""
    c = graph.coords.astype(np.float64)
    return np.stack([c[:, 0] + c[:, 1] / 2.0, c[:, 1] * (np.sqrt(3.0) / 2.0)], axis=1)


__all__ = [
    "CORNER_NAMES",
    "DEFAULT_MAX_VERTICES",
    "PrefractalGraph",
    "ambient_directions",
    "build",
    "corners",
    "cut_set",
    "cut_set_mask",
    "edge_count",
    "euclidean_coords",
    "outer_boundary",
    "outer_boundary_mask",
    "to_euclidean",
    "vertex_count",
]
