"""Exact triangular-lattice coordinates for gasket vertices.

A coordinate ``(a, b)`` stands for the Euclidean point
``(a + b/2, b*sqrt(3)/2)``, so vertex identity never involves floats.
"""

from __future__ import annotations

import math
from enum import IntEnum
from typing import NamedTuple

_SQRT3_2 = math.sqrt(3.0) / 2.0


class LatticeCoord(NamedTuple):
    """A vertex position in the (1,0), (1/2, sqrt(3)/2) lattice basis."""

    a: int
    b: int

    def translate(self, step: tuple[int, int]) -> LatticeCoord:
        return LatticeCoord(self.a + step[0], self.b + step[1])

    def reflect(self) -> LatticeCoord:
        """Mirror image across the vertical axis through the origin."""
        return LatticeCoord(-self.a - self.b, self.b)

    def to_euclidean(self) -> tuple[float, float]:
        return (self.a + self.b / 2.0, self.b * _SQRT3_2)

    def key(self) -> str:
        """String form used as a JSON object key."""
        return f"{self.a},{self.b}"

    @classmethod
    def parse(cls, text: str) -> LatticeCoord:
        """Inverse of :meth:`key`."""
        a, b = text.split(",")
        return cls(int(a), int(b))


ORIGIN = LatticeCoord(0, 0)


class Direction(IntEnum):
    """The six lattice directions, by ascending angle (0 to 300 degrees)."""

    E = 0
    NE = 1
    NW = 2
    W = 3
    SW = 4
    SE = 5

    @property
    def step(self) -> tuple[int, int]:
        return DIRECTION_STEPS[self.value]

    @property
    def opposite(self) -> Direction:
        return Direction((self.value + 3) % 6)

    @property
    def reflected(self) -> Direction:
        """Direction of the mirrored step under :meth:`LatticeCoord.reflect`."""
        return _REFLECTED[self.value]


DIRECTION_STEPS: tuple[tuple[int, int], ...] = (
    (1, 0),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (0, -1),
    (1, -1),
)

_STEP_TO_DIRECTION = {step: Direction(i) for i, step in enumerate(DIRECTION_STEPS)}

_REFLECTED = (
    Direction.W,
    Direction.NW,
    Direction.NE,
    Direction.E,
    Direction.SE,
    Direction.SW,
)


def direction_between(u: tuple[int, int], v: tuple[int, int]) -> Direction:
    """Direction of the unit step from ``u`` to ``v``.

    Raises:
        ValueError: If ``u`` and ``v`` are not lattice neighbours.
    """
    step = (v[0] - u[0], v[1] - u[1])
    try:
        return _STEP_TO_DIRECTION[step]
    except KeyError:
        raise ValueError(f"{u} and {v} are not lattice neighbours") from None


def reflect(v: tuple[int, int]) -> LatticeCoord:
    return LatticeCoord(v[0], v[1]).reflect()


def to_euclidean(v: tuple[int, int]) -> tuple[float, float]:
    """Euclidean image of a lattice coordinate, in double precision."""
    return LatticeCoord(v[0], v[1]).to_euclidean()
