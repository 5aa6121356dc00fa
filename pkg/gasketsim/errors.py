"""Exception hierarchy for gasketsim."""

from __future__ import annotations

from typing import Optional


class GasketSimError(Exception):
    """Base class for all gasketsim errors."""


class CapacityError(GasketSimError):
    """Requested prefractal level exceeds the configured vertex budget."""

    def __init__(self, level: int, vertices: int, budget: int) -> None:
        super().__init__(
            f"level {level} needs {vertices} vertices, budget is {budget}"
        )
        self.level = level
        self.vertices = vertices
        self.budget = budget


class UnknownVertexError(GasketSimError, KeyError):
    """A coordinate is not a vertex of the materialized graph."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class FrontierExceeded(GasketSimError):
    """A walk tried to leave the materialized prefractal.

    The caller must embed the walk in a larger level and retry.
    """

    def __init__(self, vertex, level: Optional[int] = None) -> None:
        where = f" at level {level}" if level is not None else ""
        super().__init__(f"walk left the materialized graph from {vertex}{where}")
        self.vertex = vertex
        self.level = level


class ToppleCapExceeded(GasketSimError):
    """Stabilization performed more topplings (or sweeps) than allowed."""

    def __init__(self, cap: int) -> None:
        super().__init__(f"topple cap {cap} exceeded")
        self.cap = cap


class MissingRotorError(GasketSimError):
    """A rotor required by a predicate or a step is not set."""

    def __init__(self, vertex) -> None:
        super().__init__(f"no rotor at {vertex}")
        self.vertex = vertex


class ConfigError(GasketSimError, ValueError):
    """Invalid run configuration, law, or experiment specification."""


class RenderError(GasketSimError, ValueError):
    """An overlay does not match the vertices of the rendered graph."""
