"""Divisible sandpile relaxation on gasket domains with a sink.

A vertex is unstable when its mass exceeds the threshold (1 by default)
by more than the relative tolerance. Each sweep updates every unstable
vertex at once: it keeps the threshold and passes a quarter of the excess
to each ambient neighbour; shares crossing the domain boundary go to the sink.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from gasketsim.errors import ConfigError
from gasketsim.graph import build, vertex_count
from gasketsim.lattice import ORIGIN
from gasketsim.sandpile import Domain
from gasketsim.types import AMBIENT_DEGREE, Half, MassLaw

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-9
DEFAULT_SWEEP_CAP = 200_000

_MEAN_TOLERANCE = 1e-9


@dataclass
class DivisibleResult:
    """Outcome of a divisible relaxation.

    ``final`` and ``odometer`` cover the whole graph; exterior entries of
    ``final`` are passed through from the input.
    """

    domain: Domain
    final: np.ndarray
    odometer: np.ndarray
    sink_mass: float
    converged: bool
    sweeps: int

    def odometer_at(self, v: tuple[int, int]) -> float:
        return float(self.odometer[self.domain.graph.index(v)])


def sample_masses(law: MassLaw, domain: Domain, rng: np.random.Generator) -> np.ndarray:
    masses = np.zeros(len(domain.graph), dtype=np.float64)
    masses[domain.indices] = law.sample(rng, len(domain))
    return masses


def stabilize_divisible(
    domain: Domain,
    sigma: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    sweep_cap: int = DEFAULT_SWEEP_CAP,
    threshold: float = 1.0,
) -> DivisibleResult:
    """Relax a divisible configuration until every mass is at most threshold*(1+epsilon).

    Stops after ``sweep_cap`` sweeps with ``converged=False`` and the
    partial (censored) odometer instead of raising.

    Raises:
        ValueError: If ``epsilon`` or ``threshold`` is not positive, or
            masses are negative or not finite.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (len(domain.graph),):
        raise ValueError("configuration does not match the graph")
    idx = domain.indices
    mass = sigma[idx].copy()
    if not np.isfinite(mass).all() or (mass < 0).any():
        raise ValueError("masses must be finite and non-negative")

    adjacency = domain.adjacency.astype(np.float64)
    sink_edges = domain.sink_edges.astype(np.float64)
    emitted = np.zeros_like(mass)
    limit = threshold * (1.0 + epsilon)
    sink = 0.0
    converged = False
    sweeps = 0
    while sweeps < sweep_cap:
        active = mass > limit
        if not active.any():
            converged = True
            break
        excess = np.where(active, mass - threshold, 0.0)
        share = excess / AMBIENT_DEGREE
        mass = mass - excess + adjacency @ share
        emitted += excess
        sink += float(np.dot(share, sink_edges))
        sweeps += 1
    else:
        converged = not (mass > limit).any()

    if not converged:
        logger.debug("divisible relaxation stopped after %d sweeps", sweeps)
    final = sigma.copy()
    final[idx] = mass
    odometer = np.zeros(len(domain.graph), dtype=np.float64)
    odometer[idx] = emitted
    return DivisibleResult(
        domain=domain,
        final=final,
        odometer=odometer,
        sink_mass=sink,
        converged=converged,
        sweeps=sweeps,
    )


def check_critical_law(law: MassLaw) -> float:
    """Return sigma_0 for a mean-1 law with positive variance.

    Raises:
        ConfigError: If the mean is not 1 or the variance is zero.
    """
    if abs(law.mean - 1.0) > _MEAN_TOLERANCE:
        raise ConfigError(f"mass law must have mean 1, got {law.mean}")
    if law.is_degenerate or law.variance <= 0:
        raise ConfigError("mass law must have positive variance")
    return law.std


def divisible_explosion_trial(
    law: MassLaw,
    level: int,
    rng: np.random.Generator,
    epsilon: float = DEFAULT_EPSILON,
    sweep_cap: int = DEFAULT_SWEEP_CAP,
) -> dict[str, float | int | bool]:
    """One realization of the critical divisible experiment on SG_n^+."""
    sigma0 = check_critical_law(law)
    graph = build(level, Half.PLUS)
    domain = Domain.whole(graph)
    sigma = sample_masses(law, domain, rng)
    result = stabilize_divisible(domain, sigma, epsilon, sweep_cap)
    volume = vertex_count(level, Half.PLUS)
    threshold = sigma0 * math.sqrt(volume) / 3.0
    u_o = result.odometer_at(ORIGIN)
    return {
        "N_n": float(sigma.sum()),
        "u_o": u_o,
        "sink_mass": result.sink_mass,
        "stable_total": float(result.final.sum()),
        "converged": result.converged,
        "sweeps": result.sweeps,
        "threshold": threshold,
        "indicator": u_o > threshold,
    }
