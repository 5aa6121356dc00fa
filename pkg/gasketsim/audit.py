"""Invariant audit of stabilization results.

Checks stability, conservation, the Laplacian identity and non-negativity
of a finished run and reports coded issues instead of raising, so the CLI
can write the audit next to the result it describes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from gasketsim.divisible import DivisibleResult
from gasketsim.sandpile import THRESHOLD, ToppleResult, laplacian_check

# Relative tolerance for float mass balance
MASS_TOLERANCE = 1e-9


@dataclass
class AuditIssue:
    """A single audit finding."""

    code: str
    severity: str  # "CRITICAL", "WARNING"
    message: str
    vertex: Optional[tuple[int, int]] = None
    fix: str = ""


@dataclass
class AuditResult:
    """Complete audit output."""

    valid: bool
    errors: list[AuditIssue]
    warnings: list[AuditIssue]
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return asdict(self)


class ResultAuditor:
    """Audits abelian and divisible stabilization results.

    Codes:
    - E-STAB-001: a domain vertex is above the stability threshold
    - E-MASS-001: chips are not conserved exactly
    - E-MASS-002: divisible mass balance off by more than the tolerance
    - E-LAP-001: final heights violate the Laplacian identity
    - E-NEG-001: a height or mass is negative
    - W-CONV-001: divisible relaxation stopped at the sweep cap
    """

    def __init__(self) -> None:
        self._errors: list[AuditIssue] = []
        self._warnings: list[AuditIssue] = []

    def audit_topple(self, sigma: np.ndarray, result: ToppleResult) -> AuditResult:
        """Audit an abelian stabilization of ``sigma`` (no spill)."""
        self._reset()
        domain = result.domain
        idx = domain.indices
        final = result.final[idx]

        unstable = np.flatnonzero(final >= THRESHOLD)
        if len(unstable):
            self._add_error(
                "E-STAB-001",
                f"{len(unstable)} vertices hold {THRESHOLD} or more chips",
                vertex=domain.graph.coord(int(idx[unstable[0]])),
                fix="Raise the topple cap or check the toppling policy",
            )

        negative = np.flatnonzero(final < 0)
        if len(negative):
            self._add_error(
                "E-NEG-001",
                "negative height after stabilization",
                vertex=domain.graph.coord(int(idx[negative[0]])),
            )

        before = int(np.asarray(sigma, dtype=np.int64)[idx].sum())
        after = int(final.sum()) + result.sink_mass
        if before != after:
            self._add_error(
                "E-MASS-001",
                f"chips not conserved: {before} in, {after} out",
            )

        check = laplacian_check(domain, sigma, result)
        if not check:
            self._add_error(
                "E-LAP-001",
                "final heights differ from sigma - 4T + sum of neighbour topples",
                vertex=check.vertex,
            )

        return self._build_result(
            kind="abelian",
            domain_size=len(domain),
            total_topples=result.total_topples,
            sink_mass=result.sink_mass,
        )

    def audit_divisible(
        self, sigma: np.ndarray, result: DivisibleResult, epsilon: float, threshold: float = 1.0
    ) -> AuditResult:
        """Audit a divisible relaxation of ``sigma``."""
        self._reset()
        domain = result.domain
        idx = domain.indices
        final = result.final[idx]

        if not result.converged:
            self._add_warning(
                "W-CONV-001",
                f"relaxation stopped after {result.sweeps} sweeps; odometer is a lower bound",
                fix="Raise the sweep cap",
            )
        else:
            limit = threshold * (1.0 + epsilon)
            over = np.flatnonzero(final > limit)
            if len(over):
                self._add_error(
                    "E-STAB-001",
                    f"{len(over)} vertices above {limit} after convergence",
                    vertex=domain.graph.coord(int(idx[over[0]])),
                )

        negative = np.flatnonzero((final < 0) | (result.odometer[idx] < 0))
        if len(negative):
            self._add_error(
                "E-NEG-001",
                "negative mass or odometer",
                vertex=domain.graph.coord(int(idx[negative[0]])),
            )

        before = float(np.asarray(sigma, dtype=np.float64)[idx].sum())
        after = float(final.sum()) + result.sink_mass
        if abs(before - after) > MASS_TOLERANCE * max(before, 1.0):
            self._add_error(
                "E-MASS-002",
                f"mass balance off by {abs(before - after):.3e}",
            )

        return self._build_result(
            kind="divisible",
            domain_size=len(domain),
            sweeps=result.sweeps,
            sink_mass=result.sink_mass,
        )

    # ── Helpers ──────────────────────────────────────────────────────

    def _reset(self) -> None:
        self._errors = []
        self._warnings = []

    def _add_error(
        self, code: str, message: str, vertex: Optional[tuple[int, int]] = None, fix: str = ""
    ) -> None:
        self._errors.append(
            AuditIssue(code=code, severity="CRITICAL", message=message, vertex=vertex, fix=fix)
        )

    def _add_warning(
        self, code: str, message: str, vertex: Optional[tuple[int, int]] = None, fix: str = ""
    ) -> None:
        self._warnings.append(
            AuditIssue(code=code, severity="WARNING", message=message, vertex=vertex, fix=fix)
        )

    def _build_result(self, **metadata) -> AuditResult:
        return AuditResult(
            valid=len(self._errors) == 0,
            errors=list(self._errors),
            warnings=list(self._warnings),
            metadata={
                **metadata,
                "error_count": len(self._errors),
                "warning_count": len(self._warnings),
            },
        )
