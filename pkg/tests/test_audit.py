"""Tests for gasketsim.audit.ResultAuditor."""

import numpy as np
import pytest

from gasketsim.audit import ResultAuditor
from gasketsim.divisible import stabilize_divisible
from gasketsim.graph import build
from gasketsim.lattice import ORIGIN
from gasketsim.sandpile import Domain, heights_from_mapping, stabilize
from gasketsim.types import Half


@pytest.fixture
def auditor():
    return ResultAuditor()


@pytest.fixture
def toppled(rng):
    graph = build(2, Half.BOTH)
    domain = Domain.whole(graph)
    sigma = rng.integers(0, 8, size=len(graph))
    return sigma, stabilize(domain, sigma)


def _codes(result):
    return {issue.code for issue in result.errors + result.warnings}


class TestToppleAudit:
    """Abelian stabilization audits."""

    def test_valid_result(self, auditor, toppled):
        sigma, result = toppled
        audit = auditor.audit_topple(sigma, result)
        assert audit.valid
        assert audit.errors == []
        assert audit.metadata["kind"] == "abelian"
        assert audit.metadata["total_topples"] == result.total_topples

    def test_unstable_vertex(self, auditor, sg1_plus):
        sigma = heights_from_mapping(sg1_plus, {ORIGIN: 4})
        result = stabilize(Domain.whole(sg1_plus), sigma)
        result.final[sg1_plus.index((1, 1))] = 4
        audit = auditor.audit_topple(sigma, result)
        assert not audit.valid
        assert {"E-STAB-001", "E-MASS-001", "E-LAP-001"} <= _codes(audit)
        stab = next(e for e in audit.errors if e.code == "E-STAB-001")
        assert stab.vertex == (1, 1)
        assert stab.severity == "CRITICAL"

    def test_lost_chips(self, auditor, toppled):
        sigma, result = toppled
        result.sink_mass += 1
        assert _codes(auditor.audit_topple(sigma, result)) == {"E-MASS-001"}

    def test_negative_height(self, auditor, toppled):
        sigma, result = toppled
        result.final[0] = -1
        assert "E-NEG-001" in _codes(auditor.audit_topple(sigma, result))

    def test_auditor_is_reusable(self, auditor, toppled):
        sigma, result = toppled
        result.sink_mass += 1
        assert not auditor.audit_topple(sigma, result).valid
        result.sink_mass -= 1
        assert auditor.audit_topple(sigma, result).valid

    def test_json_dict(self, auditor, toppled):
        sigma, result = toppled
        data = auditor.audit_topple(sigma, result).to_json_dict()
        assert data["valid"] is True
        assert data["metadata"]["error_count"] == 0


class TestDivisibleAudit:
    """Divisible relaxation audits."""

    def test_valid_result(self, auditor, rng):
        graph = build(2, Half.BOTH)
        domain = Domain.whole(graph)
        sigma = rng.uniform(0.0, 2.0, size=len(graph))
        result = stabilize_divisible(domain, sigma, epsilon=1e-9)
        audit = auditor.audit_divisible(sigma, result, epsilon=1e-9)
        assert audit.valid
        assert audit.warnings == []

    def test_unconverged_is_a_warning(self, auditor):
        graph = build(3, Half.PLUS)
        domain = Domain.whole(graph)
        sigma = np.full(len(graph), 5.0)
        result = stabilize_divisible(domain, sigma, sweep_cap=2)
        audit = auditor.audit_divisible(sigma, result, epsilon=1e-9)
        assert audit.valid
        assert _codes(audit) == {"W-CONV-001"}

    def test_tampered_mass(self, auditor, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sigma = np.zeros(len(sg1_plus))
        sigma[sg1_plus.index(ORIGIN)] = 2.0
        result = stabilize_divisible(domain, sigma)
        result.final[sg1_plus.index((1, 1))] = 1.5
        audit = auditor.audit_divisible(sigma, result, epsilon=1e-9)
        assert _codes(audit) == {"E-STAB-001", "E-MASS-002"}

    def test_negative_odometer(self, auditor, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sigma = np.full(len(sg1_plus), 0.5)
        result = stabilize_divisible(domain, sigma)
        result.odometer[0] = -0.1
        assert _codes(auditor.audit_divisible(sigma, result, epsilon=1e-9)) == {"E-NEG-001"}
