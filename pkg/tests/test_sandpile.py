"""Tests for gasketsim.sandpile: abelian stabilization and explosion trials."""

import numpy as np
import pytest

from gasketsim.errors import ConfigError, ToppleCapExceeded
from gasketsim.graph import build
from gasketsim.lattice import ORIGIN
from gasketsim.sandpile import (
    THRESHOLD,
    Domain,
    corner_exit_mass,
    explosion_threshold,
    explosion_trial,
    heights_from_mapping,
    infinite_volume_run,
    is_stable,
    laplacian_check,
    nested_levels,
    sample_iid,
    stabilize,
    two_wave_stabilize,
)
from gasketsim.types import Half, HeightLaw, Policy

ALL_POLICIES = [Policy.FIFO, Policy.LIFO, Policy.RANDOM, Policy.BULK]


class TestDomain:
    """Domains and their sink edges."""

    def test_whole_plus_half_sink_edges(self, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sinks = dict(zip(sg1_plus.vertices(), domain.sink_edges.tolist()))
        assert sinks[ORIGIN] == 2
        assert sinks[(2, 0)] == 2
        assert sinks[(1, 1)] == 0

    def test_level_domain_inside_larger_graph(self, sg3):
        domain = Domain.level(sg3, 2, Half.PLUS)
        assert len(domain) == 15
        # o loses its two minus-half neighbours to the sink
        assert domain.sink_edges[domain.local_index(ORIGIN)] == 2

    def test_local_index_outside(self, sg2):
        domain = Domain.of(sg2, [ORIGIN])
        with pytest.raises(ValueError):
            domain.local_index((1, 0))


class TestStabilizeGolden:
    """Hand-derived stabilizations on SG_1^+."""

    def test_single_topple_at_origin(self, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sigma = heights_from_mapping(sg1_plus, {ORIGIN: 4})
        result = stabilize(domain, sigma)
        final = dict(zip(sg1_plus.vertices(), result.final.tolist()))
        assert final[ORIGIN] == 0
        assert final[(1, 0)] == 1
        assert final[(0, 1)] == 1
        assert result.topples_at(ORIGIN) == 1
        assert result.odometer_at(ORIGIN) == 4
        assert result.sink_mass == 2

    @pytest.mark.parametrize("policy", ALL_POLICIES)
    def test_all_fours(self, sg1_plus, policy):
        domain = Domain.whole(sg1_plus)
        sigma = np.full(len(sg1_plus), 4, dtype=np.int64)
        result = stabilize(domain, sigma, policy, rng=np.random.default_rng(1))
        assert result.final.tolist() == [2] * 6
        topples = dict(zip(sg1_plus.vertices(), result.topples.tolist()))
        assert topples == {
            (0, 0): 2,
            (2, 0): 2,
            (0, 2): 2,
            (1, 0): 3,
            (0, 1): 3,
            (1, 1): 3,
        }
        assert result.sink_mass == 12
        assert result.total_topples == 15

    def test_stable_input_is_untouched(self, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sigma = np.full(len(sg1_plus), 3, dtype=np.int64)
        result = stabilize(domain, sigma)
        assert result.total_topples == 0
        assert np.array_equal(result.final, sigma)


class TestStabilizeProperties:
    """Abelian property, conservation and the Laplacian identity."""

    @pytest.mark.parametrize("policy", ALL_POLICIES)
    def test_matches_naive_oracle(self, sg2, rng, naive_topple, policy):
        domain = Domain.whole(sg2)
        sigma = rng.integers(0, 9, size=len(sg2))
        result = stabilize(domain, sigma, policy, rng=np.random.default_rng(2))
        heights, topples, sink = naive_topple(sg2, domain.mask, sigma)
        assert result.final.tolist() == heights
        assert result.topples.tolist() == topples
        assert result.sink_mass == sink

    def test_policies_agree_on_large_input(self, rng):
        graph = build(4, Half.PLUS)
        domain = Domain.whole(graph)
        sigma = rng.integers(0, 7, size=len(graph))
        results = [stabilize(domain, sigma, p, rng=np.random.default_rng(3)) for p in ALL_POLICIES]
        for other in results[1:]:
            assert np.array_equal(results[0].final, other.final)
            assert np.array_equal(results[0].topples, other.topples)

    def test_sequential_orders_agree_on_many_instances(self, rng):
        graph = build(4, Half.PLUS)
        domain = Domain.whole(graph)
        for seed in range(100):
            sigma = rng.integers(0, 8, size=len(graph))
            fifo = stabilize(domain, sigma, Policy.FIFO)
            for policy in (Policy.LIFO, Policy.RANDOM):
                other = stabilize(domain, sigma, policy, rng=np.random.default_rng(seed))
                assert np.array_equal(fifo.final, other.final)
                assert np.array_equal(fifo.topples, other.topples)
                assert laplacian_check(domain, sigma, other)
                assert int(sigma.sum()) == int(other.final.sum()) + other.sink_mass
            assert laplacian_check(domain, sigma, fifo)

    def test_more_chips_never_topple_less(self, rng):
        graph = build(4, Half.PLUS)
        domain = Domain.whole(graph)
        for _ in range(100):
            base = rng.integers(0, 6, size=len(graph))
            extra = base + rng.integers(0, 3, size=len(graph))
            low = stabilize(domain, base)
            high = stabilize(domain, extra)
            assert (low.topples <= high.topples).all()

    def test_conservation_and_laplacian(self, rng):
        graph = build(3, Half.BOTH)
        domain = Domain.whole(graph)
        sigma = rng.integers(0, 8, size=len(graph))
        result = stabilize(domain, sigma, Policy.BULK)
        assert int(sigma.sum()) == int(result.final.sum()) + result.sink_mass
        assert laplacian_check(domain, sigma, result)
        assert is_stable(domain, result.final)
        assert (result.final >= 0).all()

    def test_laplacian_check_reports_vertex(self, sg1_plus):
        domain = Domain.whole(sg1_plus)
        sigma = heights_from_mapping(sg1_plus, {ORIGIN: 4})
        result = stabilize(domain, sigma)
        result.final[sg1_plus.index((1, 1))] += 1
        check = laplacian_check(domain, sigma, result)
        assert not check
        assert check.vertex == (1, 1)

    def test_exit_mass_sums_to_sink(self, rng):
        graph = build(3, Half.PLUS)
        domain = Domain.whole(graph)
        result = stabilize(domain, rng.integers(0, 8, size=len(graph)))
        assert int(result.exit_mass().sum()) == result.sink_mass

    def test_subdomain_sends_boundary_chips_to_sink(self, sg2):
        domain = Domain.of(sg2, [ORIGIN])
        sigma = heights_from_mapping(sg2, {ORIGIN: 8})
        result = stabilize(domain, sigma)
        assert result.topples_at(ORIGIN) == 2
        assert result.sink_mass == 8
        assert result.final[sg2.index((1, 0))] == 0

    def test_spill_lands_on_exterior_vertices(self, sg2):
        domain = Domain.of(sg2, [ORIGIN])
        sigma = heights_from_mapping(sg2, {ORIGIN: 4})
        result = stabilize(domain, sigma, spill=True)
        assert result.final.dtype == np.int64
        for v in [(1, 0), (0, 1), (-1, 1), (-1, 0)]:
            assert result.final[sg2.index(v)] == 1
        assert result.sink_mass == 0

    def test_topple_cap(self, sg2):
        domain = Domain.whole(sg2)
        sigma = np.full(len(sg2), 7, dtype=np.int64)
        with pytest.raises(ToppleCapExceeded):
            stabilize(domain, sigma, topple_cap=5)
        with pytest.raises(ToppleCapExceeded):
            stabilize(domain, sigma, Policy.BULK, topple_cap=5)

    def test_rejects_negative_heights(self, sg1_plus):
        sigma = np.zeros(len(sg1_plus), dtype=np.int64)
        sigma[0] = -1
        with pytest.raises(ValueError):
            stabilize(Domain.whole(sg1_plus), sigma)

    def test_rejects_float_heights(self, sg1_plus):
        with pytest.raises(ValueError):
            stabilize(Domain.whole(sg1_plus), np.zeros(len(sg1_plus)))


class TestInfiniteVolume:
    """Staged stabilization over nested domains."""

    def test_trajectory_is_monotone_and_matches_scratch(self, rng):
        domains = nested_levels(3, Half.BOTH)
        sigma = sample_iid(HeightLaw(support=[(2, 0.5), (5, 0.5)]), domains[-1], rng)
        run = infinite_volume_run(sigma, domains)
        assert run.trajectory == sorted(run.trajectory)
        scratch = stabilize(domains[-1], sigma)
        assert run.trajectory[-1] == scratch.odometer_at(ORIGIN)
        assert np.array_equal(run.final.final, scratch.final)
        assert np.array_equal(run.topples, scratch.topples)

    def test_stable_configuration_never_topples(self):
        domains = nested_levels(2, Half.BOTH)
        sigma = np.full(len(domains[-1].graph), 3, dtype=np.int64)
        run = infinite_volume_run(sigma, domains)
        assert run.trajectory == [0, 0]
        assert np.array_equal(run.final.final, sigma)

    def test_all_fours_trajectory_matches_naive_oracle(self, naive_topple):
        """sigma = 4 everywhere on SG_1 .. SG_3: u_n(o) against single-topple stabilization on each SG_n."""
        domains = nested_levels(3, Half.BOTH)
        graph = domains[-1].graph
        sigma = np.full(len(graph), 4, dtype=np.int64)
        o = graph.index(ORIGIN)
        expected = []
        for domain in domains:
            _, topples, _ = naive_topple(graph, domain.mask, sigma)
            expected.append(THRESHOLD * topples[o])
        for policy in (Policy.FIFO, Policy.BULK):
            run = infinite_volume_run(sigma, domains, policy)
            assert run.trajectory == expected
        assert expected == sorted(expected)
        assert expected[0] > 0

    def test_rejects_non_nested(self, sg2):
        inner = Domain.of(sg2, [(1, 0)])
        outer = Domain.of(sg2, [ORIGIN])
        with pytest.raises(ValueError):
            infinite_volume_run(np.zeros(len(sg2), dtype=np.int64), [inner, outer])

    def test_two_waves_only_increase(self, rng):
        graph = build(3, Half.BOTH)
        sigma = sample_iid(HeightLaw(support=[(3, 0.5), (4, 0.5)]), Domain.whole(graph), rng)
        waves = two_wave_stabilize(sigma, 3)
        assert waves.second_wave >= waves.first_wave
        minus = Domain.level(graph, 3, Half.MINUS)
        assert is_stable(minus, waves.final)


class TestExplosion:
    """Threshold classification and single explosion trials."""

    def test_supercritical_threshold(self, supercritical_law):
        t = explosion_threshold(supercritical_law)
        assert t.supercritical
        assert t.delta == pytest.approx(0.5)
        assert t.value(15) == pytest.approx(2.5)
        assert t.holds(3, 15)
        assert not t.holds(2, 15)

    def test_critical_threshold(self, critical_law):
        t = explosion_threshold(critical_law)
        assert not t.supercritical
        assert t.sigma0 == pytest.approx(1.0)
        assert t.value(9) == pytest.approx(1.0)
        assert not t.holds(1, 9)
        assert t.holds(2, 9)

    def test_subcritical_rejected(self):
        with pytest.raises(ConfigError):
            explosion_threshold(HeightLaw(support=[(2, 1.0)]))

    def test_constant_three_rejected(self):
        with pytest.raises(ConfigError):
            explosion_threshold(HeightLaw(support=[(3, 1.0)]))

    def test_constant_above_three_is_supercritical(self):
        t = explosion_threshold(HeightLaw(support=[(4, 1.0)]))
        assert t.delta == pytest.approx(1.0)
        assert t.sigma0 == 0.0

    def test_trial_record(self, supercritical_law, rng):
        record = explosion_trial(supercritical_law, 3, rng)
        assert record["u_o"] == THRESHOLD * record["T_o"]
        assert record["N_n"] == record["stable_total"] + record["sink_mass"]
        assert record["exit_o"] + record["exit_x"] + record["exit_y"] == record["sink_mass"]
        assert record["indicator"] == (record["u_o"] >= record["threshold"])

    def test_corner_exit_mass(self, sg1_plus):
        domain = Domain.whole(sg1_plus)
        result = stabilize(domain, np.full(len(sg1_plus), 4, dtype=np.int64))
        assert corner_exit_mass(result, 1) == {"o": 4, "x": 4, "y": 4}

    def test_explosion_grows_with_level(self, supercritical_law):
        """Supercritical laws eventually topple the origin many times."""
        u = []
        for level in (2, 4, 6):
            rng = np.random.default_rng(level)
            u.append(explosion_trial(supercritical_law, level, rng)["u_o"])
        assert u[-1] > u[0]
