"""Tests for gasketsim.rotor: stepping, walk runners, reflecting boundaries."""

import numpy as np
import pytest

from gasketsim.errors import FrontierExceeded, MissingRotorError
from gasketsim.graph import build, corners, cut_set, cut_set_mask
from gasketsim.lattice import ORIGIN
from gasketsim.rotor import (
    CapExceeded,
    Exited,
    LazyWalk,
    Returned,
    RotorConfig,
    WalkState,
    corner_reflecting_indices,
    force_reflecting,
    is_reflecting,
    reflecting_at_level,
    reflecting_rotors,
    run_steps,
    run_until_exit,
    run_until_return,
    sample_config,
    smallest_reflecting_level,
    step,
    trace_to_csv,
)
from gasketsim.types import Half, RotorLaw


def _walk(graph, mapping=None, index=0, at=ORIGIN):
    rotors = RotorConfig.constant(graph, index)
    for v, r in (mapping or {}).items():
        rotors[v] = r
    return WalkState.start(graph, rotors, at)


class TestRotorConfig:
    """Rotor configurations over a graph."""

    def test_constant(self, sg1):
        config = RotorConfig.constant(sg1, 2)
        assert len(config) == len(sg1)
        assert config[ORIGIN] == 2

    def test_unset_rotor(self, sg1):
        config = RotorConfig(sg1)
        with pytest.raises(MissingRotorError):
            config[ORIGIN]
        assert len(config) == 0

    def test_out_of_range_index(self, sg1):
        config = RotorConfig(sg1)
        with pytest.raises(ValueError):
            config[ORIGIN] = 4

    def test_from_mapping(self, sg1):
        config = RotorConfig.from_mapping(sg1, {"0,0": 3, (1, 0): 1})
        assert config[ORIGIN] == 3
        assert config[(1, 0)] == 1
        assert len(config) == 2

    def test_points_to(self, sg2):
        config = force_reflecting(sg2, RotorConfig(sg2), 2)
        assert config.points_to((4, 0)) == (4, 1)

    def test_json_export(self, sg1):
        config = RotorConfig.from_mapping(sg1, {"-1,0": 2})
        assert config.to_json_dict() == {"-1,0": 2}

    def test_remap_into_larger_graph(self, sg1, sg2):
        config = RotorConfig.constant(sg1, 1).remap(sg2)
        assert config[(2, 0)] == 1
        assert config.indices[sg2.index((3, 0))] == -1

    def test_sample_uses_law(self, sg3, rng):
        law = RotorLaw(probabilities=(0.97, 0.01, 0.01, 0.01))
        config = sample_config(law, sg3, rng)
        assert (config.indices == 0).mean() > 0.85


class TestStep:
    """The rotor-walk step rule."""

    def test_all_zero_rotors_climb_the_axis(self, sg2):
        w = _walk(sg2)
        trace = run_steps(w, 3)
        assert [(a, b) for _, a, b in trace] == [(0, 0), (0, 1), (0, 2), (0, 3)]
        assert [t for t, _, _ in trace] == [0, 1, 2, 3]

    def test_step_advances_rotor_then_moves(self, sg1):
        w = _walk(sg1)
        step(w)
        assert w.rotors[ORIGIN] == 1
        assert w.coord == (0, 1)
        assert w.time == 1

    def test_rotor_cycles_through_all_neighbours(self, sg1):
        departures = []
        w = _walk(sg1, index=0)
        for _ in range(4):
            w.position = sg1.index(ORIGIN)
            step(w)
            departures.append(w.coord)
        assert departures == [(0, 1), (-1, 1), (-1, 0), (1, 0)]

    def test_frontier_leaves_state_unchanged(self, sg2):
        w = _walk(sg2, {(4, 0): 3}, at=(4, 0))
        with pytest.raises(FrontierExceeded) as exc:
            step(w)
        assert exc.value.vertex == (4, 0)
        assert w.rotors[(4, 0)] == 3
        assert w.time == 0
        assert w.coord == (4, 0)

    def test_missing_rotor(self, sg1):
        w = WalkState.start(sg1, RotorConfig(sg1))
        with pytest.raises(MissingRotorError):
            step(w)

    def test_start_counts_as_a_visit(self, sg1):
        w = _walk(sg1)
        assert w.visit_count(ORIGIN) == 1

    def test_trace_csv(self):
        text = trace_to_csv([(0, 0, 0), (1, 0, 1)])
        assert text == "t,a,b\n0,0,0\n1,0,1\n"


class TestWalkRunners:
    """Return and exit runners."""

    def test_two_step_return(self, sg2):
        w = _walk(sg2, {ORIGIN: 3, (1, 0): 2})
        assert run_until_return(w) == Returned(2)
        assert w.coord == ORIGIN

    def test_cap_exceeded_keeps_state(self, sg2):
        w = _walk(sg2)
        outcome = run_until_return(w, step_cap=2)
        assert outcome == CapExceeded(2)
        assert w.time == 2
        assert w.coord == (0, 2)

    def test_return_needs_start_at_origin(self, sg2):
        w = _walk(sg2, at=(1, 0))
        with pytest.raises(ValueError):
            run_until_return(w, origin=ORIGIN)

    def test_singleton_region_exits_after_one_step(self, sg1):
        w = _walk(sg1)
        assert run_until_exit(w, [ORIGIN]) == Exited(1, (0, 1))

    def test_exit_cap(self, sg3):
        w = _walk(sg3)
        assert isinstance(run_until_exit(w, cut_set(2), step_cap=1), CapExceeded)

    def test_fast_runner_matches_single_steps(self, sg3, rng):
        rotors = sample_config(RotorLaw(), sg3, rng)
        fast = WalkState.start(sg3, rotors.copy())
        slow = WalkState.start(sg3, rotors.copy())
        inside = cut_set_mask(sg3, 2)
        run_until_exit(fast, inside, step_cap=500, stop_on_return=False)
        for _ in range(fast.time):
            step(slow)
        assert slow.position == fast.position
        assert np.array_equal(slow.rotors.indices, fast.rotors.indices)
        assert np.array_equal(slow.visits, fast.visits)

    def test_departures_are_fair(self, sg3, rng):
        """Each vertex sends its walker to its neighbours in turn."""
        rotors = sample_config(RotorLaw(), sg3, rng)
        initial = rotors.copy()
        w = WalkState.start(sg3, rotors)
        inside = cut_set_mask(sg3, 2)
        run_until_exit(w, inside, step_cap=2000, stop_on_return=False)
        counts = np.zeros((len(sg3), 4), dtype=int)
        replay = WalkState.start(sg3, initial)
        for _ in range(w.time):
            i = replay.position
            step(replay)
            counts[i, replay.rotors.indices[i]] += 1
        used = counts.sum(axis=1) > 0
        spread = counts[used].max(axis=1) - counts[used].min(axis=1)
        assert spread.max() <= 1


class TestReflecting:
    """Reflecting boundaries of the cut sets S_n."""

    def test_corner_indices(self):
        for n in (1, 2, 3):
            assert corner_reflecting_indices(n) == (1, 1, 1, 3)

    def test_exactly_one_reflecting_state_per_corner(self, sg3):
        inside = cut_set_mask(sg3, 2)
        for c in corners(2):
            assert len(reflecting_rotors(sg3, inside, c)) == 1

    def test_forced_configuration_is_reflecting(self, sg3, rng):
        rotors = force_reflecting(sg3, sample_config(RotorLaw(), sg3, rng), 2)
        assert reflecting_at_level(sg3, rotors, 2)
        assert is_reflecting(sg3, cut_set(2), rotors)

    def test_one_wrong_corner_breaks_reflection(self, sg3):
        rotors = force_reflecting(sg3, RotorConfig.constant(sg3, 0), 2)
        rotors[(4, 0)] = 2
        assert not reflecting_at_level(sg3, rotors, 2)

    def test_level_graph_suffices(self, sg2):
        rotors = force_reflecting(sg2, RotorConfig.constant(sg2, 0), 2)
        assert reflecting_at_level(sg2, rotors, 2)

    def test_missing_boundary_rotor(self, sg3):
        with pytest.raises(MissingRotorError):
            reflecting_at_level(sg3, RotorConfig(sg3), 2)

    def test_smallest_reflecting_level(self, sg3):
        rotors = RotorConfig.constant(sg3, 0)
        force_reflecting(sg3, rotors, 2)
        assert smallest_reflecting_level(sg3, rotors, 3) == 2

    def test_smallest_reflecting_level_none(self, sg2):
        rotors = RotorConfig.constant(sg2, 0)
        assert smallest_reflecting_level(sg2, rotors, 2) is None

    @pytest.mark.parametrize("n", [1, 2])
    def test_walk_returns_before_exiting(self, n, rng):
        """Inside a reflecting cut set, walks from every vertex return first."""
        graph = build(n + 1, Half.BOTH)
        inside = cut_set_mask(graph, n)
        region = inside.copy()
        for c in corners(n):
            region[graph.index(c)] = True
        for trial in range(20):
            base = force_reflecting(graph, sample_config(RotorLaw(), graph, rng), n)
            for i in np.flatnonzero(inside)[trial % 3 :: 3]:
                w = WalkState(graph=graph, position=int(i), rotors=base.copy())
                outcome = run_until_exit(w, region)
                assert isinstance(outcome, Returned)


class TestLazyWalk:
    """Walks on the infinite gasket that grow the graph on demand."""

    def test_growth_keeps_walk_consistent(self):
        walk = LazyWalk(RotorLaw(), np.random.default_rng(3), start_level=1, max_level=10)
        trace = walk.run_steps(200)
        assert len(trace) == 201
        assert walk.state.time == 200
        for (_, a0, b0), (_, a1, b1) in zip(trace, trace[1:]):
            assert (a1 - a0, b1 - b0) in {(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)}

    def test_grow_carries_state_over(self):
        walk = LazyWalk(RotorLaw(), np.random.default_rng(0), start_level=1, max_level=4)
        walk.run_steps(5)
        before = walk.state
        old_initial = walk.initial.to_json_dict()
        old_rotors = before.rotors.to_json_dict()
        walk.grow()
        after = walk.state
        assert walk.graph.level == before.graph.level + 1
        assert after.coord == before.coord
        assert after.time == before.time
        assert after.visits.sum() == before.visits.sum()
        # old rotors keep their values, new vertices get fresh draws
        new_initial = walk.initial.to_json_dict()
        assert {k: new_initial[k] for k in old_initial} == old_initial
        new_rotors = after.rotors.to_json_dict()
        assert {k: new_rotors[k] for k in old_rotors} == old_rotors
        assert len(after.rotors) == len(walk.graph)

    def test_max_level_enforced(self):
        walk = LazyWalk(RotorLaw(), np.random.default_rng(0), start_level=1, max_level=1)
        with pytest.raises(FrontierExceeded):
            walk.run_steps(10_000)

    def test_same_seed_same_walk(self):
        a = LazyWalk(RotorLaw(), np.random.default_rng(11), max_level=10).run_steps(300)
        b = LazyWalk(RotorLaw(), np.random.default_rng(11), max_level=10).run_steps(300)
        assert a == b

    def test_returns_with_reflecting_start(self):
        walk = LazyWalk(RotorLaw(), np.random.default_rng(5), start_level=3, max_level=8)
        force_reflecting(walk.graph, walk.state.rotors, 2)
        force_reflecting(walk.graph, walk.initial, 2)
        outcome = walk.run_until_return(step_cap=10**6)
        assert isinstance(outcome, Returned)
        assert walk.smallest_reflecting_level() is not None
