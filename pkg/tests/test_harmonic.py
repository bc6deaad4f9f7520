"""Test the harmonic-measure solver, its estimators and limits."""
import dataclasses

import numpy as np
import pytest

from sdlalab.harmonic import (
    AggregateSet,
    CeilingMode,
    IncrementalField,
    PreconditionError,
    SideBoundary,
    SolverBackend,
    SolverError,
    SolverSettings,
    default_domain,
    default_height,
    field_limit,
    hm_edge_limit,
    hm_outer_point,
    hm_point,
    mass_balance,
    mc_hm_estimate,
    solve_hitting_field,
    solve_potential,
    verify_height_bound,
)
from sdlalab.lattice import BoxRegion, DirectedEdge, Site


def up(x1, x2=0):
    return DirectedEdge(Site(x1, x2), Site(x1, x2 + 1))


class TestAggregateSet:
    """Test frontier bookkeeping of aggregate sets."""

    def test_floor_is_always_contained(self):
        B = AggregateSet()
        assert B.contains(Site(100, 0))
        assert not B.contains(Site(0, 1))

    def test_column_frontier(self, column3):
        edges = column3.frontier_edges()
        assert up(0, 3) in edges
        assert DirectedEdge(Site(0, 2), Site(1, 2)) in edges
        assert all(not column3.contains(e.head) for e in edges)

    def test_floor_range_adds_floor_edges(self, column3):
        edges = column3.frontier_edges((-2, 2))
        assert up(-2) in edges and up(2) in edges
        assert up(0) not in edges

    def test_connected_to_floor(self, lshape):
        assert lshape.connected_to_floor()
        assert not AggregateSet.of([Site(0, 3)]).connected_to_floor()

    def test_default_height(self):
        assert default_height(3) == 10


class TestExactField:
    """Test the exact finite-N field."""

    def test_floor_only_measure_is_one_per_column(self):
        f = solve_hitting_field(AggregateSet(), 4)
        values = [f.value(up(x)) for x in range(-5, 6)]
        assert values == pytest.approx([1.0] * len(values), abs=1e-6)

    def test_floor_only_translation_invariant(self):
        f = solve_hitting_field(AggregateSet(), 6)
        assert f.point(Site(-3, 0)) == pytest.approx(f.point(Site(4, 0)), abs=1e-6)

    def test_column_is_mirror_symmetric(self, column3):
        f = solve_hitting_field(column3, 10)
        left = DirectedEdge(Site(0, 2), Site(-1, 2))
        right = DirectedEdge(Site(0, 2), Site(1, 2))
        assert f.value(left) == pytest.approx(f.value(right), abs=1e-6)
        assert f.value(up(-1)) == pytest.approx(f.value(up(1)), abs=1e-6)

    def test_column_shadows_its_neighbors(self, column3):
        f = solve_hitting_field(column3, 10)
        assert f.point(Site(0, 3)) > 1.0
        assert f.value(up(1)) < 1.0
        assert f.value(up(0, 3)) > f.value(DirectedEdge(Site(0, 1), Site(1, 1)))

    def test_values_non_negative(self, lshape):
        f = solve_hitting_field(lshape, 8)
        assert all(v >= 0.0 for v in f.values.values())
        assert f.truncation_error_estimate >= 0.0

    def test_N_must_exceed_height(self, column3):
        with pytest.raises(PreconditionError):
            solve_hitting_field(column3, 3)

    def test_aggregate_outside_domain(self, column3):
        with pytest.raises(PreconditionError):
            solve_hitting_field(column3, 6, BoxRegion(5, 20, 0, 6))

    def test_point_needs_member(self, column3):
        with pytest.raises(PreconditionError):
            hm_point(column3, Site(0, 5), 10)

    def test_outer_point(self, column3):
        assert hm_outer_point(column3, Site(0, 4), 10) > 0.0
        with pytest.raises(PreconditionError):
            hm_outer_point(column3, Site(5, 5), 10)

    def test_direct_backend_agrees(self, lshape, fast_settings):
        direct = dataclasses.replace(fast_settings, backend=SolverBackend.DIRECT)
        a = solve_hitting_field(lshape, 6, settings=fast_settings)
        b = solve_hitting_field(lshape, 6, settings=direct)
        for e in a.edges():
            assert a.value(e) == pytest.approx(b.value(e), abs=1e-6)

    def test_larger_set_never_raises_a_shared_edge(self, lshape, fast_settings):
        small = AggregateSet.of([Site(0, 1), Site(0, 2)])
        dom = default_domain(lshape, 8, fast_settings)
        f_small = solve_hitting_field(small, 8, dom, settings=fast_settings)
        f_large = solve_hitting_field(lshape, 8, dom, settings=fast_settings)
        shared = [e for e in f_small.edges() if e in f_large.values]
        assert up(0, 2) in shared
        for e in shared:
            assert f_large.value(e) <= f_small.value(e) + 1e-7

    def test_warm_start_matches_cold(self, lshape, fast_settings):
        dom = default_domain(lshape, 6, fast_settings)
        cold = solve_potential(lshape, 6, dom, fast_settings)
        warm = solve_potential(lshape.with_site(Site(0, 3)), 6, dom, fast_settings, initial=cold.values)
        again = solve_potential(lshape.with_site(Site(0, 3)), 6, dom, fast_settings)
        assert np.allclose(warm.values, again.values, atol=1e-7)


class TestMassBalance:
    """Test conservation of the mass emitted from L_N."""

    def test_periodic_kernel_loses_nothing(self, column3):
        f = solve_hitting_field(column3, 10)
        mb = mass_balance(f)
        assert mb.lost == pytest.approx(0.0, abs=1e-8)
        assert abs(mb.defect) < 1e-6 * mb.emitted
        assert mb.frontier > 0.0 and mb.floor > 0.0

    def test_absorbing_boundaries_report_loss(self, column3):
        settings = SolverSettings(sides=SideBoundary.ABSORBING, ceiling=CeilingMode.ABSORBING)
        f = solve_hitting_field(column3, 8, settings=settings)
        mb = mass_balance(f)
        assert mb.lost > 0.0
        assert abs(mb.defect) < 1e-6 * mb.emitted

    def test_floor_only_emission_reaches_floor(self):
        mb = mass_balance(solve_hitting_field(AggregateSet(), 4))
        assert mb.frontier == 0.0
        assert mb.floor == pytest.approx(mb.emitted, rel=1e-6)


class TestMonteCarlo:
    """Test the walk estimator against the exact solve."""

    def test_floor_point_estimate(self):
        rng = np.random.default_rng(7)
        est = mc_hm_estimate(AggregateSet(), Site(0, 0), 4, 2000, rng)
        assert est.discarded == 0
        assert abs(est.mean - 1.0) < 5 * est.std_error

    def test_column_tip_estimate(self, column3):
        exact = hm_point(column3, Site(0, 3), 8)
        est = mc_hm_estimate(column3, Site(0, 3), 8, 1000, np.random.default_rng(8))
        assert abs(est.mean - exact) < 5 * est.std_error

    def test_shadowed_site_scores_zero(self):
        B = AggregateSet.of([Site(0, 1), Site(-1, 1), Site(1, 1)])
        est = mc_hm_estimate(B, Site(0, 0), 6, 200, np.random.default_rng(1))
        assert est.mean == 0.0

    def test_needs_replicas(self):
        with pytest.raises(PreconditionError):
            mc_hm_estimate(AggregateSet(), Site(0, 0), 4, 0, np.random.default_rng(0))


class TestLimits:
    """Test N -> infinity limits and the height-bound audit."""

    def test_floor_only_limit_is_immediate(self):
        lim = field_limit(AggregateSet(), 1e-3, n_cap=64)
        seq = next(iter(lim.sequences.values()))
        assert lim.N_used == 8
        assert seq.heights == (4, 8)
        assert abs(seq.increments[0]) < 1e-6

    def test_limit_needs_two_heights(self, column3):
        with pytest.raises(SolverError) as exc:
            field_limit(column3, 1e-3, n_cap=default_height(3))
        assert exc.value.sequence is not None

    def test_edge_limit(self):
        B = AggregateSet.column(1)
        lim = hm_edge_limit(B, up(0, 1), 0.2, n_cap=32)
        assert lim.error_bound < 0.2
        assert lim.value > 0.0
        assert lim.sequence.heights[0] == default_height(1)

    def test_edge_limit_needs_frontier_edge(self, column3):
        with pytest.raises(PreconditionError):
            hm_edge_limit(column3, up(0, 1), 0.2)

    def test_height_bound_audit(self):
        report = verify_height_bound([AggregateSet.column(1), AggregateSet.column(2)], 0.2, n_cap=32)
        assert set(report.per_height_max) == {1, 2}
        assert report.c_audit == max(report.per_height_max.values())
        assert not report.empty

    def test_height_bound_needs_attached_suite(self):
        with pytest.raises(PreconditionError):
            verify_height_bound([AggregateSet.of([Site(0, 3)])])

    def test_height_bound_empty_suite(self):
        report = verify_height_bound([AggregateSet()])
        assert report.empty
        assert report.c_audit == 0.0


class TestIncrementalField:
    """Test the warm-started field of a growing aggregate."""

    def test_matches_fresh_solve(self, fast_settings):
        dom = default_domain(AggregateSet(), 6, fast_settings).expanded(2)
        inc = IncrementalField([], 6, dom, fast_settings)
        inc.add(Site(0, 1))
        inc.add(Site(0, 2))
        fresh = solve_potential(AggregateSet.column(2), 6, dom, fast_settings)
        e = up(0, 2)
        assert inc.value(e) == pytest.approx(fresh.edge_value(e), abs=1e-7)

    def test_every_k_events_keeps_stale_field(self, fast_settings):
        dom = default_domain(AggregateSet(), 6, fast_settings).expanded(2)
        inc = IncrementalField([], 6, dom, fast_settings, stale_events=3)
        inc.value(up(0))
        assert inc.recompute_count == 1
        inc.add(Site(0, 1))
        inc.note_event()
        inc.value(up(1))
        assert inc.recompute_count == 1
        inc.note_event()
        inc.note_event()
        inc.value(up(1))
        assert inc.recompute_count == 2

    def test_member_edges_are_zero(self, fast_settings):
        dom = default_domain(AggregateSet(), 6, fast_settings)
        inc = IncrementalField([Site(0, 1)], 6, dom, fast_settings)
        assert inc.value(up(0)) == 0.0
        assert inc.field().value(up(0, 1)) > 0.0
