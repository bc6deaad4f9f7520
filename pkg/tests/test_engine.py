"""Test the thinned and event-driven DLA engines."""
import dataclasses

import numpy as np
import pytest

from sdlalab.config import ConfigError
from sdlalab.engine import (
    Aggregate,
    DominatingRateViolation,
    EngineConfig,
    RefreshPolicy,
    ThinnedGrowth,
    attachment_order,
    engine_seed,
    first_attachment,
    load_snapshot,
    run_kmc,
    run_thinned,
    seed_height_error,
    snapshot,
)
from sdlalab.graphical import EdgeEvent, EventStream, simulate_interface
from sdlalab.harmonic import SolverBackend, SolverSettings
from sdlalab.lattice import BoxRegion, DirectedEdge, PreconditionError, Site, segment


def up(x1, x2=0):
    return DirectedEdge(Site(x1, x2), Site(x1, x2 + 1))


@pytest.fixture
def small_cfg():
    return EngineConfig(BoxRegion.truncation_box(2), harmonic_tol=1e-8)


class TestAggregate:
    """Test forest bookkeeping."""

    def test_attach_records_parent_and_time(self):
        A = Aggregate.from_seed(segment(1))
        A.attach(up(0), 0.25)
        A.attach(DirectedEdge(Site(0, 1), Site(1, 1)), 0.5)
        assert A.parent[Site(1, 1)] == Site(0, 1)
        assert A.root_of(Site(1, 1)) == Site(0, 0)
        assert first_attachment(A) == Site(0, 1)
        assert attachment_order(A) == [Site(0, 1), Site(1, 1)]
        assert A.max_height == 1
        A.check_forest()

    def test_attach_needs_member_tail(self):
        A = Aggregate.from_seed(segment(1))
        with pytest.raises(PreconditionError):
            A.attach(up(5), 0.1)

    def test_attach_rejects_member_head(self):
        A = Aggregate.from_seed(segment(1))
        with pytest.raises(PreconditionError):
            A.attach(DirectedEdge(Site(0, 0), Site(1, 0)), 0.1)

    def test_trees_partition_sites(self):
        A = Aggregate.from_seed(segment(1))
        A.attach(up(-1), 0.1)
        A.attach(up(1), 0.2)
        trees = A.trees()
        assert trees[Site(-1, 0)] == {Site(-1, 0), Site(-1, 1)}
        assert trees[Site(0, 0)] == {Site(0, 0)}

    def test_frontier_excludes_floor_heads(self):
        A = Aggregate.from_seed(segment(1))
        assert all(e.head.x2 >= 1 for e in A.frontier_edges())
        assert len(A.frontier_edges()) == 3

    def test_seed_snapshot_has_no_edges(self, tmp_path):
        path = snapshot(Aggregate.from_seed(segment(1)), tmp_path / "seed.yaml")
        assert "edges: []" in path.read_text(encoding="utf-8")

    def test_snapshot_round_trip(self, tmp_path):
        A = Aggregate.from_seed(segment(1))
        A.attach(up(0), 0.25)
        A.t = 0.5
        path = snapshot(A, tmp_path / "a.yaml")
        B = load_snapshot(path)
        assert B.V == A.V
        assert B.E == A.E
        assert B.seed == A.seed
        assert B.t == 0.5


class TestEngineConfig:
    """Test engine configuration checks."""

    def test_c_dom_at_least_one(self):
        with pytest.raises(ConfigError):
            EngineConfig(BoxRegion.truncation_box(2), c_dom=0.5)

    def test_N_above_truncation(self):
        with pytest.raises(ConfigError):
            EngineConfig(BoxRegion.truncation_box(2), N=2)

    def test_harmonic_height_schedule(self, small_cfg):
        assert small_cfg.harmonic_height == 8
        dom = small_cfg.harmonic_domain
        assert dom.y_max == 8
        assert dom.x_min < small_cfg.truncation.x_min

    def test_stale_events(self, small_cfg):
        assert small_cfg.stale_events == 0
        k = dataclasses.replace(small_cfg, harmonic_refresh=RefreshPolicy.EVERY_K_EVENTS, refresh_k=5)
        assert k.stale_events == 5

    def test_engine_seed_from_file(self, fixtures_dir):
        seed = engine_seed(4, str(fixtures_dir / "column3.yaml"))
        assert Site(0, 3) in seed
        assert engine_seed(2) == segment(2)


class TestThinnedEngine:
    """Test growth by thinning the shared event stream."""

    def test_forest_invariants(self, small_cfg):
        A, d = run_thinned(segment(2), 0.5, small_cfg, EventStream(11, 0.5))
        A.check_forest()
        assert all(s.x2 >= 1 for s in A.grown)
        assert d.acceptances == len(A.grown)
        assert d.rate_violations == 0
        assert all(small_cfg.truncation.contains(s) for s in A.V) or d.truncation_hit

    def test_time_zero_is_the_seed(self, small_cfg):
        A, d = run_thinned(segment(2), 0.0, small_cfg, EventStream(10, 1.0))
        assert A.V == set(segment(2))
        assert not A.E
        assert d.acceptances == 0

    def test_deterministic(self, small_cfg):
        A1, _ = run_thinned(segment(2), 0.5, small_cfg, EventStream(12, 0.5))
        A2, _ = run_thinned(segment(2), 0.5, small_cfg, EventStream(12, 0.5))
        assert A1.V == A2.V
        assert A1.attached_at == A2.attached_at

    def test_contained_in_interface(self, small_cfg):
        T = 0.5
        A, d = run_thinned(segment(2), T, small_cfg, EventStream(13, T))
        t_end = A.t
        state = simulate_interface(segment(2), t_end, BoxRegion(-60, 60, 0, 60), EventStream(13, T))
        assert not state.truncation_hit
        assert A.V <= state.occupied
        for s in A.grown:
            assert state.occupied_at[s] <= A.attached_at[s]

    def test_horizon_checked(self, small_cfg):
        with pytest.raises(PreconditionError):
            run_thinned(segment(2), 2.0, small_cfg, EventStream(1, 1.0))

    def test_seed_outside_truncation(self, small_cfg):
        with pytest.raises(PreconditionError):
            run_thinned(segment(8), 0.1, small_cfg, EventStream(1, 1.0))

    def test_floating_seed_rejected(self, small_cfg):
        with pytest.raises(PreconditionError):
            run_thinned(segment(1) | {Site(0, 2)}, 0.1, small_cfg, EventStream(1, 1.0))

    def test_stream_rate_must_match(self, small_cfg):
        with pytest.raises(ConfigError):
            ThinnedGrowth(segment(1), small_cfg, EventStream(1, 1.0, c_dom=3.0))

    def test_every_k_refresh(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, harmonic_refresh=RefreshPolicy.EVERY_K_EVENTS, refresh_k=4)
        A, d = run_thinned(segment(2), 0.5, cfg, EventStream(14, 0.5))
        A.check_forest()
        assert d.recompute_count <= d.acceptances + 1

    def test_event_log_without_timings(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, record_events=True)
        A, d = run_thinned(segment(2), 0.5, cfg, EventStream(15, 0.5))
        assert len(d.event_log) == d.events_seen - d.events_skipped
        assert sum(1 for row in d.event_log if row.accepted) == d.acceptances
        assert all(row.recompute_ms is None for row in d.event_log)
        assert all(0.0 <= row.prob <= 1.0 for row in d.event_log)

    def test_seed_height_error_is_small(self, small_cfg):
        assert 0.0 <= seed_height_error(segment(2), small_cfg) < 0.5


class TestDominatingRate:
    """Test the acceptance-ratio check."""

    def _growth(self, cfg, value):
        growth = ThinnedGrowth(segment(1), cfg, EventStream(1, 1.0))
        growth.field.value = lambda e: value
        return growth

    def test_strict_mode_raises(self, small_cfg):
        growth = self._growth(small_cfg, 5.0)
        with pytest.raises(DominatingRateViolation) as exc:
            growth.offer(EdgeEvent(0.1, up(0), 1, 0.9))
        assert exc.value.ratio == pytest.approx(2.5)
        assert exc.value.edge == up(0)

    def test_lenient_mode_counts(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, strict_dominating=False)
        growth = self._growth(cfg, 5.0)
        assert growth.offer(EdgeEvent(0.1, up(0), 1, 0.9))
        assert growth.diagnostics.rate_violations == 1

    def test_mark_above_ratio_rejected(self, small_cfg):
        growth = self._growth(small_cfg, 0.5)
        assert not growth.offer(EdgeEvent(0.1, up(0), 1, 0.3))
        assert growth.offer(EdgeEvent(0.2, up(1), 1, 0.2))

    def test_ineligible_event_skipped(self, small_cfg):
        growth = self._growth(small_cfg, 0.5)
        assert not growth.offer(EdgeEvent(0.1, up(7, 3), 1, 0.0))
        assert growth.diagnostics.events_skipped == 1


class TestKmcEngine:
    """Test the event-driven engine."""

    def test_forest_and_times(self, small_cfg):
        A, d = run_kmc(segment(2), 0.5, small_cfg, np.random.default_rng(3))
        A.check_forest()
        times = [A.attached_at[s] for s in attachment_order(A)]
        assert times == sorted(times)
        assert all(t <= 0.5 for t in times)
        assert d.acceptances == len(A.grown)

    def test_first_attachment_follows_edge_rates(self):
        class FirstStepOnly:
            """Exponential clock that fires once inside the horizon."""

            def __init__(self, rng):
                self.rng = rng
                self.calls = 0

            def exponential(self, scale):
                self.calls += 1
                return 0.5 if self.calls == 1 else 10.0

            def random(self):
                return self.rng.random()

        cfg = EngineConfig(BoxRegion.truncation_box(1), solver=SolverSettings(backend=SolverBackend.DIRECT))
        seed = segment(1) | {Site(0, 1)}
        growth = ThinnedGrowth(seed, cfg, EventStream(0, 1.0))
        edges = growth.aggregate.frontier_edges()
        rates = np.array([growth.field.value(e) for e in edges])
        expected = rates / rates.sum()

        rng = np.random.default_rng(2024)
        m = 1000
        counts = dict.fromkeys(edges, 0)
        for _ in range(m):
            A, _ = run_kmc(seed, 1.0, cfg, FirstStepOnly(rng))
            s = first_attachment(A)
            counts[DirectedEdge(A.parent[s], s)] += 1
        for e, p in zip(edges, expected):
            assert abs(counts[e] / m - p) < 4 * np.sqrt(p * (1 - p) / m)

    def test_top_of_cumulative_rate_selects_last_edge(self, small_cfg):
        class TopDraws:
            def exponential(self, scale):
                return 0.01

            def random(self):
                return 1.0

        cfg = dataclasses.replace(small_cfg, record_events=True)
        last = Aggregate.from_seed(segment(2)).frontier_edges()[-1]
        A, d = run_kmc(segment(2), 0.015, cfg, TopDraws())
        assert A.grown == {last.head}
        assert d.event_log[0].edge == last

    def test_deterministic(self, small_cfg):
        A1, _ = run_kmc(segment(2), 0.3, small_cfg, np.random.default_rng(4))
        A2, _ = run_kmc(segment(2), 0.3, small_cfg, np.random.default_rng(4))
        assert A1.attached_at == A2.attached_at
