"""Closed-loop simulation: frame stepping, policies, metrics, sweeps."""

import pytest

from crdsa.core import (
    ChannelConfig,
    DegreeDistribution,
    FinitePopulation,
    Icp,
    InfinitePopulation,
    NoPolicy,
    RandomStream,
    Rcp,
)
from crdsa.simulator import (
    PopulationState,
    initial_state,
    metrics_to_csv,
    run_simulation,
    step_frame,
    sweep_threshold,
    sweep_to_csv,
    trace_to_csv,
)


def make_config(population, n_slots=10, degree=2, retx_prob=1.0, i_max=10):
    return ChannelConfig(
        n_slots=n_slots,
        i_max=i_max,
        degree_dist=DegreeDistribution.constant(degree),
        population=population,
        retx_prob=retx_prob,
    )


def test_initial_state():
    finite = initial_state(make_config(FinitePopulation(30, 0.1)))
    assert finite == PopulationState(backlogged=0, thinking=30)
    infinite = initial_state(make_config(InfinitePopulation(2.0)))
    assert infinite == PopulationState(backlogged=0, thinking=None)


def test_silent_channel_does_nothing():
    cfg = make_config(InfinitePopulation(0.0))
    metrics = run_simulation(cfg, frames=50, trace_stride=1)
    assert metrics.avg_throughput == 0.0
    assert metrics.final_n_b == 0
    assert metrics.rejected_arrivals == 0
    assert all(r.attempted == 0 and r.n_b == 0 for r in metrics.per_frame)


def test_runs_reproduce_exactly():
    cfg = make_config(FinitePopulation(40, 0.05))
    a = run_simulation(cfg, frames=300, seed=11, trace_stride=1)
    b = run_simulation(cfg, frames=300, seed=11, trace_stride=1)
    assert a == b
    c = run_simulation(cfg, frames=300, seed=12, trace_stride=1)
    assert a != c


def test_backlog_bounds_and_counting():
    cfg = make_config(FinitePopulation(25, 0.2), n_slots=5)
    metrics = run_simulation(cfg, frames=400, seed=3, trace_stride=1)
    assert len(metrics.per_frame) == 400
    for r in metrics.per_frame:
        assert 0 <= r.n_b <= 25
        assert 0 <= r.decoded <= r.attempted
        assert r.rejected == 0  # no policy
        assert not r.critical
    assert metrics.final_n_b == metrics.per_frame[-1].n_b
    total_decoded = sum(r.decoded for r in metrics.per_frame)
    assert metrics.avg_throughput == pytest.approx(total_decoded / (400 * 5))


def test_trace_stride():
    cfg = make_config(FinitePopulation(10, 0.05))
    metrics = run_simulation(cfg, frames=250, seed=0, trace_stride=100)
    assert [r.f for r in metrics.per_frame] == [0, 100, 200]


class TestStepFrame:
    def test_arrivals_all_out_when_p0_is_one(self):
        cfg = make_config(FinitePopulation(8, 1.0), n_slots=40)
        state = initial_state(cfg)
        new_state, record = step_frame(state, cfg, NoPolicy(), RandomStream(0))
        assert record.attempted == 8
        assert new_state.backlogged == 8 - record.decoded
        assert new_state.thinking + new_state.backlogged == 8

    def test_input_control_rejects_in_critical_state(self):
        cfg = make_config(FinitePopulation(15, 1.0), n_slots=30)
        state = PopulationState(backlogged=5, thinking=10)
        _, record = step_frame(state, cfg, Icp(0), RandomStream(1))
        assert record.critical
        assert record.rejected == 10  # every thinker generated, all denied
        assert record.attempted == 5  # only the backlog retransmits

    def test_input_control_threshold_is_strict(self):
        cfg = make_config(FinitePopulation(15, 1.0), n_slots=30)
        state = PopulationState(backlogged=5, thinking=10)
        _, record = step_frame(state, cfg, Icp(5), RandomStream(1))
        assert not record.critical
        assert record.rejected == 0
        assert record.attempted == 15

    def test_rejected_users_keep_thinking(self):
        cfg = make_config(FinitePopulation(15, 1.0), n_slots=30)
        state = PopulationState(backlogged=5, thinking=10)
        new_state, record = step_frame(state, cfg, Icp(0), RandomStream(2))
        # denied arrivals return to the thinking pool
        assert new_state.thinking == 15 - new_state.backlogged
        assert new_state.backlogged == 5 - record.decoded

    def test_retx_control_throttles_in_critical_state(self):
        cfg = make_config(InfinitePopulation(0.0), n_slots=2000, degree=1)
        state = PopulationState(backlogged=1000, thinking=None)
        _, record = step_frame(state, cfg, Rcp(0, 0.25), RandomStream(3))
        assert record.critical
        # Binomial(1000, 0.25) lands well inside [150, 350]
        assert 150 <= record.attempted <= 350

    def test_retx_control_inactive_below_threshold(self):
        cfg = make_config(InfinitePopulation(0.0), n_slots=2000, degree=1)
        state = PopulationState(backlogged=1000, thinking=None)
        _, record = step_frame(state, cfg, Rcp(5000, 0.25), RandomStream(3))
        assert not record.critical
        assert record.attempted == 1000  # p_r = 1: everyone retransmits

    def test_infinite_population_backlog_can_grow_without_bound(self):
        cfg = make_config(InfinitePopulation(30.0), n_slots=2, degree=1, i_max=1)
        state = initial_state(cfg)
        rng = RandomStream(4)
        for f in range(30):
            state, _ = step_frame(state, cfg, NoPolicy(), rng, f)
        assert state.backlogged > 100  # ~30 arrivals/frame, ~0 decoded
        assert state.thinking is None


def test_percent_critical_deterministic_chain():
    # M=2, p0=1, one slot: both users collide in frame 0 and stay backlogged
    # forever, so every frame after the first is critical.
    cfg = make_config(FinitePopulation(2, 1.0), n_slots=1, degree=1, i_max=5)
    metrics = run_simulation(cfg, Icp(0), frames=10, seed=0, trace_stride=1)
    assert metrics.percent_critical == pytest.approx(90.0)
    assert metrics.final_n_b == 2
    assert metrics.avg_throughput == 0.0


def test_percent_critical_zero_without_threshold_policy():
    cfg = make_config(FinitePopulation(2, 1.0), n_slots=1, degree=1, i_max=5)
    metrics = run_simulation(cfg, NoPolicy(), frames=10, seed=0, trace_stride=1)
    assert metrics.percent_critical == 0.0


def test_argument_validation():
    cfg = make_config(FinitePopulation(10, 0.1))
    with pytest.raises(ValueError):
        run_simulation(cfg, frames=0)
    with pytest.raises(ValueError):
        run_simulation(cfg, frames=10, trace_stride=0)
    with pytest.raises(ValueError):
        run_simulation(cfg, Rcp(5, 1.5), frames=10)
    bad = make_config(FinitePopulation(10, 0.1), retx_prob=0.0)
    with pytest.raises(ValueError):
        run_simulation(bad, frames=10)


class TestSweep:
    def test_rows_match_individual_runs(self):
        cfg = make_config(FinitePopulation(30, 0.1), n_slots=5)
        rows = sweep_threshold(cfg, "icp", [2, 8], frames=200, seed=7)
        assert [t for t, _ in rows] == [2, 8]
        direct = run_simulation(cfg, Icp(8), frames=200, seed=7)
        assert rows[1][1] == direct

    def test_rcp_family(self):
        cfg = make_config(FinitePopulation(30, 0.1), n_slots=5, retx_prob=0.8)
        rows = sweep_threshold(
            cfg, "rcp", [4], frames=100, seed=1, critical_retx_prob=0.2
        )
        direct = run_simulation(cfg, Rcp(4, 0.2), frames=100, seed=1)
        assert rows[0][1] == direct

    def test_bad_arguments(self):
        cfg = make_config(FinitePopulation(30, 0.1))
        with pytest.raises(ValueError):
            sweep_threshold(cfg, "acp", [1])
        with pytest.raises(ValueError):
            sweep_threshold(cfg, "rcp", [1])  # missing critical_retx_prob


class TestCsv:
    def test_metrics_csv(self):
        cfg = make_config(FinitePopulation(10, 0.05))
        metrics = run_simulation(cfg, frames=20, seed=0)
        text = metrics_to_csv(metrics, header_comments=["cfg"])
        lines = text.splitlines()
        assert lines[0] == "# cfg"
        assert lines[1] == "frames,avg_throughput,percent_critical,rejected_arrivals,final_n_b"
        assert lines[2].startswith("20,")

    def test_trace_csv_booleans_become_ints(self):
        cfg = make_config(FinitePopulation(2, 1.0), n_slots=1, degree=1, i_max=5)
        metrics = run_simulation(cfg, Icp(0), frames=3, seed=0, trace_stride=1)
        lines = trace_to_csv(metrics).splitlines()
        assert lines[0] == "f,attempted,decoded,n_b,critical"
        assert lines[1] == "0,2,0,2,0"
        assert lines[2].split(",")[-1] == "1"

    def test_sweep_csv(self):
        cfg = make_config(FinitePopulation(20, 0.1), n_slots=5)
        rows = sweep_threshold(cfg, "icp", [1, 3], frames=50, seed=2)
        lines = sweep_to_csv(rows).splitlines()
        assert lines[0] == "n_hat,avg_throughput,percent_critical"
        assert lines[1].startswith("1,") and lines[2].startswith("3,")
