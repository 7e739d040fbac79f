import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

import contactlab.simulate as simulate_module
from contactlab import kernels
from contactlab.errors import AuditError, InvalidParameterError, OracleCapError
from contactlab.graphs import Graph, generate_path, generate_star
from contactlab.settings import get_settings, set_settings
from contactlab.simulate import (Extinction, FirstOf, InfectedCountAtLeast, LeafCountAtLeast, LeafCountAtMost,
                                 StarState, TimeHorizon, VertexInfected, compile_stop, exact_star_mean_extinction,
                                 first_infection_time_of, simulate, simulate_replicas, simulate_star,
                                 simulate_star_replicas, star_generator)

MASTER = 1234


def stop_times(outcomes):
    return np.array([o.stop_time for o in outcomes])


def test_isolated_vertex_recovers_at_rate_one():
    g = Graph.from_edges(1, [])
    times = stop_times(simulate_replicas(g, 5.0, [0], Extinction(), MASTER, 20_000))
    se = 1.0 / math.sqrt(times.size)
    assert abs(times.mean() - 1.0) <= 4 * se


def test_zero_rate_is_max_of_exponentials():
    g = generate_path(5)
    outcomes = simulate_replicas(g, 0.0, [0, 2, 4], Extinction(), MASTER, 20_000)
    times = stop_times(outcomes)
    assert all(o.stop_reason == "extinction" for o in outcomes)
    assert all(o.n_events == 3 for o in outcomes)
    se = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - 11.0 / 6.0) <= 4 * se


def test_self_loop_never_infects():
    g = Graph.from_edges(2, [(0, 0), (0, 0)])
    outcomes = simulate_replicas(g, 50.0, [0], Extinction(), MASTER, 500)
    assert all(o.n_events == 1 for o in outcomes)


def test_exact_star_small_cases():
    assert exact_star_mean_extinction(1, 0.0, StarState(0, 1)) == pytest.approx(1.0)
    assert exact_star_mean_extinction(1, 0.0, StarState(1, 1)) == pytest.approx(1.5)
    assert exact_star_mean_extinction(3, 1.0, StarState(0, 0)) == 0.0


def test_star_generator_rows_sum_to_zero():
    Q = star_generator(4, 0.7)
    assert np.allclose(Q.sum(axis=1), 0.0)
    assert Q.shape == (10, 10)


def test_oracle_cap():
    with pytest.raises(OracleCapError):
        exact_star_mean_extinction(500, 1.0, StarState(1, 1))


def test_graph_simulator_matches_star_oracle():
    expected = exact_star_mean_extinction(3, 1.0, StarState(3, 1))
    times = stop_times(simulate_replicas(generate_star(3), 1.0, range(4), Extinction(), MASTER, 40_000))
    se = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - expected) <= 4 * se


@pytest.mark.slow
def test_graph_simulator_within_one_percent_of_oracle():
    expected = exact_star_mean_extinction(3, 1.0, StarState(3, 1))
    times = stop_times(simulate_replicas(generate_star(3), 1.0, range(4), Extinction(), MASTER, 100_000))
    assert times.mean() == pytest.approx(expected, rel=0.01)


def test_star_chain_agrees_with_graph_simulator():
    k, lam, n = 5, 0.5, 10_000
    star = stop_times(simulate_star_replicas(k, lam, StarState(5, 1), Extinction(), MASTER, n))
    graph = stop_times(simulate_replicas(generate_star(k), lam, range(k + 1), Extinction(), MASTER + 1, n))
    statistic = stats.ks_2samp(star, graph).statistic
    critical = 1.628 * math.sqrt(2.0 / n)
    assert statistic < critical


def test_star_chain_oracle_mean():
    expected = exact_star_mean_extinction(4, 1.0, StarState(2, 1))
    times = stop_times(simulate_star_replicas(4, 1.0, StarState(2, 1), Extinction(), MASTER, 40_000))
    se = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - expected) <= 4 * se


def test_absorbed_star_stops_at_zero():
    outcome = simulate_star(3, 1.0, StarState(0, 0), Extinction(), seed=1)
    assert outcome.stop_reason == "extinction"
    assert outcome.stop_time == 0.0
    assert outcome.n_events == 0


def test_invalid_star_state():
    with pytest.raises(InvalidParameterError):
        simulate_star(3, 1.0, StarState(4, 1), Extinction(), seed=1)


def test_leaf_conditions_are_star_only():
    with pytest.raises(InvalidParameterError):
        simulate(generate_star(3), 1.0, [0], LeafCountAtLeast(2), seed=1)


def test_compile_stop_takes_tightest_limits():
    plan = compile_stop(
        FirstOf(TimeHorizon(5.0), TimeHorizon(2.0), InfectedCountAtLeast(7), InfectedCountAtLeast(4)), 10
    )
    assert plan.horizon == 2.0
    assert plan.count_hi == 4
    assert plan.tracked
    assert not compile_stop(TimeHorizon(1.0), 10).tracked


def test_leaf_thresholds_in_star_runs():
    outcome = simulate_star(10, 2.0, StarState(0, 1), FirstOf(LeafCountAtLeast(3), Extinction()), seed=3)
    if outcome.stop_reason == "leaf_at_least":
        assert outcome.final_state.i == 3
    outcome = simulate_star(10, 1.0, StarState(5, 1), FirstOf(LeafCountAtMost(5), Extinction()), seed=3)
    assert outcome.stop_reason == "leaf_at_most"
    assert outcome.stop_time == 0.0


def test_horizon_zero_is_censored():
    g = generate_path(1)
    outcome = first_infection_time_of(g, 1.0, [0], 1, 0.0, seed=9)
    assert outcome.stop_reason == "horizon"
    assert outcome.censored
    assert outcome.stop_time == 0.0


def test_single_edge_race():
    g = generate_path(1)
    n = 20_000
    outcomes = simulate_replicas(g, 100.0, [0], FirstOf(VertexInfected(1), Extinction()), MASTER, n)
    hits = sum(o.stop_reason == "vertex_infected" for o in outcomes)
    p = 100.0 / 101.0
    assert abs(hits / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_target_already_infected():
    with pytest.raises(InvalidParameterError):
        first_infection_time_of(generate_path(2), 1.0, [0, 2], 2, 5.0, seed=1)


def test_replicas_are_reproducible_across_thread_counts():
    from contactlab.settings import Settings, set_settings

    g = generate_star(6)
    stop = FirstOf(Extinction(), TimeHorizon(20.0))
    set_settings(Settings(threads=1))
    serial = [o.to_dict() for o in simulate_replicas(g, 0.8, [0], stop, 77, 64)]
    set_settings(Settings(threads=4))
    parallel = [o.to_dict() for o in simulate_replicas(g, 0.8, [0], stop, 77, 64)]
    assert serial == parallel
    assert [d["replica"] for d in serial] == list(range(64))


def test_trajectory_sampling():
    g = generate_star(5)
    outcome = simulate(g, 1.0, [0], TimeHorizon(10.0), seed=5, sample_dt=1.0, watch=0)
    trajectory = outcome.trajectory
    assert trajectory.times.tolist() == [float(t) for t in range(11)]
    assert trajectory.to_csv().splitlines()[0] == "time,infected_count"
    assert trajectory.counts[0] == 1
    assert bool(trajectory.watched[0])


def test_outcome_json_fields():
    outcome = simulate(generate_path(2), 1.0, [0], Extinction(), seed=11)
    assert list(outcome.to_dict()) == [
        "stop_reason", "stop_time", "n_events", "final_infected", "censored", "seed", "replica"
    ]
    assert outcome.final_infected == 0


def test_flagged_vertices():
    g = generate_path(1)
    flagged = np.array([False, True])
    outcome = simulate(g, 0.0, [0], Extinction(), seed=2, flagged=flagged)
    assert not outcome.touched_flagged
    outcome = simulate(g, 0.0, [0, 1], Extinction(), seed=2, flagged=flagged)
    assert outcome.touched_flagged


def test_negative_rate_rejected():
    with pytest.raises(InvalidParameterError):
        simulate(generate_path(1), -1.0, [0], Extinction(), seed=1)


def test_rate_audit_on_every_event_changes_nothing():
    g = generate_star(20)
    stop = FirstOf(Extinction(), TimeHorizon(5.0))
    reference = simulate(g, 1.5, [0], stop, seed=11)
    set_settings(dataclasses.replace(get_settings(), audit_interval=1))
    audited = simulate(g, 1.5, [0], stop, seed=11)
    assert audited.n_events > 0
    assert audited.to_dict() == reference.to_dict()


def test_audit_failures_raise(monkeypatch):
    run_graph = kernels.run_graph

    def drifting(*args):
        result = run_graph(*args)
        return result[:5] + (1,) + result[6:]

    monkeypatch.setattr(kernels, "run_graph", drifting)
    with pytest.raises(AuditError):
        simulate(generate_star(3), 1.0, [0], Extinction(), seed=1)


def test_star_extinction_time_grows_with_rate():
    rates = (0.1, 0.2, 0.4)
    exact = [exact_star_mean_extinction(30, lam, StarState(30, 1)) for lam in rates]
    assert exact[0] < exact[1] < exact[2]
    means = [
        stop_times(simulate_star_replicas(30, lam, StarState(30, 1), Extinction(), MASTER, 4000, keys=(g,))).mean()
        for g, lam in enumerate(rates)
    ]
    assert means[0] < means[1] < means[2]


def test_unbounded_trajectory_is_marked_truncated(monkeypatch, caplog):
    monkeypatch.setattr(simulate_module, "DEFAULT_MAX_SAMPLES", 5)
    stop = FirstOf(Extinction(), InfectedCountAtLeast(20))
    outcome = simulate(generate_star(50), 2.0, [0], stop, seed=3, sample_dt=1e-4)
    assert outcome.trajectory.truncated
    assert outcome.trajectory.times.size == 5
    assert "first 5 samples" in caplog.text


def test_extinction_without_horizon_stops_sampling():
    outcome = simulate(generate_star(1), 0.0, [0], Extinction(), seed=4, sample_dt=0.5)
    trajectory = outcome.trajectory
    assert not trajectory.truncated
    assert trajectory.times[-1] <= outcome.stop_time
    assert trajectory.times.size == int(outcome.stop_time / 0.5) + 1
