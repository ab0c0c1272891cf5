import math

import numpy as np
import pytest

from oracles import mean_waiting_time_before, two_pole_survival, waiting_density
from qsemimarkov.classical import (
    NO_JUMP,
    TrajectoryRecord,
    estimate_populations,
    read_trajectories,
    sample_waiting_time,
    simulate_ensemble,
    simulate_trajectory,
    solve_gme,
    trajectory_seed,
    waiting_time_table,
    write_trajectories,
)
from qsemimarkov.functions import ScalarFn, TimeGrid
from qsemimarkov.zoo import cyclic_jumps

GRID = TimeGrid(1e-3, 5000)
K4 = ScalarFn.exponential(1.0, 4.0)


def test_density_against_quadrature():
    tab = waiting_time_table(K4, GRID)
    assert tab.valid and tab.first_negative_time is None
    for t in (0.3, 1.0, 2.5):
        assert abs(tab.density[GRID.index_of(t)] - waiting_density(1.0, 4.0, t)) < 1e-6
    assert abs(tab.density[1000] - 0.21392) < 1e-4
    assert np.abs(tab.integrated_survival() - tab.survival).max() < 1e-6
    assert tab.asymptotic_defect == 0.0
    assert abs(tab.defect - two_pole_survival(1.0, 4.0, 5.0)) < 1e-6


def test_invalid_law_flagged_at_first_negative_density():
    tab = waiting_time_table(ScalarFn.exponential(1.0, 1.0), GRID)
    assert not tab.valid
    assert abs(tab.first_negative_time - 2 * math.pi / math.sqrt(3)) < 2 * GRID.h
    with pytest.raises(ValueError):
        sample_waiting_time(tab, 0.5)


def test_no_jump_when_rate_vanishes():
    tab = waiting_time_table(ScalarFn.zero(), TimeGrid(0.01, 100))
    assert tab.asymptotic_defect == 1.0
    assert sample_waiting_time(tab, 0.3) == NO_JUMP


def test_inverse_survival_sampling():
    tab = waiting_time_table(K4, GRID)
    u = np.linspace(tab.defect + 0.01, 0.99, 50)
    t = sample_waiting_time(tab, u)
    assert np.all(np.isfinite(t))
    assert np.abs(two_pole_survival(1.0, 4.0, t) - u).max() < 1e-6
    assert sample_waiting_time(tab, 1.0) == 0.0
    assert sample_waiting_time(tab, 0.5 * tab.defect) == NO_JUMP


def test_mean_waiting_time():
    tab = waiting_time_table(K4, GRID)
    u = np.random.default_rng(11).random(200000)
    t = sample_waiting_time(tab, u)
    jumped = t[np.isfinite(t)]
    mean, se = jumped.mean(), jumped.std() / math.sqrt(len(jumped))
    assert abs(mean - mean_waiting_time_before(1.0, 4.0, 5.0)) < 4 * se
    assert abs(1 - len(jumped) / len(t) - tab.defect) < 4 * math.sqrt(tab.defect / len(t))


def test_trajectory_is_reproducible():
    pi = cyclic_jumps(4)
    tabs = [waiting_time_table(K4, GRID)] * 4
    a = simulate_trajectory(pi, tabs, 0, 5.0, trajectory_seed(3, 17))
    b = simulate_trajectory(pi, tabs, 0, 5.0, trajectory_seed(3, 17))
    assert a.times == b.times and a.targets == b.targets
    assert all(abs(s - t) in (1, 3) for s, t in zip(a.sources, a.targets))
    assert all(x < y for x, y in zip(a.times, a.times[1:]))


def test_ensemble_independent_of_worker_count():
    pi = cyclic_jumps(3)
    tabs = [waiting_time_table(K4, TimeGrid(0.01, 300))] * 3
    one = simulate_ensemble(pi, tabs, 1, 3.0, 60, 5, workers=1)
    two = simulate_ensemble(pi, tabs, 1, 3.0, 60, 5, workers=2)
    assert [r.times for r in one] == [r.times for r in two]
    assert [r.targets for r in one] == [r.targets for r in two]


def test_bad_jump_matrix():
    tabs = [waiting_time_table(K4, TimeGrid(0.01, 100))] * 2
    with pytest.raises(ValueError):
        simulate_ensemble(np.array([[0.5, 0.5], [0.6, 0.5]]), tabs, 0, 1.0, 5, 0)


def test_population_estimates_from_hand_built_records():
    grid = TimeGrid(0.5, 4)                 # 0, 0.5, 1, 1.5, 2
    recs = [TrajectoryRecord(0, 2.0, None, [0.7], [0], [1]),
            TrajectoryRecord(0, 2.0, None, [1.0, 1.6], [0, 1], [1, 0])]
    est = estimate_populations(recs, grid, 2)
    assert np.allclose(est.populations[:, 0], [1, 1, 0, 0, 0.5])
    assert np.allclose(est.populations[:, 1], [0, 0, 1, 1, 0.5])
    assert np.allclose(est.stderr[4], [0.5 / math.sqrt(2)] * 2)


def test_gme_two_level_and_stochasticity():
    pi = np.array([[0.0, 0.0], [1.0, 1.0]])
    t = solve_gme(pi, (K4, ScalarFn.zero()), GRID)
    assert np.abs(t[:, 0, 0] - two_pole_survival(1.0, 4.0, GRID.times)).max() < 1e-6
    assert np.abs(t[:, :, 1] - np.array([0.0, 1.0])).max() < 1e-14
    ring = solve_gme(cyclic_jumps(4), (K4,) * 4, TimeGrid(0.01, 500))
    assert np.abs(ring.sum(axis=1) - 1).max() < 1e-10


def test_trajectory_file_round_trip(tmp_path):
    pi = cyclic_jumps(3)
    tabs = [waiting_time_table(K4, TimeGrid(0.01, 300))] * 3
    recs = simulate_ensemble(pi, tabs, 0, 3.0, 40, 9)
    path = tmp_path / "traj.csv"
    write_trajectories(recs, path)
    back = read_trajectories(path, 40, 0, 3.0)
    assert [r.times for r in back] == [r.times for r in recs]
    assert [r.final_site for r in back] == [r.final_site for r in recs]
