import numpy as np
import pytest

from quiver_vlmc.errors import DomainError, EstimatorDegeneracyError, InputError
from quiver_vlmc.fixtures import build_branching_fixture, cycle_model, loop_model
from quiver_vlmc.informative import informative
from quiver_vlmc.quiver import is_admissible
from quiver_vlmc.rank import TangentBlock, minimal_window, restricted_jacobian
from quiver_vlmc.simulate import (empirical_informative, estimate_minimal_window, load_trajectory,
                                  minimal_window_estimate, oracle_gap, plugin_jacobian, plugin_jacobians,
                                  save_trajectory, sigma_p, simulate)


@pytest.fixture(scope="module")
def branching():
    return build_branching_fixture(0.3, 0.6)[0]


def test_branching_trajectory_structure():
    model, _ = build_branching_fixture(0.5, 0.5)
    traj = simulate(model, model.theta0, 5000, seed=3)
    assert traj.n == 5000 and is_admissible(model.quiver, traj.path)
    # after d comes b, after e comes c, after b or c comes a
    follow = {"d": "b", "e": "c", "b": "a", "c": "a"}
    for x, y in zip(traj.path, traj.path[1:]):
        if x in follow:
            assert y == follow[x]
    after_a = [y for x, y in zip(traj.path, traj.path[1:]) if x == "a"]
    assert abs(after_a.count("d") / len(after_a) - 0.5) < 0.05


def test_cycle_is_deterministic_and_seeded_runs_repeat(branching):
    c = cycle_model(3)
    traj = simulate(c, [], 7, seed=0)
    nxt = {"x0": "x1", "x1": "x2", "x2": "x0"}
    assert all(nxt[x] == y for x, y in zip(traj.path, traj.path[1:]))
    a = simulate(branching, branching.theta0, 1000, seed=11)
    b = simulate(branching, branching.theta0, 1000, seed=11)
    c2 = simulate(branching, branching.theta0, 1000, seed=12)
    assert a == b and a.edges != c2.edges


def test_single_step_and_validation(branching):
    assert simulate(branching, branching.theta0, 1, seed=0).n == 1
    assert simulate(loop_model(), [], 1).edges == ("l",)
    with pytest.raises(InputError):
        simulate(branching, branching.theta0, 0)
    with pytest.raises(InputError):
        simulate(branching, branching.theta0, 10, seed=-1)
    with pytest.raises(DomainError):
        simulate(branching, branching.theta0, 10, initial=["a", "b"])
    traj = simulate(branching, branching.theta0, 10, initial=["b", "a"], burn_in=0)
    assert traj.burn_in == 2 and traj.initial in (("d", "b"), ("e", "c"))


def test_law_of_large_numbers(branching):
    traj = simulate(branching, branching.theta0, 200_000, seed=5, depth=2)
    for m in (1, 2):
        emp = empirical_informative(traj, m, branching)
        ref = informative(branching, branching.theta0, m)
        assert not emp.missing
        assert np.abs(emp.flat - ref.flat).max() < 0.01


def test_empirical_errors_shrink_with_n(branching):
    ref = informative(branching, branching.theta0, 1).flat
    medians = []
    for n in (1_000, 10_000, 100_000):
        errs = []
        for s in range(20):
            emp = empirical_informative(simulate(branching, branching.theta0, n, seed=s), 1, branching)
            errs.append(np.nanmax(np.abs(emp.flat - ref)))
        medians.append(np.median(errs))
    assert medians[0] > medians[1] > medians[2]


def test_empirical_depth_checks(branching):
    traj = simulate(branching, branching.theta0, 100, seed=0)
    with pytest.raises(InputError):
        empirical_informative(traj, 3, branching)
    short = simulate(branching, branching.theta0, 3, seed=0, burn_in=0)
    emp = empirical_informative(short, 2, branching)
    assert len(emp.missing) >= 1 and np.isnan(emp.matrix).any()


def test_plugin_close_to_analytic(branching):
    L2 = restricted_jacobian(branching, branching.theta0, 2).matrix
    close = sum(np.abs(plugin_jacobian(branching, branching.theta0, 2, n=100_000, seed=s).matrix - L2).max() < 0.05
                for s in range(20))
    assert close >= 18


def test_plugin_zero_parameter_model():
    Js = plugin_jacobians(cycle_model(3), [], [1, 2], n=50)
    assert all(J.matrix.shape == (9, 0) for J in Js.values())


def test_plugin_errors(branching):
    with pytest.raises(EstimatorDegeneracyError):
        plugin_jacobian(branching, branching.theta0, 2, n=3, seed=0)
    with pytest.raises(InputError):
        plugin_jacobian(branching, branching.theta0, 2, n=100, seed_policy="shared")
    with pytest.raises(InputError):
        plugin_jacobian(branching, branching.theta0, 2, n=100, delta=0.0)
    with pytest.raises(DomainError):
        plugin_jacobian(branching, branching.theta0, 2, n=100, delta=5.0)


def test_crn_shares_streams(branching):
    J = plugin_jacobian(branching, branching.theta0, 2, n=2000, seed=1)
    K = plugin_jacobian(branching, branching.theta0, 2, n=2000, seed=1)
    assert np.array_equal(J.matrix, K.matrix) and J.seed_policy == "crn"


def test_sigma_p_edge_cases():
    assert sigma_p(np.zeros((3, 0)), 0) == float("inf")
    assert sigma_p(np.ones((1, 2)), 2) == 0.0
    assert sigma_p(np.diag([3.0, 2.0]), 2) == pytest.approx(2.0)


def test_minimal_window_estimate_rules(branching):
    zeros = [np.zeros((4, 2))] * 3
    assert minimal_window_estimate(zeros, 0.1, 2) == 4
    eye = [np.eye(2)] * 3
    assert minimal_window_estimate(eye, 1e-12, 2) == 1
    assert minimal_window_estimate({2: np.eye(2), 3: np.eye(2)}, 0.5, 2) == 2
    T = TangentBlock.full(2)
    analytic = [restricted_jacobian(branching, branching.theta0, m, T).matrix for m in (1, 2, 3)]
    gap = oracle_gap(branching, branching.theta0)
    assert minimal_window_estimate(analytic, gap, 2) == minimal_window(branching, branching.theta0).m_star == 2


def test_estimate_minimal_window_small_run(branching):
    run = estimate_minimal_window(branching, branching.theta0, M=3, n=50_000, seeds=range(3))
    assert set(run.estimates) == {0, 1, 2} and not run.failures
    assert run.hits(2) == 3
    starved = estimate_minimal_window(branching, branching.theta0, M=2, n=3, seeds=[0])
    assert 0 in starved.failures and not starved.estimates


def test_trajectory_round_trip(tmp_path, branching):
    traj = simulate(branching, branching.theta0, 500, seed=9, depth=3)
    path = tmp_path / "traj.txt"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert back == traj
    assert np.array_equal(empirical_informative(back, 3, branching).counts,
                          empirical_informative(traj, 3, branching).counts)
