import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fd_jacobian, independent_random_model, window_transition_oracle
from quiver_vlmc.chain import TransitionArray, stationary, transition_matrix
from quiver_vlmc.errors import DegeneracyError, InputError
from quiver_vlmc.fixtures import (build_branching_fixture, random_edge_homogeneous_model, source_edge_model,
                                  two_loop_model)
from quiver_vlmc.informative import (edge_vector_rho, factorization_jacobian_fd, factorization_map,
                                     fiber_decomposition, homogeneous_copy_maps, homogeneous_cross_check,
                                     informative, informative_jacobian, model_chart, reduced_chart)
from quiver_vlmc.quiver import VisibleStateSpace
from quiver_vlmc.rank import restricted_jacobian

GRID = list(itertools.product((0.2, 0.5, 0.8), repeat=2))


@pytest.mark.parametrize("eta", GRID)
def test_branching_reduced_maps(eta):
    eta1, eta2 = eta
    model, oracle = build_branching_fixture(eta1, eta2)
    q2 = model_chart(model, 2).reduce(informative(model, model.theta0, 2))
    q1 = model_chart(model, 1).reduce(informative(model, model.theta0, 1))
    assert np.allclose(q2, oracle.q2_reduced, atol=1e-12, rtol=0)
    assert q1.shape == (1,) and abs(q1[0] - oracle.q1_reduced) < 1e-12
    q1_coord = informative(model, model.theta0, 1).coord(("a",), ("d",))
    assert abs(q1_coord - eta2 / (eta2 + 1 - eta1)) < 1e-12


def test_depth_r_equals_transition_matrix():
    model, _ = build_branching_fixture(0.3, 0.6)
    assert np.array_equal(informative(model, model.theta0, 2).flat,
                          transition_matrix(model, model.theta0).matrix.ravel())


def test_informative_rows_and_mask():
    rng = np.random.default_rng(1)
    model = independent_random_model(rng, depth=3)
    for m in (1, 2, 3, 4):
        q = informative(model, model.theta0, m)
        M = q.matrix
        assert np.allclose(M.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(q.flat[q.mask.ravel()] == 0.0)


def test_factorization_identity_independent_oracle():
    rng = np.random.default_rng(2)
    model = independent_random_model(rng, depth=2)
    lo, hi = model.box
    for theta in lo + (hi - lo) * rng.uniform(0.05, 0.95, size=(20, model.dim)):
        g = factorization_map(transition_matrix(model, theta), 1)
        ref = window_transition_oracle(model, theta, 1)
        for (y, z), v in ref.items():
            assert abs(g.matrix[g.space.index[y], g.space.index[z]] - v) < 1e-10


def test_factorization_identity_on_branching():
    model, _ = build_branching_fixture(0.3, 0.6)
    for theta in np.random.default_rng(3).uniform(0.1, 0.9, size=(20, 2)):
        P = transition_matrix(model, theta)
        assert np.abs(factorization_map(P, 1).flat - informative(model, theta, 1).flat).max() < 1e-10
        assert np.array_equal(factorization_map(P, 2).flat, P.matrix.ravel())


def test_zero_fiber_mass_is_named():
    model, _ = build_branching_fixture(0.3, 0.6)
    P = transition_matrix(model, model.theta0)
    # make ca unreachable: ec now loops back into... redirect mass so that e-branch is never taken
    M = P.matrix.copy()
    idx = P.space.index
    for ctx in (("b", "a"), ("c", "a")):
        M[idx[ctx], idx[("a", "d")]] = 1.0
        M[idx[ctx], idx[("a", "e")]] = 0.0
    with pytest.raises(DegeneracyError):
        factorization_map(P.with_matrix(M), 1)


def test_fiber_decomposition_branching():
    eta1, eta2 = 0.3, 0.6
    model, oracle = build_branching_fixture(eta1, eta2)
    fd = fiber_decomposition(model, model.theta0, ("a",), "d")
    weights = dict(zip(("".join(z) for z in fd.fiber), fd.weights))
    assert weights == pytest.approx(oracle.fiber_weights_a, abs=1e-12)
    assert abs(fd.weights.sum() - 1) < 1e-12
    assert abs(fd.value - oracle.q1_reduced) < 1e-12
    assert np.allclose(fd.gradient, oracle.dq1_reduced.ravel(), atol=1e-12)
    single = fiber_decomposition(model, model.theta0, ("b", "a"), "d")
    assert len(single.fiber) == 1 and single.weights[0] == 1.0


def test_fiber_identity_all_pairs():
    rng = np.random.default_rng(4)
    model = independent_random_model(rng, depth=3)
    for m in (1, 2):
        q = informative(model, model.theta0, m)
        for y in q.space.states:
            for a in model.quiver.successors(y[-1]):
                z = y[1:] + (a,)
                if z not in q.space.index:
                    continue
                fd = fiber_decomposition(model, model.theta0, y, a)
                assert abs(fd.weights.sum() - 1) < 1e-12 and fd.weights.min() >= 0
                assert abs(fd.value - q.coord(y, z)) < 1e-12


def test_analytic_jacobian_matches_fd():
    rng = np.random.default_rng(5)
    models = [build_branching_fixture(0.3, 0.6)[0], independent_random_model(rng, depth=2),
              random_edge_homogeneous_model(rng)]
    for model in models:
        for m in (1, 2, 3):
            J = informative_jacobian(model, model.theta0, m)
            F = fd_jacobian(lambda t: informative(model, t, m).flat, model.theta0)
            assert np.abs(J - F).max() <= 1e-6 * max(1.0, np.abs(J).max())


def test_chain_rule_through_factorization():
    model, _ = build_branching_fixture(0.3, 0.6)
    P = transition_matrix(model, model.theta0)
    DG = factorization_jacobian_fd(P, 1)
    L1 = restricted_jacobian(model, model.theta0, 1).matrix
    L2 = model_chart(model, 2).reduce_jacobian(restricted_jacobian(model, model.theta0, 2).matrix)
    assert np.abs(L1 - DG @ L2).max() < 1e-8


def _random_stochastic(rng, n, density=0.6):
    mask = rng.random((n, n)) > density
    mask[np.arange(n), rng.integers(0, n, n)] = False
    W = rng.random((n, n)) * ~mask
    return W / W.sum(axis=1, keepdims=True), mask


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_reduced_chart_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    P, mask = _random_stochastic(rng, n)
    space = VisibleStateSpace(1, tuple((f"s{i}",) for i in range(n)))
    chart = reduced_chart(space, mask)
    assert chart.size == (~mask).sum() - n
    back = chart.reconstruct(chart.reduce(P.ravel()))
    assert np.abs(back.flat - P.ravel()).max() < 1e-14


def test_reduced_chart_dimension_mismatch():
    model, _ = build_branching_fixture(0.3, 0.6)
    with pytest.raises(InputError):
        model_chart(model, 2).reduce(np.zeros(5))


def test_edge_vector_rho():
    rho = edge_vector_rho(two_loop_model(0.3), [0.3])
    assert rho.pairs == (("u", "u"), ("u", "v"), ("v", "u"), ("v", "v"))
    assert np.allclose(rho.values, [0.3, 0.7, 0.3, 0.7])


def test_copy_maps_exact():
    rng = np.random.default_rng(6)
    model = random_edge_homogeneous_model(rng)
    for m, n in itertools.permutations((1, 2, 3), 2):
        cm = homogeneous_copy_maps(model, m, n)
        assert cm.represented
        k = len(cm.pairs)
        assert np.array_equal(cm.H[m] @ cm.F[m], np.eye(k))
        lo, hi = model.box
        for theta in lo + (hi - lo) * rng.uniform(0.05, 0.95, size=(20, model.dim)):
            qm = informative(model, theta, m).flat
            qn = informative(model, theta, n).flat
            assert np.array_equal(cm.G(m, n) @ qm, qn)
            rho = edge_vector_rho(model, theta).values
            assert np.array_equal(cm.F[m] @ rho, qm)


def test_copy_maps_report_missing_pair():
    model = source_edge_model()
    cm = homogeneous_copy_maps(model, 1, 3)
    assert not cm.represented
    assert cm.missing["depth"] == 3 and cm.missing["pair"][0] == "x"


def test_homogeneous_cross_check_on_homogeneous_model():
    rng = np.random.default_rng(7)
    model = random_edge_homogeneous_model(rng)
    for m in (1, 2, 3):
        assert homogeneous_cross_check(model, model.theta0, m) < 1e-12


def test_stationary_of_informative_matrix_is_window_marginal():
    model, _ = build_branching_fixture(0.3, 0.6)
    q1 = informative(model, model.theta0, 1)
    pi1 = stationary(TransitionArray(q1.space, q1.matrix, q1.mask)).probs
    pi2 = stationary(transition_matrix(model, model.theta0))
    for i, y in enumerate(q1.space.states):
        assert abs(pi1[i] - sum(p for z, p in zip(pi2.space.states, pi2.probs) if z[-1:] == y)) < 1e-12
