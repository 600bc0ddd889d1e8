import itertools

import numpy as np
import pytest

from oracles import branching_pi_closed_form, fd_jacobian, independent_random_model
from quiver_vlmc.chain import (box_corners, chain_structure, is_irreducible, mixing_report, state_space,
                               stationary, stationary_derivative, transition_derivatives, transition_matrix)
from quiver_vlmc.errors import DegeneracyError, InputError
from quiver_vlmc.fixtures import build_branching_fixture, cycle_model, loop_model, random_exact_depth_model
from quiver_vlmc.model import EXACT_DEPTH, ParamModel
from quiver_vlmc.quiver import Quiver


def test_branching_transition_matrix_at_half():
    model, _ = build_branching_fixture(0.5, 0.5)
    P = transition_matrix(model, [0.5, 0.5])
    idx = P.space.index
    assert P.matrix.shape == (6, 6)
    for ctx in (("b", "a"), ("c", "a")):
        assert P.matrix[idx[ctx], idx[("a", "d")]] == 0.5
        assert P.matrix[idx[ctx], idx[("a", "e")]] == 0.5
    assert P.matrix[idx[("a", "d")], idx[("d", "b")]] == 1.0
    assert P.matrix[idx[("e", "c")], idx[("c", "a")]] == 1.0
    assert np.all(P.matrix[P.mask] == 0.0)
    assert np.allclose(P.matrix.sum(axis=1), 1.0, atol=1e-12)


def test_trivial_chains():
    P = transition_matrix(loop_model(), [])
    assert P.matrix.tolist() == [[1.0]]
    C = transition_matrix(cycle_model(4), []).matrix
    assert np.array_equal(C @ C.T, np.eye(4)) and set(C.sum(axis=0)) == {1.0}
    assert is_irreducible(C)
    assert np.allclose(stationary(C).probs, 0.25)


def test_block_diagonal_is_reducible():
    assert not is_irreducible(np.eye(2))
    assert not is_irreducible(np.array([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]]))


@pytest.mark.parametrize("eta", list(itertools.product((0.2, 0.5, 0.8), repeat=2)))
def test_branching_stationary_closed_form(eta):
    model, oracle = build_branching_fixture(*eta)
    law = stationary(transition_matrix(model, model.theta0))
    ref = branching_pi_closed_form(*eta)
    assert max(abs(law.as_dict()[k] - v) for k, v in ref.items()) < 1e-12
    assert law.as_dict() == pytest.approx(oracle.pi, abs=1e-12)
    assert np.abs(law.probs @ transition_matrix(model, model.theta0).matrix - law.probs).max() < 1e-12


def test_stationary_uniform_at_half():
    model, _ = build_branching_fixture(0.5, 0.5)
    assert np.allclose(stationary(transition_matrix(model, [0.5, 0.5])).probs, 1 / 6, atol=1e-14)


def test_stationary_derivative_closed_form():
    for eta1, eta2 in itertools.product((0.2, 0.5, 0.8), repeat=2):
        model, _ = build_branching_fixture(eta1, eta2)
        P = transition_matrix(model, model.theta0)
        dP = transition_derivatives(model, model.theta0)
        dpi = stationary_derivative(P, dP)
        D = eta2 + 1 - eta1
        # symbolic partials of the closed form
        d_eta1 = np.empty(6)
        d_eta1[:3] = eta2 / (3 * D * D)
        d_eta1[3:] = (-D + (1 - eta1)) / (3 * D * D)
        d_eta2 = np.empty(6)
        d_eta2[:3] = (D - eta2) / (3 * D * D)
        d_eta2[3:] = -(1 - eta1) / (3 * D * D)
        order = [P.space.index[tuple(w)] for w in ("ba", "ad", "db", "ae", "ec", "ca")]
        assert np.allclose(dpi[0][order], d_eta1, atol=1e-13)
        assert np.allclose(dpi[1][order], d_eta2, atol=1e-13)
        assert np.abs(dpi.sum(axis=1)).max() < 1e-12
        fd = fd_jacobian(lambda t: stationary(transition_matrix(model, t)).probs, model.theta0, 1e-6).T
        assert np.abs(dpi - fd).max() <= 1e-7 * max(1.0, np.abs(dpi).max())


def test_stationary_derivative_zero_and_validation():
    model, _ = build_branching_fixture(0.3, 0.6)
    P = transition_matrix(model, model.theta0)
    assert np.array_equal(stationary_derivative(P, np.zeros((6, 6))), np.zeros(6))
    bad = np.zeros((6, 6))
    bad[0, 0] = 1.0
    with pytest.raises(InputError):
        stationary_derivative(P, bad)
    masked = np.zeros((6, 6))
    i = int(np.argmax(P.mask[0]))
    j = int(np.flatnonzero(~P.mask[0])[0])
    masked[0, i], masked[0, j] = 1e-3, -1e-3
    with pytest.raises(InputError):
        stationary_derivative(P, masked)


def test_stationary_random_models():
    rng = np.random.default_rng(11)
    for k in range(50):
        gen = random_exact_depth_model if k % 2 else independent_random_model
        model = gen(rng, depth=2)
        P = transition_matrix(model, model.theta0)
        pi = stationary(P).probs
        assert abs(pi.sum() - 1) < 1e-12
        assert np.abs(pi @ P.matrix - pi).max() < 1e-12
        assert pi.min() > 0


def test_local_stability_of_irreducibility():
    rng = np.random.default_rng(12)
    model, _ = build_branching_fixture(0.4, 0.6)
    P = transition_matrix(model, model.theta0)
    free = ~P.mask
    for _ in range(20):
        dP = rng.normal(size=P.matrix.shape) * free
        dP -= free * (dP.sum(axis=1, keepdims=True) / free.sum(axis=1, keepdims=True))
        dP *= 1e-3 / np.linalg.norm(dP)
        assert is_irreducible(P.matrix + dP)


def _two_class_model():
    q = Quiver(("u",), (("x", "u", "u"), ("y", "u", "u")))
    rows = {("x", "x"): {"x": 1}, ("y", "y"): {"y": 1},
            ("x", "y"): {"x": "p0", "y": "1 - p0"}, ("y", "x"): {"x": "p0", "y": "1 - p0"}}
    return ParamModel(q, EXACT_DEPTH, 2, rows, [0.5], name="two-class")


def test_reducible_support_is_named():
    model = _two_class_model()
    with pytest.raises(DegeneracyError, match="closed classes") as exc:
        state_space(model, 2)
    assert "'xx'" in str(exc.value) and "'yy'" in str(exc.value)


def test_singular_resolvent_raises():
    P = np.eye(3)
    with pytest.raises(DegeneracyError, match="support components"):
        stationary(P)


def test_state_space_below_depth_is_suffix_set():
    model, _ = build_branching_fixture(0.3, 0.6)
    assert [''.join(s) for s in state_space(model, 1)] == ["a", "b", "c", "d", "e"]
    with pytest.raises(InputError):
        chain_structure(model, 1)


def test_mixing_report_and_corners():
    model, _ = build_branching_fixture(0.3, 0.6)
    rep = mixing_report(model, model.theta0)
    assert rep["irreducible"] and rep["min_stationary_mass"] > 0
    corners = box_corners(model)
    assert corners.shape == (4, 2)
    assert all(model.in_box(c) for c in corners)
