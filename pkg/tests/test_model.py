import numpy as np
import pytest

from quiver_vlmc.errors import DomainError, InputError, ModelValidityError
from quiver_vlmc.fixtures import (branching_quiver, branching_rows, build_branching_fixture,
                                  random_edge_homogeneous_model, two_loop_model)
from quiver_vlmc.model import (EDGE_HOMOGENEOUS, EXACT_DEPTH, ParamModel, check_edge_homogeneous,
                               check_exact_depth_witness, default_box, eval_mu, grad_mu, sample_box)


@pytest.fixture
def branching():
    return build_branching_fixture(0.3, 0.7)[0]


def test_eval_mu_examples(branching):
    assert eval_mu(branching, [0.3, 0.7], "ba", "d") == pytest.approx(0.3)
    assert eval_mu(branching, [0.3, 0.7], "ba", "e") == pytest.approx(0.7)
    assert eval_mu(branching, [0.3, 0.7], "ad", "b") == 1.0
    assert eval_mu(branching, [0.3, 0.7], "bad", "b") == 1.0  # longer contexts use their suffix


def test_eval_mu_outside_box(branching):
    with pytest.raises(DomainError):
        eval_mu(branching, [1.5, 0.5], "ba", "d")


def test_grad_mu_examples(branching):
    assert np.array_equal(grad_mu(branching, [0.3, 0.7], "ba", "d"), [1.0, 0.0])
    assert np.array_equal(grad_mu(branching, [0.3, 0.7], "ca", "e"), [0.0, -1.0])
    assert np.array_equal(grad_mu(branching, [0.3, 0.7], "ad", "b"), [0.0, 0.0])


def test_forced_zero_entries():
    rows = branching_rows()
    rows[("b", "a")] = {"d": 1}
    model = ParamModel(branching_quiver(), EXACT_DEPTH, 2, rows, [0.4, 0.4], forced_zeros=[(("b", "a"), "e")])
    assert eval_mu(model, [0.4, 0.4], "ba", "e") == 0.0
    assert np.array_equal(grad_mu(model, [0.4, 0.4], "ba", "e"), [0.0, 0.0])
    assert (("b", "a"), "e") in model.forced_zeros


def test_forced_zero_overlap_rejected():
    with pytest.raises(InputError):
        ParamModel(branching_quiver(), EXACT_DEPTH, 2, branching_rows(), [0.4, 0.4],
                   forced_zeros=[(("b", "a"), "e")])


def test_grad_mu_matches_fd_on_random_models():
    rng = np.random.default_rng(3)
    for _ in range(5):
        model = random_edge_homogeneous_model(rng)
        for theta in sample_box(model, 10, seed=1, margin=0.05):
            for ctx, row in model.rows.items():
                for a, _ in row:
                    g = grad_mu(model, theta, ctx, a)
                    fd = np.array([(eval_mu(model, theta + 1e-5 * e, ctx, a) - eval_mu(model, theta - 1e-5 * e, ctx, a))
                                   / 2e-5 for e in np.eye(model.dim)])
                    assert np.abs(g - fd).max() <= 1e-6 * max(1.0, np.abs(g).max())


def test_row_sums_hold_at_box_points():
    rng = np.random.default_rng(4)
    model = random_edge_homogeneous_model(rng)
    for theta in sample_box(model, 100, seed=2):
        for ctx, row in model.rows.items():
            assert abs(sum(ex.evaluate(theta) for _, ex in row) - 1.0) < 1e-12


@pytest.mark.parametrize("rows,err", [
    ({("b", "a"): {"d": "p0", "e": "0.9 - p0"}}, ModelValidityError),
    ({("b", "a"): {"d": 0, "e": 1}}, ModelValidityError),
    ({("b", "a"): {"b": 1}}, InputError),
    ({("b", "d"): {"b": 1}}, InputError),
    ({("b",): {"d": 1}}, InputError),
])
def test_validation_failures(rows, err):
    full = branching_rows()
    full.update(rows)
    with pytest.raises(err):
        ParamModel(branching_quiver(), EXACT_DEPTH, 2, full, [0.4, 0.4],
                   box=[[0.1, 0.5], [0.1, 0.5]])


def test_parameter_beyond_dimension():
    full = branching_rows("p0", "p2")
    with pytest.raises(InputError):
        ParamModel(branching_quiver(), EXACT_DEPTH, 2, full, [0.4, 0.4])


def test_theta0_outside_box():
    with pytest.raises(DomainError):
        ParamModel(branching_quiver(), EXACT_DEPTH, 2, branching_rows(), [0.4, 0.4], box=[[0.5, 0.6], [0.1, 0.9]])


def test_default_box_keeps_entries_inside(branching):
    lo, hi = default_box(branching)
    assert np.all(lo > 0) and np.all(hi < 1)
    assert np.all(lo < branching.theta0) and np.all(branching.theta0 < hi)
    # shrunk by 10% relative to the exact reach (0 and 1)
    assert lo[0] == pytest.approx(0.3 - 0.9 * 0.3)
    assert hi[1] == pytest.approx(0.7 + 0.9 * 0.3)


def test_check_edge_homogeneous(branching):
    samples = sample_box(branching, 5, seed=0)
    v = check_edge_homogeneous(branching, samples)
    assert not v.holds
    assert v.witness["contexts"] == ["ba", "ca"] and v.witness["edge"] == "d"
    diag = ParamModel(branching_quiver(), EXACT_DEPTH, 2, branching_rows("p0", "p0"), [0.4])
    assert check_edge_homogeneous(diag, sample_box(diag, 5)).holds
    assert check_edge_homogeneous(two_loop_model(), [[0.3]]).holds


def test_check_exact_depth_witness(branching):
    v = check_exact_depth_witness(branching, 1, sample_box(branching, 5))
    assert v.holds and v.witness["contexts"] == ["ba", "ca"]
    assert not check_exact_depth_witness(branching, 1, [[0.5, 0.5]]).holds
    diag = ParamModel(branching_quiver(), EXACT_DEPTH, 2, branching_rows("p0", "p0"), [0.4])
    assert not check_exact_depth_witness(diag, 1, sample_box(diag, 5)).holds
    with pytest.raises(InputError):
        check_exact_depth_witness(branching, 0, [[0.5, 0.5]])
    with pytest.raises(InputError):
        check_exact_depth_witness(branching, 2, [[0.5, 0.5]])


def test_edge_homogeneous_forces_depth_one():
    m = two_loop_model(0.3)
    assert m.regime == EDGE_HOMOGENEOUS and m.depth == 1


def test_reparameterize_is_consistent(branching):
    D = np.array([[1.0, 0.5], [-0.3, 2.0]])
    pulled = branching.reparameterize(D)
    t = np.array([0.01, -0.02])
    theta = branching.theta0 + D @ t
    assert pulled.in_box(t)
    for ctx, row in branching.rows.items():
        for a, ex in row:
            assert pulled.entry(ctx, a).evaluate(t) == pytest.approx(ex.evaluate(theta), abs=1e-14)


def test_with_theta0(branching):
    moved = branching.with_theta0([0.5, 0.5])
    assert np.array_equal(moved.theta0, [0.5, 0.5])
    assert np.array_equal(moved.box[0], branching.box[0])
