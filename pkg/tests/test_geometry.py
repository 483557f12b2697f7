import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgmlab import geometry as geo

GAMMAS = [0.1, 1.0, 3.0, 10.0]

finite_vec = lambda n: arrays(np.float64, n,
                              elements=st.floats(-50, 50, allow_nan=False))


def sample_sets(dim=3):
    g = np.random.default_rng(0)
    a = g.normal(size=dim)
    A_eq = g.normal(size=(2, dim))
    return [
        geo.whole_space(),
        geo.hyperplane(a, 1.5),
        geo.halfspace(a, -0.5),
        geo.box(-np.ones(dim), 2 * np.ones(dim)),
        geo.ball(g.normal(size=dim), 2.0),
        geo.affine_subspace(A_eq, g.normal(size=2)),
    ]


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def test_whole_space_projection_is_identity(rng):
    x = rng.normal(size=4)
    assert np.array_equal(geo.project(geo.whole_space(), x), x)


def test_hyperplane_projection_formula(rng):
    a = rng.normal(size=5)
    b = 2.0
    S = geo.hyperplane(a, b)
    x = rng.normal(size=5)
    p = geo.project(S, x)
    expected = x - (a @ x - b) / (a @ a) * a
    assert np.allclose(p, expected, atol=1e-14)
    assert abs(a @ p - b) < 1e-12


def test_halfspace_projection(rng):
    a = np.array([1.0, 0.0])
    S = geo.halfspace(a, 1.0)  # x_0 <= 1
    assert np.array_equal(geo.project(S, np.array([0.5, 7.0])),
                          np.array([0.5, 7.0]))
    p = geo.project(S, np.array([3.0, 2.0]))
    assert np.allclose(p, [1.0, 2.0])


def test_box_projection_clamps():
    S = geo.box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
    p = geo.project(S, np.array([5.0, -3.0]))
    assert np.allclose(p, [1.0, 0.0])


def test_ball_projection(rng):
    c = np.array([1.0, 1.0])
    S = geo.ball(c, 2.0)
    inside = c + np.array([0.5, 0.0])
    assert np.array_equal(geo.project(S, inside), inside)
    far = c + np.array([6.0, 8.0])
    p = geo.project(S, far)
    assert abs(np.linalg.norm(p - c) - 2.0) < 1e-12
    # projection lies on the segment from center to the point
    assert np.allclose(p, c + 2.0 * np.array([0.6, 0.8]), atol=1e-12)


def test_affine_subspace_projection_against_lstsq(rng):
    A_eq = rng.normal(size=(2, 5))
    b_eq = rng.normal(size=2)
    S = geo.affine_subspace(A_eq, b_eq)
    x = rng.normal(size=5)
    p = geo.project(S, x)
    assert np.allclose(A_eq @ p, b_eq, atol=1e-10)
    # optimality: x - p orthogonal to the nullspace of A_eq
    shift = np.linalg.lstsq(A_eq, b_eq, rcond=None)[0]
    _, _, vh = np.linalg.svd(A_eq)
    null = vh[2:].T  # orthonormal basis of the nullspace
    assert np.allclose(null.T @ (x - p), 0.0, atol=1e-10)
    # idempotence
    assert np.allclose(geo.project(S, p), p, atol=1e-12)
    del shift


def test_affine_subspace_rejects_inconsistent_shapes():
    with pytest.raises(ValueError):
        geo.affine_subspace(np.ones((2, 3)), np.ones(3))


@pytest.mark.parametrize("set_idx", range(6))
def test_projection_idempotent_and_batch_consistent(set_idx, rng):
    S = sample_sets()[set_idx]
    X = rng.normal(size=(3, 7)) * 3
    P = geo.project(S, X)
    # idempotent
    assert np.allclose(geo.project(S, P), P, atol=1e-10)
    # batch equals column-by-column, bitwise
    for j in range(7):
        assert np.array_equal(P[:, j], geo.project(S, X[:, j]))


def test_projection_firmly_nonexpansive(rng):
    for S in sample_sets():
        for _ in range(100):
            x, y = rng.normal(size=3) * 5, rng.normal(size=3) * 5
            px, py = geo.project(S, x), geo.project(S, y)
            d = px - py
            assert d @ d <= d @ (x - y) + 1e-10


# ---------------------------------------------------------------------------
# proximal maps
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", GAMMAS)
def test_prox_zero_and_constant_are_identity(gamma, rng):
    x = rng.normal(size=4)
    assert np.array_equal(geo.prox(geo.zero_regularizer(), gamma, x), x)
    assert np.array_equal(geo.prox(geo.constant_regularizer(3.7), gamma, x), x)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_prox_l1_soft_threshold(gamma):
    w = 0.4
    g = geo.l1_regularizer(w)
    x = np.array([3.0, -0.1, -2.0, 0.0, w * gamma])
    p = geo.prox(g, gamma, x)
    expected = np.sign(x) * np.maximum(np.abs(x) - gamma * w, 0.0)
    assert np.allclose(p, expected, atol=1e-15)


@given(finite_vec(4), st.floats(0.01, 10))
@settings(max_examples=50, deadline=None)
def test_prox_l1_optimality(x, gamma):
    # p minimizes 0.5||y-x||^2 + gamma*w*||y||_1  <=>  x - p in gamma*w*d||.||_1(p)
    w = 0.25
    p = geo.prox(geo.l1_regularizer(w), gamma, x)
    r = x - p
    on = p != 0
    assert np.allclose(r[on], gamma * w * np.sign(p[on]), atol=1e-12)
    assert np.all(np.abs(r[~on]) <= gamma * w + 1e-12)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_prox_quadratic_solves_linear_system(gamma, rng):
    B = rng.normal(size=(4, 4))
    Q = B.T @ B
    q = rng.normal(size=4)
    g = geo.quadratic_regularizer(Q, q)
    x = rng.normal(size=4)
    p = geo.prox(g, gamma, x)
    # optimality: p + gamma*(Q p + q) = x
    assert np.allclose(p + gamma * (Q @ p + q), x, atol=1e-10)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("set_idx", range(6))
def test_prox_of_indicator_is_projection(gamma, set_idx, rng):
    S = sample_sets()[set_idx]
    x = rng.normal(size=3) * 4
    assert np.array_equal(geo.prox(geo.indicator(S), gamma, x),
                          geo.project(S, x))


def test_prox_firmly_nonexpansive(rng):
    regs = [geo.l1_regularizer(0.3),
            geo.quadratic_regularizer(np.diag([1.0, 2.0, 0.5]), np.zeros(3))]
    for g in regs:
        for _ in range(100):
            x, y = rng.normal(size=3) * 5, rng.normal(size=3) * 5
            px, py = geo.prox(g, 1.0, x), geo.prox(g, 1.0, y)
            d = px - py
            assert d @ d <= d @ (x - y) + 1e-10


def test_quadratic_regularizer_validation():
    with pytest.raises(ValueError):
        geo.quadratic_regularizer(np.array([[0.0, 1.0], [0.0, 0.0]]),
                                  np.zeros(2))  # not symmetric
    with pytest.raises(ValueError):
        geo.quadratic_regularizer(-np.eye(2), np.zeros(2))  # not PSD
    with pytest.raises(ValueError):
        geo.l1_regularizer(0.0)


def test_regularizer_value():
    assert geo.regularizer_value(geo.zero_regularizer(), np.ones(3)) == 0.0
    assert geo.regularizer_value(geo.constant_regularizer(2.5), np.ones(3)) == 2.5
    x = np.array([1.0, -2.0])
    assert np.isclose(geo.regularizer_value(geo.l1_regularizer(0.5), x), 1.5)
    S = geo.ball(np.zeros(2), 1.0)
    assert geo.regularizer_value(geo.indicator(S), np.zeros(2)) == 0.0
    assert geo.regularizer_value(geo.indicator(S), 5 * np.ones(2)) == np.inf


# ---------------------------------------------------------------------------
# resolvents
# ---------------------------------------------------------------------------

def test_resolvent_of_zero_operator_is_identity(rng):
    op = geo.LinearMonotoneOperator(M_op=np.zeros((3, 3)))
    x = rng.normal(size=3)
    assert np.array_equal(geo.resolvent(op, 0.7, x), x)


def test_resolvent_diagonal_example():
    op = geo.LinearMonotoneOperator(M_op=np.diag([1.0, 3.0]))
    out = geo.resolvent(op, 0.5, np.array([3.0, 5.0]))
    assert np.allclose(out, [2.0, 2.0], atol=1e-14)


def test_resolvent_matches_quadratic_prox(rng):
    B = rng.normal(size=(4, 4))
    Q = B.T @ B
    op = geo.LinearMonotoneOperator(M_op=Q)
    g = geo.quadratic_regularizer(Q, np.zeros(4))
    x = rng.normal(size=4)
    for gamma in GAMMAS:
        assert np.allclose(geo.resolvent(op, gamma, x),
                           geo.prox(g, gamma, x), atol=1e-10)


def test_resolvent_accepts_skew_operator(rng):
    # a rotation generator is monotone with zero symmetric part
    K = np.array([[0.0, -2.0], [2.0, 0.0]])
    op = geo.LinearMonotoneOperator(M_op=K)
    x = rng.normal(size=2)
    out = geo.resolvent(op, 1.0, x)
    assert np.allclose((np.eye(2) + K) @ out, x, atol=1e-12)


def test_monotone_operator_rejects_negative_symmetric_part():
    with pytest.raises(ValueError):
        geo.LinearMonotoneOperator(M_op=-np.eye(2))


def test_resolvent_batch_consistent(rng):
    op = geo.LinearMonotoneOperator(M_op=np.diag([1.0, 2.0, 3.0]))
    X = rng.normal(size=(3, 5))
    R = geo.resolvent(op, 0.3, X)
    for j in range(5):
        assert np.array_equal(R[:, j], geo.resolvent(op, 0.3, X[:, j]))


def test_vector_shape_is_preserved(rng):
    x = rng.normal(size=4)
    assert geo.project(geo.whole_space(), x).shape == (4,)
    assert geo.prox(geo.l1_regularizer(0.1), 1.0, x).shape == (4,)
    X = rng.normal(size=(4, 6))
    assert geo.prox(geo.l1_regularizer(0.1), 1.0, X).shape == (4, 6)
