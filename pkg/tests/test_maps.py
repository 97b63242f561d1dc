"""Perturbations, graph embeddings, and the re-coordinatization identities."""

import numpy as np
import pytest

from jetgen.dsl import compose, parse_map
from jetgen.errors import NotInGLError, ShapeError
from jetgen.maps import (
    LinearMap,
    graph_embedding,
    h_lambda,
    linear_program,
    perturb,
    phi,
    phi_inv,
    pi_lambda_alpha,
)


def random_gl(rng, ell, min_det=0.1):
    while True:
        L = LinearMap(rng.normal(size=(ell, ell)))
        scale = np.max(np.abs(L.matrix), axis=1)
        if np.all(scale > 0) and abs(np.linalg.det(L.matrix / scale[:, None])) >= min_det:
            return L


# ----------------------------------------------------------------------
# perturb


def test_perturb_zero_map_with_identity_alpha_is_identity():
    F = parse_map("map (x,y) -> (0, 0)")
    Fa = perturb(F, LinearMap(np.eye(2)))
    for pt in ([0.3, -2.0], [1.0, 1.0]):
        assert np.allclose(Fa(np.array(pt)), pt)


def test_perturb_quadratic_with_swap_alpha():
    F = parse_map("map (x,y) -> (x^2, y^2)")
    Fa = perturb(F, LinearMap([[0.0, 1.0], [1.0, 0.0]]))
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, y = rng.normal(size=2)
        assert np.allclose(Fa(np.array([x, y])), [x**2 + y, y**2 + x])


def test_perturb_by_zero_is_structurally_equal():
    F = parse_map("map (x) -> (sin(x))")
    Fa = perturb(F, LinearMap.zeros(1, 1))
    assert Fa.exprs == F.exprs
    assert Fa.domain == F.domain


def test_perturb_shape_mismatch():
    F = parse_map("map (x,y) -> (x+y)")
    with pytest.raises(ShapeError):
        perturb(F, LinearMap(np.zeros((2, 2))))


# ----------------------------------------------------------------------
# graph embedding


def test_graph_embedding_zero_map():
    F = parse_map("map (x,y) -> (0)")
    f = graph_embedding(F)
    assert np.allclose(f(np.array([2.0, -3.0])), [0.0, 2.0, -3.0])


def test_graph_embedding_parabola_jacobian_never_vanishes():
    F = parse_map("map (x) -> (x^2)")
    f = graph_embedding(F)
    for x in np.linspace(-2, 2, 21):
        J = f.jacobian(np.array([x]))
        assert np.allclose(J[:, 0], [2 * x, 1.0])
        assert np.linalg.norm(J) > 0.9


def test_graph_embedding_full_rank_at_random_points():
    F = parse_map("map (x,y) -> (x^2 + y^2, x*y)")
    f = graph_embedding(F)
    rng = np.random.default_rng(5)
    for _ in range(50):
        q = rng.normal(size=2)
        J = f.jacobian(q)
        assert J.shape == (4, 2)
        assert np.linalg.matrix_rank(J) == 2


# ----------------------------------------------------------------------
# phi and its inverse


def test_phi_identity_lambda_transposes():
    rng = np.random.default_rng(1)
    alpha = LinearMap(rng.normal(size=(3, 4)))
    _, ap = phi(LinearMap(np.eye(3)), alpha)
    assert np.allclose(ap.matrix, alpha.matrix.T)


def test_phi_scalar_case():
    _, ap = phi(LinearMap([[2.5]]), LinearMap([[1.0, -3.0]]))
    assert np.allclose(ap.matrix, [[2.5], [-7.5]])


def test_phi_entries_match_displayed_formula():
    rng = np.random.default_rng(2)
    ell, m = 3, 2
    L = random_gl(rng, ell)
    alpha = LinearMap(rng.normal(size=(ell, m)))
    _, ap = phi(L, alpha)
    for j in range(m):
        for i in range(ell):
            want = sum(L.matrix[k, i] * alpha.matrix[k, j] for k in range(ell))
            assert ap.matrix[j, i] == pytest.approx(want, rel=1e-14)


def test_phi_round_trips():
    rng = np.random.default_rng(3)
    for _ in range(200):
        ell = int(rng.integers(1, 4))
        m = int(rng.integers(1, 4))
        L = random_gl(rng, ell)
        alpha = LinearMap(rng.normal(size=(ell, m)))
        _, ap = phi(L, alpha)
        _, back = phi_inv(L, ap)
        assert np.max(np.abs(back.matrix - alpha.matrix)) <= 1e-10
        _, fwd = phi(L, back)
        assert np.max(np.abs(fwd.matrix - ap.matrix)) <= 1e-10


def test_phi_inv_identity_and_scalar():
    ap = LinearMap([[1.0, 2.0], [3.0, 4.0]])
    _, alpha = phi_inv(LinearMap(np.eye(2)), ap)
    assert np.allclose(alpha.matrix, ap.matrix.T)
    _, a = phi_inv(LinearMap([[4.0]]), LinearMap([[8.0], [2.0]]))
    assert np.allclose(a.matrix, [[2.0, 0.5]])


def test_phi_rejects_singular_lambda():
    with pytest.raises(NotInGLError):
        phi(LinearMap([[1.0, 2.0], [2.0, 4.0]]), LinearMap(np.zeros((2, 2))))
    with pytest.raises(NotInGLError):
        phi_inv(LinearMap(np.zeros((2, 2))), LinearMap(np.zeros((2, 2))))


# ----------------------------------------------------------------------
# h_lambda


def test_h_lambda_identity_swap_diagonal():
    assert np.allclose(h_lambda(LinearMap(np.eye(2)))(np.array([1.0, 2.0])), [1.0, 2.0])
    swap = h_lambda(LinearMap([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(swap(np.array([1.0, 2.0])), [2.0, 1.0])
    diag = h_lambda(LinearMap([[2.0, 0.0], [0.0, 3.0]]))
    assert np.allclose(diag(np.array([1.0, 2.0])), [2.0, 6.0])


def test_h_lambda_matches_row_vector_product():
    rng = np.random.default_rng(4)
    L = random_gl(rng, 3)
    H = h_lambda(L)
    for _ in range(10):
        X = rng.normal(size=3)
        assert np.allclose(H(X), X @ L.matrix, rtol=1e-14)


# ----------------------------------------------------------------------
# pi_lambda_alpha and the composition identity


def test_pi_projection_case():
    Pi = pi_lambda_alpha(LinearMap(np.eye(2)), LinearMap.zeros(2, 3))
    v = np.array([1.0, 2.0, 9.0, 9.0, 9.0])
    assert np.allclose(Pi(v), [1.0, 2.0])


def test_pi_scalar_case():
    lam, a = 2.0, 5.0
    Pi = pi_lambda_alpha(LinearMap([[lam]]), LinearMap([[a]]))
    X = np.array([3.0, 7.0])
    assert Pi(X)[0] == pytest.approx(lam * 3.0 + lam * a * 7.0)


def test_composition_identity_random():
    rng = np.random.default_rng(6)
    F = parse_map("map (x,y) -> (x^2 - y, x*y + 1)")
    f = parse_map("map (s) -> (s, s^3 - s)")  # embedding of R into R^2
    for _ in range(20):
        L = random_gl(rng, 2)
        alpha = LinearMap(rng.normal(size=(2, 2)))
        lhs = compose(linear_program(pi_lambda_alpha(L, alpha)),
                      compose(graph_embedding(F), f))
        rhs = compose(h_lambda(L), compose(perturb(F, alpha), f))
        for _ in range(100):
            s = rng.uniform(-2, 2, size=1)
            a, b = lhs(s), rhs(s)
            assert np.max(np.abs(a - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))


def test_linear_program_matches_matrix():
    rng = np.random.default_rng(7)
    A = LinearMap(rng.normal(size=(3, 5)))
    P = linear_program(A)
    for _ in range(5):
        x = rng.normal(size=5)
        assert np.allclose(P(x), A(x), rtol=1e-14)
