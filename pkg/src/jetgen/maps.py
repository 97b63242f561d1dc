"""Map-level constructions: linear perturbations and target-diffeomorphism
re-coordinatizations.

The central objects are a matrix-backed ``LinearMap`` and MapProgram-level
builders:

* ``perturb(F, alpha)``          -- F + (linear map given by alpha)
* ``graph_embedding(F)``         -- x -> (F(x), x), always an immersion
* ``h_lambda(L)``                -- X -> X L, a linear target diffeomorphism
* ``phi / phi_inv``              -- the invertible re-parametrization
                                    (L, alpha) -> (L, alpha') with
                                    alpha'[j, i] = sum_k L[k, i] alpha[k, j]
* ``pi_lambda_alpha(L, alpha)``  -- the (m+ell)->ell linear map satisfying
                                    pi o (graph of F) = h_lambda o perturb(F)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsl import Add, Box, MapProgram, Mul, Num, Var, program_from_exprs
from .errors import NotInGLError, ShapeError

__all__ = [
    "LinearMap",
    "perturb",
    "graph_embedding",
    "h_lambda",
    "phi",
    "phi_inv",
    "pi_lambda_alpha",
    "linear_program",
]

_DET_TOL = 1e-12


@dataclass(frozen=True)
class LinearMap:
    """Dense real matrix viewed as a linear map x -> A x."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ShapeError("LinearMap expects a 2-d matrix")
        if not np.all(np.isfinite(m)):
            raise ShapeError("LinearMap entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    def __call__(self, x):
        return self.matrix @ np.asarray(x, dtype=float)

    def is_invertible(self, tol=_DET_TOL):
        """Determinant test after row equilibration."""
        if self.rows != self.cols:
            return False
        scale = np.max(np.abs(self.matrix), axis=1)
        if np.any(scale == 0.0):
            return False
        return abs(np.linalg.det(self.matrix / scale[:, None])) > tol

    def to_json(self):
        return [list(row) for row in self.matrix]

    @classmethod
    def from_json(cls, data):
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def zeros(cls, rows, cols):
        return cls(np.zeros((rows, cols)))


def _require_gl(L: LinearMap):
    if L.rows != L.cols or not L.is_invertible():
        raise NotInGLError(f"{L.rows}x{L.cols} matrix is not invertible at tolerance {_DET_TOL}")


def _linear_expr(coeffs, var_names, base=None):
    """AST for base + sum_j coeffs[j] * x_j, skipping zero terms."""
    node = base
    for j, c in enumerate(coeffs):
        if c == 0.0:
            continue
        term = Var(j, var_names[j]) if c == 1.0 else Mul(Num(float(c)), Var(j, var_names[j]))
        node = term if node is None else Add(node, term)
    return Num(0.0) if node is None else node


def perturb(F: MapProgram, alpha: LinearMap) -> MapProgram:
    """F plus the linear map alpha, on F's domain.

    Component i of the result is F_i + sum_j alpha[i, j] * x_j.  A zero
    alpha returns a program with identical expressions.
    """
    if alpha.cols != F.n_in or alpha.rows != F.n_out:
        raise ShapeError(
            f"alpha must be {F.n_out}x{F.n_in}, got {alpha.rows}x{alpha.cols}")
    exprs = []
    for i, e in enumerate(F.exprs):
        lin = _linear_expr(alpha.matrix[i], F.var_names)
        exprs.append(e if lin == Num(0.0) else Add(e, lin))
    return MapProgram(F.var_names, F.domain, tuple(exprs), F.constraints)


def graph_embedding(F: MapProgram) -> MapProgram:
    """x -> (F_1(x), ..., F_ell(x), x_1, ..., x_m) on F's domain.

    The derivative matrix contains an identity block in the last m rows, so
    the result is an immersion (and injective), i.e. an embedding of F's
    domain into R^(m+ell).
    """
    exprs = tuple(F.exprs) + tuple(Var(j, name) for j, name in enumerate(F.var_names))
    return MapProgram(F.var_names, F.domain, exprs, F.constraints)


def h_lambda(L: LinearMap) -> MapProgram:
    """The linear isomorphism X -> X L of R^ell (row-vector convention).

    Component i is sum_k L[k, i] X_k.  Requires L in GL(ell).
    """
    _require_gl(L)
    ell = L.rows
    names = tuple(f"X{i+1}" for i in range(ell))
    exprs = tuple(_linear_expr(L.matrix[:, i], names) for i in range(ell))
    return MapProgram(names, Box.unbounded(ell), exprs)


def phi(L: LinearMap, alpha: LinearMap):
    """Re-parametrize (L, alpha) -> (L, alpha') with alpha' = alpha^T L.

    alpha is ell x m; the result alpha' is m x ell with
    alpha'[j, i] = sum_k L[k, i] * alpha[k, j].
    """
    _require_gl(L)
    if alpha.rows != L.rows:
        raise ShapeError(
            f"alpha must have {L.rows} rows to pair with L, got {alpha.rows}")
    return L, LinearMap(alpha.matrix.T @ L.matrix)


def phi_inv(L: LinearMap, alpha_prime: LinearMap):
    """Inverse of ``phi``: recover alpha from alpha' = alpha^T L.

    Solves, for each source index j, the ell x ell system
    L^T (alpha[:, j]) = alpha'[j, :] by LU with partial pivoting.
    """
    _require_gl(L)
    if alpha_prime.cols != L.rows:
        raise ShapeError(
            f"alpha' must have {L.rows} columns to pair with L, got {alpha_prime.cols}")
    try:
        alpha = np.linalg.solve(L.matrix.T, alpha_prime.matrix.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - gated above
        raise NotInGLError(str(exc)) from exc
    return L, LinearMap(alpha)


def pi_lambda_alpha(L: LinearMap, alpha: LinearMap) -> LinearMap:
    """The linear map R^(m+ell) -> R^ell built from (L, alpha).

    Acting on a stacked vector (Y, x) with Y in R^ell, x in R^m it returns
    L^T Y + L^T alpha x, so composing with ``graph_embedding(F)`` reproduces
    ``h_lambda(L) o perturb(F, alpha)`` exactly.
    """
    _require_gl(L)
    if alpha.rows != L.rows:
        raise ShapeError(
            f"alpha must have {L.rows} rows to pair with L, got {alpha.rows}")
    return LinearMap(np.hstack([L.matrix.T, L.matrix.T @ alpha.matrix]))


def linear_program(A: LinearMap) -> MapProgram:
    """A LinearMap as a MapProgram x -> A x on all of R^cols."""
    names = tuple(f"X{i+1}" for i in range(A.cols))
    exprs = tuple(_linear_expr(A.matrix[i], names) for i in range(A.rows))
    return MapProgram(names, Box.unbounded(A.cols), exprs)
