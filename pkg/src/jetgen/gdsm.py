"""Generalized distance-squared mappings and their classification experiments.

``G_{(p,A)}(x) = (sum_j a_ij (x_j - p_ij)^2)_i`` for an ell x m coefficient
matrix A with no zero entries and a central point p (an ell-tuple of
m-vectors).  Expanding the squares splits G into a pure quadratic part F, a
linear part given by the coefficient-wise map alpha = -2 A o p, and a
constant shift, so G = perturb(F, alpha) + shift exactly.

``cusp_count_experiment`` draws Gaussian central points and classifies the
singular set of each sampled mapping: 2x2 coefficient matrices probe the
plane case (one cusp for rank 2, folds only for rank 1), 3x2 matrices probe
the surface case (a single cross-cap with transverse double points).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsl import Add, Box, MapProgram, Mul, Num, Pow, Sub, Var
from .errors import InvalidSpecError, ShapeError
from .maps import LinearMap
from .singular import (
    DEFAULT_TOL,
    Classification,
    Tolerances,
    find_double_points,
    find_singular_points,
)

__all__ = [
    "GdsmSpec",
    "build_gdsm",
    "reduce_gdsm",
    "psi",
    "psi_inverse",
    "search_box",
    "cusp_count_experiment",
    "GdsmSampleResult",
]

_MIN_ENTRY = 1e-9


@dataclass(frozen=True)
class GdsmSpec:
    """Coefficients A (ell x m, no zero entries) and central point p."""

    A: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        p = np.array(self.p, dtype=float)
        if A.ndim != 2:
            raise InvalidSpecError("A must be a 2-d matrix")
        if p.shape != A.shape:
            raise InvalidSpecError(
                f"central point must be shaped like A {A.shape}, got {p.shape}")
        if np.any(np.abs(A) < _MIN_ENTRY):
            raise InvalidSpecError(f"all entries of A must satisfy |a_ij| >= {_MIN_ENTRY}")
        A.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "p", p)

    @property
    def ell(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[1]


_VAR_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6")


def build_gdsm(spec: GdsmSpec) -> MapProgram:
    """The mapping with components sum_j a_ij (x_j - p_ij)^2 on all of R^m."""
    names = _VAR_NAMES[:spec.m]
    exprs = []
    for i in range(spec.ell):
        comp = None
        for j in range(spec.m):
            var = Var(j, names[j])
            sq = Pow(var if spec.p[i, j] == 0.0 else Sub(var, Num(float(spec.p[i, j]))), 2)
            term = Mul(Num(float(spec.A[i, j])), sq)
            comp = term if comp is None else Add(comp, term)
        exprs.append(comp)
    return MapProgram(tuple(names), Box.unbounded(spec.m), tuple(exprs))


def reduce_gdsm(spec: GdsmSpec):
    """Split G into (quadratic part F, linear map alpha, constant shift).

    F_i(x) = sum_j a_ij x_j^2, alpha_ij = -2 a_ij p_ij, and
    shift_i = sum_j a_ij p_ij^2; then G(x) = F(x) + alpha x + shift exactly
    as polynomials (deleting the constant from the target recovers the
    perturbed quadratic form).
    """
    names = _VAR_NAMES[:spec.m]
    exprs = []
    for i in range(spec.ell):
        comp = None
        for j in range(spec.m):
            term = Mul(Num(float(spec.A[i, j])), Pow(Var(j, names[j]), 2))
            comp = term if comp is None else Add(comp, term)
        exprs.append(comp)
    F = MapProgram(tuple(names), Box.unbounded(spec.m), tuple(exprs))
    alpha = psi(spec.A, spec.p)
    shift = np.sum(spec.A * spec.p**2, axis=1)
    return F, alpha, shift


def psi(A, p) -> LinearMap:
    """The coefficient-wise diffeomorphism p -> alpha = -2 (a_ij p_ij)."""
    A = np.asarray(A, dtype=float)
    p = np.asarray(p, dtype=float)
    if A.shape != p.shape:
        raise ShapeError("A and p must have equal shapes")
    if np.any(np.abs(A) < _MIN_ENTRY):
        raise InvalidSpecError("all entries of A must be non-zero")
    return LinearMap(-2.0 * A * p)


def psi_inverse(alpha: LinearMap, A) -> np.ndarray:
    """Recover the central point: p_ij = -alpha_ij / (2 a_ij)."""
    A = np.asarray(A, dtype=float)
    if A.shape != alpha.matrix.shape:
        raise ShapeError("A and alpha must have equal shapes")
    if np.any(np.abs(A) < _MIN_ENTRY):
        raise InvalidSpecError("all entries of A must be non-zero")
    return -alpha.matrix / (2.0 * A)


def search_box(p) -> list:
    """Box heuristic for the singular set: center at the coordinate-wise
    mean of the central rows, half-width 4 (1 + max|p|)."""
    p = np.asarray(p, dtype=float)
    center = p.mean(axis=0)
    half = 4.0 * (1.0 + float(np.max(np.abs(p))))
    return [(c - half, c + half) for c in center]


@dataclass(frozen=True)
class GdsmSampleResult:
    index: int
    p: np.ndarray
    box: list
    points: list
    double_points: list
    cusp_count: int
    fold_count: int
    cross_cap_count: int
    other_count: int
    fold_only_elsewhere: bool
    double_points_transverse: bool
    min_margin: float
    passed: bool
    expected: str = field(default="")


def _matrix_rank_thresholded(A, tol: Tolerances):
    s = np.linalg.svd(np.asarray(A, float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_rel_tol * s[0]))


def cusp_count_experiment(A, n_samples, seed, box=None, grid=32, sigma=1.0,
                          tol: Tolerances = DEFAULT_TOL):
    """Classify the singular sets of mappings with Gaussian central points.

    For each sample a central point with i.i.d. normal(0, sigma^2) entries
    is drawn from a stream keyed by (seed, sample index); the mapping is
    searched on ``box`` (default: the documented heuristic box around the
    sample's central rows).

    Expectations by coefficient matrix: 2x2 of rank 2 -> exactly one cusp,
    folds elsewhere; 2x2 of rank 1 -> folds only; 3x2 of rank 2 -> exactly
    one singular point, a cross-cap, with all double crossings transverse.
    Results are bit-identical across runs with the same inputs.
    """
    A = np.asarray(A, dtype=float)
    if A.shape not in ((2, 2), (3, 2)):
        raise InvalidSpecError("experiment supports 2x2 or 3x2 coefficient matrices")
    if n_samples < 1:
        raise InvalidSpecError("n_samples must be >= 1")
    if sigma <= 0:
        raise InvalidSpecError("sigma must be positive")
    rank = _matrix_rank_thresholded(A, tol)
    if A.shape == (3, 2):
        expected = "one_cross_cap"
        if rank < 2:
            raise InvalidSpecError("3x2 experiment expects a rank-2 coefficient matrix")
    else:
        expected = "one_cusp" if rank == 2 else "folds_only"

    results = []
    for idx in range(int(n_samples)):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), idx]))
        p = sigma * rng.standard_normal(A.shape)
        spec = GdsmSpec(A, p)
        G = build_gdsm(spec)
        rect = search_box(p) if box is None else [tuple(b) for b in box]
        points = find_singular_points(G, rect, grid, tol=tol)
        cusp = sum(1 for q in points if q.classification is Classification.CUSP)
        fold = sum(1 for q in points if q.classification is Classification.FOLD)
        cross = sum(1 for q in points if q.classification is Classification.CROSS_CAP)
        other = len(points) - cusp - fold - cross
        margins = [q.margin for q in points]

        dps = []
        dps_ok = True
        if A.shape == (3, 2):
            dps = find_double_points(G, rect, grid, tol=tol)
            dps_ok = all(d.crossing_transverse for d in dps)
            margins.extend(d.crossing_margin for d in dps)

        if expected == "one_cusp":
            passed = cusp == 1 and other == 0 and fold == len(points) - 1
        elif expected == "folds_only":
            passed = cusp == 0 and other == 0 and fold == len(points)
        else:
            passed = (len(points) == 1 and cross == 1 and dps_ok and len(dps) > 0)

        results.append(GdsmSampleResult(
            index=idx, p=p, box=rect, points=points, double_points=dps,
            cusp_count=cusp, fold_count=fold, cross_cap_count=cross,
            other_count=other,
            fold_only_elsewhere=(other == 0 and cusp <= 1),
            double_points_transverse=dps_ok,
            min_margin=float(min(margins)) if margins else float("inf"),
            passed=bool(passed), expected=expected))
    return results
