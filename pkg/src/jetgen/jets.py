"""Truncated multivariate Taylor (jet) arithmetic.

A ``JetPoly`` stores the order-``r`` Taylor polynomial of a smooth function
at a base point ``q``:

    g(q + u)  ~  sum_{|beta| <= r}  c_beta * u^beta

Coefficients are held densely over all multi-indices of degree <= r in a
fixed graded-lexicographic order (total degree first, then lexicographic on
the exponent tuple), so products reduce to a precomputed index convolution.
A trailing batch axis is supported throughout: ``coeffs`` of shape ``(M,)``
holds one jet, ``(M, B)`` holds B jets at B base points, and all operations
broadcast over the batch.

``JetTuple`` bundles the component jets of a map into R^ell.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product as _iproduct

import numpy as np

from .errors import (
    EvaluationError,
    InsufficientOrderError,
    ShapeError,
    SingularJetError,
)

__all__ = [
    "JetPoly",
    "JetTuple",
    "monomials",
    "jet_mul",
    "jet_compose",
    "jet_inverse",
    "derivative_matrix",
    "identity_jets",
    "constant_jet",
    "jet_partial",
    "truncate",
    "hessian",
    "jet_sin",
    "jet_cos",
    "jet_exp",
    "jet_log",
    "jet_sqrt",
]


# ---------------------------------------------------------------------------
# monomial bookkeeping


@lru_cache(maxsize=None)
def monomials(n_vars: int, order: int):
    """All exponent tuples of degree <= order, graded-lex, with positions.

    Returns ``(exps, pos)`` where ``exps`` is the ordered tuple of exponent
    tuples and ``pos`` maps exponent tuple -> index into ``exps``.
    """
    if n_vars < 1 or order < 0:
        raise ShapeError(f"bad jet shape: n_vars={n_vars}, order={order}")
    exps = [e for e in _iproduct(range(order + 1), repeat=n_vars) if sum(e) <= order]
    exps.sort(key=lambda e: (sum(e), e))
    exps = tuple(exps)
    pos = {e: i for i, e in enumerate(exps)}
    return exps, pos


@lru_cache(maxsize=None)
def _mul_table(n_vars: int, order: int):
    """Index triples (i, j, k) with exps[i] + exps[j] = exps[k], deg <= order."""
    exps, pos = monomials(n_vars, order)
    ii, jj, kk = [], [], []
    for i, a in enumerate(exps):
        da = sum(a)
        for j, b in enumerate(exps):
            if da + sum(b) > order:
                continue
            ii.append(i)
            jj.append(j)
            kk.append(pos[tuple(x + y for x, y in zip(a, b))])
    return np.asarray(ii), np.asarray(jj), np.asarray(kk)


@lru_cache(maxsize=None)
def _diff_table(n_vars: int, order: int, axis: int):
    """Source index, destination index, and factor for d/du_axis."""
    if order < 1:
        raise InsufficientOrderError("cannot differentiate an order-0 jet")
    exps, _ = monomials(n_vars, order)
    _, pos_lo = monomials(n_vars, order - 1)
    src, dst, fac = [], [], []
    for i, e in enumerate(exps):
        if e[axis] == 0:
            continue
        lowered = tuple(x - (1 if a == axis else 0) for a, x in enumerate(e))
        src.append(i)
        dst.append(pos_lo[lowered])
        fac.append(float(e[axis]))
    return np.asarray(src), np.asarray(dst), np.asarray(fac)


def _same_base(a, b, rtol=1e-9):
    if a is b:  # jets built from one evaluation share the base array
        return True
    if a.shape != b.shape:
        return False
    scale = 1.0 + max(np.max(np.abs(a)), np.max(np.abs(b)))
    return bool(np.all(np.abs(a - b) <= rtol * scale))


# ---------------------------------------------------------------------------
# JetPoly


class JetPoly:
    """Order-r Taylor polynomial of a scalar function at a base point."""

    __slots__ = ("n_vars", "order", "base_point", "coeffs")

    def __init__(self, n_vars, order, base_point, coeffs, copy=True):
        exps, _ = monomials(n_vars, order)
        base_point = np.asarray(base_point, dtype=float)
        coeffs = np.array(coeffs, dtype=float, copy=copy)
        if coeffs.shape[0] != len(exps):
            raise ShapeError(
                f"expected {len(exps)} coefficients for n={n_vars}, r={order}; "
                f"got {coeffs.shape[0]}"
            )
        if base_point.shape != (n_vars,) + coeffs.shape[1:]:
            raise ShapeError(
                f"base point shape {base_point.shape} does not match "
                f"n_vars={n_vars}, batch={coeffs.shape[1:]}"
            )
        self.n_vars = n_vars
        self.order = order
        self.base_point = base_point
        self.coeffs = coeffs

    # -- bookkeeping ------------------------------------------------------

    @property
    def batch_shape(self):
        return self.coeffs.shape[1:]

    @property
    def value(self):
        """Constant term: the function value at the base point."""
        return self.coeffs[0]

    def coeff(self, exponents):
        exps, pos = monomials(self.n_vars, self.order)
        key = tuple(int(e) for e in exponents)
        if key not in pos:
            raise ShapeError(f"monomial {key} not stored at order {self.order}")
        return self.coeffs[pos[key]]

    def gradient(self):
        """Degree-1 coefficient block, shape ``(n_vars,) + batch``."""
        if self.order < 1:
            raise InsufficientOrderError("order >= 1 required for a gradient")
        exps, pos = monomials(self.n_vars, self.order)
        idx = [pos[tuple(1 if j == i else 0 for j in range(self.n_vars))]
               for i in range(self.n_vars)]
        return self.coeffs[idx]

    def _like(self, coeffs):
        return JetPoly(self.n_vars, self.order, self.base_point, coeffs, copy=False)

    def _check_compatible(self, other):
        if (self.n_vars != other.n_vars or self.order != other.order
                or not _same_base(self.base_point, other.base_point)):
            raise ShapeError(
                "jets must share n_vars, order, and base point "
                f"(got n={self.n_vars}/{other.n_vars}, r={self.order}/{other.order})"
            )

    def __repr__(self):
        return (f"JetPoly(n_vars={self.n_vars}, order={self.order}, "
                f"batch={self.batch_shape}, value={self.value!r})")

    # -- ring operations ---------------------------------------------------

    def _scalar(self, other):
        arr = np.asarray(other, dtype=float)
        if arr.shape not in ((), self.batch_shape):
            raise ShapeError(f"scalar operand of shape {arr.shape} does not "
                             f"broadcast over batch {self.batch_shape}")
        return arr

    def __add__(self, other):
        if isinstance(other, JetPoly):
            self._check_compatible(other)
            return self._like(self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0] = c[0] + self._scalar(other)
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, JetPoly) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, JetPoly):
            self._check_compatible(other)
            ii, jj, kk = _mul_table(self.n_vars, self.order)
            out = np.zeros_like(self.coeffs)
            np.add.at(out, kk, self.coeffs[ii] * other.coeffs[jj])
            return self._like(out)
        return self._like(self.coeffs * self._scalar(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, JetPoly):
            return self * _reciprocal(other)
        arr = self._scalar(other)
        if np.any(arr == 0.0):
            raise EvaluationError("division by zero")
        return self._like(self.coeffs / arr)

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, np.integer)):
            raise ShapeError("jet exponent must be an integer")
        e = int(exponent)
        if e < 0:
            return _reciprocal(self) ** (-e)
        result = constant_jet(1.0, self.n_vars, self.order, self.base_point,
                              batch_shape=self.batch_shape)
        base = self
        while e:
            if e & 1:
                result = result * base
            base = base * base if e > 1 else base
            e >>= 1
        return result


def constant_jet(value, n_vars, order, base_point, batch_shape=None):
    """Jet of a constant function."""
    base_point = np.asarray(base_point, dtype=float)
    if batch_shape is None:
        batch_shape = base_point.shape[1:]
    exps, _ = monomials(n_vars, order)
    coeffs = np.zeros((len(exps),) + tuple(batch_shape))
    coeffs[0] = value
    return JetPoly(n_vars, order, base_point, coeffs, copy=False)


def jet_mul(a: JetPoly, b: JetPoly) -> JetPoly:
    """Degree-<=r truncation of the product of two jets."""
    if not isinstance(a, JetPoly) or not isinstance(b, JetPoly):
        raise ShapeError("jet_mul expects two JetPoly operands")
    return a * b


def truncate(jet: JetPoly, order: int) -> JetPoly:
    """Drop coefficients above ``order`` (graded storage makes this a slice)."""
    if order > jet.order:
        raise InsufficientOrderError(
            f"cannot truncate an order-{jet.order} jet to order {order}")
    if order == jet.order:
        return jet
    exps, _ = monomials(jet.n_vars, order)
    return JetPoly(jet.n_vars, order, jet.base_point, jet.coeffs[:len(exps)])


def jet_partial(jet: JetPoly, axis: int) -> JetPoly:
    """Partial derivative d/du_axis, an order r-1 jet at the same point."""
    src, dst, fac = _diff_table(jet.n_vars, jet.order, axis)
    exps_lo, _ = monomials(jet.n_vars, jet.order - 1)
    out = np.zeros((len(exps_lo),) + jet.batch_shape)
    out[dst] = fac.reshape((-1,) + (1,) * len(jet.batch_shape)) * jet.coeffs[src]
    return JetPoly(jet.n_vars, jet.order - 1, jet.base_point, out, copy=False)


def hessian(jet: JetPoly):
    """Second-derivative matrix at the base point, shape (n, n) + batch."""
    if jet.order < 2:
        raise InsufficientOrderError("order >= 2 required for a Hessian")
    n = jet.n_vars
    H = np.zeros((n, n) + jet.batch_shape)
    for i in range(n):
        for j in range(i, n):
            e = tuple((2 if k == i else 0) if i == j else
                      (1 if k in (i, j) else 0) for k in range(n))
            c = jet.coeff(e)
            H[i, j] = H[j, i] = (2.0 * c) if i == j else c
    return H


# ---------------------------------------------------------------------------
# analytic functions of jets: f(a) = sum_k f^(k)(a0)/k! * (a - a0)^k


def _apply_series(jet: JetPoly, taylor_coeffs):
    """Horner evaluation of a univariate series in the nilpotent part."""
    nil = jet - jet.value
    acc = constant_jet(taylor_coeffs[-1], jet.n_vars, jet.order, jet.base_point,
                       batch_shape=jet.batch_shape)
    for k in range(len(taylor_coeffs) - 2, -1, -1):
        acc = acc * nil + taylor_coeffs[k]
    return acc


def jet_sin(jet: JetPoly) -> JetPoly:
    c0 = jet.value
    cycle = (np.sin(c0), np.cos(c0), -np.sin(c0), -np.cos(c0))
    return _apply_series(jet, [cycle[k % 4] / math.factorial(k)
                               for k in range(jet.order + 1)])


def jet_cos(jet: JetPoly) -> JetPoly:
    c0 = jet.value
    cycle = (np.cos(c0), -np.sin(c0), -np.cos(c0), np.sin(c0))
    return _apply_series(jet, [cycle[k % 4] / math.factorial(k)
                               for k in range(jet.order + 1)])


def jet_exp(jet: JetPoly) -> JetPoly:
    e0 = np.exp(jet.value)
    return _apply_series(jet, [e0 / math.factorial(k) for k in range(jet.order + 1)])


def jet_log(jet: JetPoly) -> JetPoly:
    c0 = jet.value
    if np.any(c0 <= 0.0):
        raise EvaluationError("log of a non-positive value")
    coeffs = [np.log(c0)]
    for k in range(1, jet.order + 1):
        coeffs.append(((-1.0) ** (k - 1)) / (k * c0 ** k))
    return _apply_series(jet, coeffs)


def jet_sqrt(jet: JetPoly) -> JetPoly:
    c0 = jet.value
    if np.any(c0 <= 0.0):
        raise EvaluationError("sqrt at a non-positive value is not smooth")
    s0 = np.sqrt(c0)
    coeffs = [s0]
    binom = 0.5
    for k in range(1, jet.order + 1):
        coeffs.append(binom * s0 / (c0 ** k))
        binom *= (0.5 - k) / (k + 1.0)
    return _apply_series(jet, coeffs)


def _reciprocal(jet: JetPoly) -> JetPoly:
    c0 = jet.value
    if np.any(c0 == 0.0):
        raise EvaluationError("division by zero")
    return _apply_series(jet, [((-1.0) ** k) / (c0 ** (k + 1))
                               for k in range(jet.order + 1)])


# ---------------------------------------------------------------------------
# JetTuple


class JetTuple:
    """Ordered components of a map's jet; all share n_vars/order/base point."""

    __slots__ = ("components",)

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ShapeError("JetTuple needs at least one component")
        head = components[0]
        for c in components[1:]:
            head._check_compatible(c)
        self.components = components

    @property
    def n_vars(self):
        return self.components[0].n_vars

    @property
    def order(self):
        return self.components[0].order

    @property
    def base_point(self):
        return self.components[0].base_point

    @property
    def n_out(self):
        return len(self.components)

    @property
    def batch_shape(self):
        return self.components[0].batch_shape

    def values(self):
        """Constant terms stacked: shape (n_out,) + batch."""
        return np.stack([c.value for c in self.components])

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __repr__(self):
        return (f"JetTuple(n_out={self.n_out}, n_vars={self.n_vars}, "
                f"order={self.order}, batch={self.batch_shape})")


def identity_jets(point, order) -> JetTuple:
    """Jet of the identity map at ``point``.

    ``point`` has shape (n,) for a single jet or (n, B) for a batch.
    """
    base = np.asarray(point, dtype=float)
    n = base.shape[0]
    exps, pos = monomials(n, order)
    comps = []
    for i in range(n):
        coeffs = np.zeros((len(exps),) + base.shape[1:])
        coeffs[0] = base[i]
        if order >= 1:
            coeffs[pos[tuple(1 if j == i else 0 for j in range(n))]] = 1.0
        comps.append(JetPoly(n, order, base, coeffs, copy=False))
    return JetTuple(comps)


def derivative_matrix(jt: JetTuple):
    """First-derivative matrix, shape (n_out, n_vars) + batch."""
    if jt.order < 1:
        raise InsufficientOrderError("order >= 1 required for a derivative matrix")
    return np.stack([c.gradient() for c in jt.components])


def jet_compose(outer: JetTuple, inner: JetTuple) -> JetTuple:
    """r-jet of outer o inner at inner's base point.

    ``outer`` is a jet in k variables; ``inner`` must have k components whose
    constant terms equal outer's base point.
    """
    k = outer.n_vars
    if inner.n_out != k:
        raise ShapeError(
            f"arity mismatch: outer has {k} variables, inner has {inner.n_out} components")
    if outer.order != inner.order:
        raise ShapeError("outer and inner jets must have equal truncation order")
    if not _same_base(outer.base_point, inner.values()):
        raise ShapeError("outer base point must equal inner constant terms")

    order = outer.order
    nil = [c - c.value for c in inner.components]
    # powers[i][p] = nil_i ** p as a jet (p <= order)
    powers = []
    for c in nil:
        ps = [constant_jet(1.0, c.n_vars, order, c.base_point,
                           batch_shape=c.batch_shape), c]
        for _ in range(2, order + 1):
            ps.append(ps[-1] * c)
        powers.append(ps)

    exps, _ = monomials(k, order)
    out_batch = inner.batch_shape
    comps = []
    for oc in outer.components:
        acc = constant_jet(0.0, inner.n_vars, order, inner.base_point,
                           batch_shape=out_batch)
        for idx, e in enumerate(exps):
            coef = oc.coeffs[idx]
            if oc.batch_shape == () and coef == 0.0:
                continue
            term = None
            for i, p in enumerate(e):
                if p == 0:
                    continue
                term = powers[i][p] if term is None else term * powers[i][p]
            if term is None:
                acc = acc + coef
            else:
                acc = acc + term * coef
        comps.append(acc)
    return JetTuple(comps)


def jet_inverse(jt: JetTuple) -> JetTuple:
    """Jet of the inverse map germ of an invertible square jet.

    Requires n_out == n_vars and an invertible linear part; the result is
    based at jt's constant terms and satisfies jet_compose(jt, inverse) = id
    up to truncation.
    """
    n = jt.n_vars
    if jt.n_out != n:
        raise ShapeError("jet_inverse requires a square jet (n_out == n_vars)")
    if jt.batch_shape != ():
        raise ShapeError("jet_inverse does not support batched jets")
    L = derivative_matrix(jt)
    if abs(np.linalg.det(L)) < 1e-300:
        raise SingularJetError("linear part is singular; no inverse jet")
    Linv = np.linalg.inv(L)

    y0 = jt.values()
    x0 = jt.base_point
    order = jt.order
    exps, pos = monomials(n, order)

    # initial guess: affine inverse  x0 + Linv (Y - y0)
    comps = []
    for i in range(n):
        coeffs = np.zeros(len(exps))
        coeffs[0] = x0[i]
        for j in range(n):
            coeffs[pos[tuple(1 if a == j else 0 for a in range(n))]] = Linv[i, j]
        comps.append(JetPoly(n, order, y0, coeffs, copy=False))
    psi = JetTuple(comps)

    ident = identity_jets(y0, order)
    for _ in range(max(1, order - 1)):
        resid = jet_compose(jt, psi)  # approx identity
        corr = [resid[i] - ident[i] for i in range(n)]
        new_comps = []
        for i in range(n):
            delta = constant_jet(0.0, n, order, y0)
            for j in range(n):
                delta = delta + corr[j] * Linv[i, j]
            new_comps.append(psi[i] - delta)
        psi = JetTuple(new_comps)
    return psi
