"""Singular point detection and classification for maps on boxes.

Singular points of a map g are located by seeding Newton iterations on the
vanishing of the maximal minors of the Jacobian from grid cells where the
smallest singular value dips, then classified locally from truncated jets:

* functions (ell = 1): nondegenerate / degenerate critical points,
* plane-to-plane:       folds and cusps via an adapted-coordinate reduction,
* surfaces in 3-space:  cross-caps via the second intrinsic derivative.

Rank decisions use a relative singular-value threshold with an explicit
ambiguity band; every returned point carries the margins that back its
labels so near-threshold classifications are auditable.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dsl import MapProgram
from .errors import (
    DomainError,
    FiberError,
    IndeterminateRankError,
    ShapeError,
    UnsupportedStratumError,
)
from .jets import (
    JetPoly,
    JetTuple,
    constant_jet,
    derivative_matrix,
    hessian,
    identity_jets,
    jet_compose,
    jet_inverse,
    jet_partial,
    monomials,
    truncate,
)

__all__ = [
    "Tolerances",
    "Classification",
    "TBSymbol",
    "SingularPoint",
    "DoublePoint",
    "classify_germ",
    "classify_point",
    "tb_symbol",
    "check_transverse_corank1",
    "find_singular_points",
    "find_double_points",
    "infinitesimal_stability_check",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical policy for rank decisions, Newton refinement, and dedup."""

    rank_rel_tol: float = 1e-8
    ambiguity_factor: float = 10.0
    newton_max_iter: int = 50
    newton_step_tol: float = 1e-12
    dedup_radius: float = 1e-6
    deep_dip_ratio: float = 1e-3
    image_rel_tol: float = 1e-9

    @property
    def band_hi(self):
        return self.rank_rel_tol * self.ambiguity_factor


DEFAULT_TOL = Tolerances()


class Classification(str, enum.Enum):
    MORSE = "morse_nondegenerate"
    DEGENERATE_CRITICAL = "degenerate_critical"
    FOLD = "fold"
    CUSP = "cusp"
    CROSS_CAP = "cross_cap"
    REGULAR = "regular"
    UNCLASSIFIED = "unclassified"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TBSymbol:
    """Iterated kernel ranks (i), (i, j), or (i, j, 0); non-increasing."""

    entries: tuple

    def __post_init__(self):
        e = tuple(int(x) for x in self.entries)
        if any(x < 0 for x in e) or any(a < b for a, b in zip(e, e[1:])):
            raise ShapeError(f"Thom-Boardman entries must be non-increasing >= 0: {e}")
        object.__setattr__(self, "entries", e)

    def __str__(self):
        return "(" + ",".join(str(x) for x in self.entries) + ")"


@dataclass(frozen=True)
class SingularPoint:
    location: np.ndarray
    corank: int
    tb_symbol: TBSymbol
    classification: Classification
    margin: float
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class DoublePoint:
    q1: np.ndarray
    q2: np.ndarray
    image_point: np.ndarray
    crossing_transverse: bool
    crossing_margin: float


# ---------------------------------------------------------------------------
# rank helpers


def _rank_with_margin(svals, threshold, ambiguity=10.0):
    """Rank at an absolute singular-value threshold, plus decision margin.

    margin > 1 means every value is comfortably away from the ambiguity
    band [threshold, ambiguity * threshold).
    """
    svals = np.sort(np.asarray(svals, float))[::-1]
    rank = int(np.sum(svals > threshold))
    margin = math.inf
    for s in svals:
        if s > threshold:
            margin = min(margin, s / (ambiguity * threshold))
        elif s > 0:
            margin = min(margin, threshold / s)
    return rank, margin


def _ambiguous(svals, threshold, tol):
    svals = np.asarray(svals, float)
    return bool(np.any((svals > threshold) &
                       (svals < tol.ambiguity_factor * threshold)))


def _second_derivative_scale(jet: JetTuple):
    """Largest Hessian operator norm over components (a curvature scale)."""
    s = 0.0
    for c in jet.components:
        H = hessian(c)
        s = max(s, float(np.linalg.norm(H, 2)))
    return s


def _deg_coeff_scale(jet_polys, degree):
    """Max |coefficient| at the given total degree across scalar jets."""
    scale = 0.0
    for jp in jet_polys:
        exps, _ = monomials(jp.n_vars, jp.order)
        for idx, e in enumerate(exps):
            if sum(e) == degree:
                scale = max(scale, abs(float(jp.coeffs[idx])))
    return scale


# ---------------------------------------------------------------------------
# local data at a point


def _local_frames(g: MapProgram, q, order, tol: Tolerances, j_scale=None):
    """Jet, Jacobian SVD frames, and corank of g at q."""
    q = np.asarray(q, dtype=float)
    jet = g.jet_at(q, order)
    J = derivative_matrix(jet)
    U, s, Vt = np.linalg.svd(J)
    scale = max(float(s[0]) if s.size else 0.0, j_scale or 0.0)
    if scale == 0.0:
        rank, rank_margin = 0, math.inf
    else:
        rank, rank_margin = _rank_with_margin(s, tol.rank_rel_tol * scale,
                                              tol.ambiguity_factor)
    return {
        "q": q,
        "jet": jet,
        "J": J,
        "U": U,
        "svals": s,
        "V": Vt.T,
        "rank": rank,
        "corank": g.n_in - rank,
        "rank_margin": rank_margin,
        "scale": scale,
    }


def _intrinsic_second(data):
    """Flattened derivative of the corank stratum's defining equations.

    Rows are indexed by (cokernel direction a, kernel direction b); row
    (a, b) is w -> u_a^T D2g(w, k_b).  Shape ((ell-r)*(n-r), n).
    """
    jet, U, V, r = data["jet"], data["U"], data["V"], data["rank"]
    n = jet.n_vars
    ell = jet.n_out
    U2 = U[:, r:]
    V2 = V[:, r:]
    H = np.stack([hessian(c) for c in jet.components])  # (ell, n, n)
    rows = []
    for a in range(ell - r):
        Ha = np.tensordot(U2[:, a], H, axes=(0, 0))  # (n, n)
        for b in range(n - r):
            rows.append(Ha @ V2[:, b])
    return np.asarray(rows)


def _row_normalized_rank(Mat, rel_tol):
    """Rank of the row space with rows scaled to unit norm."""
    Mat = np.asarray(Mat, float)
    norms = np.linalg.norm(Mat, axis=1)
    keep = Mat[norms > 0] / norms[norms > 0, None]
    if keep.size == 0:
        return 0, np.array([])
    s = np.linalg.svd(keep, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0])), s


# ---------------------------------------------------------------------------
# Thom-Boardman symbols


def tb_symbol(g: MapProgram, q, depth=2, tol: Tolerances = DEFAULT_TOL,
              jet_order=None, _data=None, _adapted=None) -> TBSymbol:
    """Iterated kernel ranks of dg at q, to depth <= 2.

    Entry 1 is dim ker dg_q.  Entry 2 is the kernel dimension of dg
    restricted to the tangent space of the corank stratum, computed from the
    second intrinsic derivative.  A trailing 0 is appended when the next
    kernel is certified trivial.  Raises IndeterminateRankError when a rank
    decision lands inside the ambiguity band.
    """
    if depth not in (1, 2):
        raise ShapeError("depth must be 1 or 2")
    order = jet_order if jet_order is not None else depth + 1
    data = _data if _data is not None else _local_frames(g, q, order, tol)
    if data["jet"].order < depth + 1:
        raise ShapeError(f"jet order >= {depth + 1} required for depth {depth}")
    s, scale = data["svals"], data["scale"]
    if scale > 0 and _ambiguous(s, tol.rank_rel_tol * scale, tol):
        raise IndeterminateRankError(
            f"Jacobian rank ambiguous at q={np.asarray(q, float)}; refine tolerances")
    i = data["corank"]
    if i == 0:
        return TBSymbol((0,))
    if depth == 1:
        return TBSymbol((i,))

    dS = _intrinsic_second(data)
    stacked = np.vstack([data["J"], dS])
    rank2, sv2 = _row_normalized_rank(stacked, tol.rank_rel_tol)
    if sv2.size and _ambiguous(sv2, tol.rank_rel_tol * sv2[0], tol):
        raise IndeterminateRankError(
            f"second-order rank ambiguous at q={np.asarray(q, float)}")
    j = g.n_in - rank2
    if j == 0:
        return TBSymbol((i, 0))
    entries = (i, j)
    if g.n_in == 2 and g.n_out == 2 and i == 1:
        # next kernel is trivial iff {det J = 0, tangency = 0} is regular,
        # read off from the degree-3 adapted jet
        ad = _adapted if _adapted is not None else _plane_adapted(g, q, tol, _data=data)
        M = np.array([[ad["K_Sw"], ad["K_ww"]], [ad["K_Sww"], ad["K_www"]]])
        r3, _ = _row_normalized_rank(M, tol.band_hi)
        if r3 == 2:
            entries = (i, j, 0)
    return TBSymbol(entries)


# ---------------------------------------------------------------------------
# adapted-coordinate reduction for plane-to-plane germs


def _plane_adapted(g: MapProgram, q, tol: Tolerances, _data=None):
    """Degree-3 data of a corank-1 plane germ in fold-adapted coordinates.

    Source is rotated so (s, w) align with the complement/kernel of dg_q,
    target so (G1, G2) align with the image/cokernel.  Solving G1 = S for s
    turns the germ into (S, w) -> (S, K(S, w)); the partials of K at 0 decide
    fold (K_ww != 0) versus cusp (K_ww = 0, K_Sw != 0, K_www != 0).
    """
    data = _data if _data is not None else _local_frames(g, q, 3, tol)
    jet, U, V = data["jet"], data["U"], data["V"]
    if jet.order < 3:
        data = _local_frames(g, q, 3, tol)
        jet, U, V = data["jet"], data["U"], data["V"]
    qv = data["q"]
    n = 2

    # source rotation: x = q + V (s, w)
    base_sw = np.zeros(2)
    exps, pos = monomials(2, 3)
    inner = []
    for jrow in range(n):
        coeffs = np.zeros(len(exps))
        coeffs[0] = qv[jrow]
        coeffs[pos[(1, 0)]] = V[jrow, 0]
        coeffs[pos[(0, 1)]] = V[jrow, 1]
        inner.append(JetPoly(2, 3, base_sw, coeffs, copy=False))
    G = jet_compose(jet, JetTuple(inner))

    gq = jet.values()
    G1 = sum((G[i] * U[i, 0] for i in range(2)),
             constant_jet(-float(U[:, 0] @ gq), 2, 3, base_sw))
    G2 = sum((G[i] * U[i, 1] for i in range(2)),
             constant_jet(-float(U[:, 1] @ gq), 2, 3, base_sw))

    w_jet = identity_jets(base_sw, 3)[1]
    psi = jet_inverse(JetTuple([G1, w_jet]))
    K = jet_compose(JetTuple([G2]), psi)[0]

    return {
        "a": float(G1.coeff((1, 0))),
        "K": K,
        "K_ww": 2.0 * float(K.coeff((0, 2))),
        "K_Sw": float(K.coeff((1, 1))),
        "K_www": 6.0 * float(K.coeff((0, 3))),
        "K_Sww": 2.0 * float(K.coeff((1, 2))),
        "s2": _deg_coeff_scale([G1, G2], 2),
        "s3": _deg_coeff_scale([G1, G2], 3),
    }


def _ratio(value, scale):
    if scale == 0.0:
        return math.inf if value != 0.0 else 0.0
    return abs(value) / scale


# ---------------------------------------------------------------------------
# classification


def classify_point(g: MapProgram, q, tol: Tolerances = DEFAULT_TOL,
                   j_scale=None) -> SingularPoint:
    """Full local diagnosis at q: corank, symbol, class, margins."""
    data = _local_frames(g, q, 3, tol, j_scale=j_scale)
    n, ell = g.n_in, g.n_out
    corank = data["corank"]
    diagnostics = {"svals": [float(x) for x in data["svals"]],
                   "rank_margin": float(data["rank_margin"])}
    margin = data["rank_margin"]

    def finish(classification, extra_margin=None, symbol=None, adapted=None, **extra):
        m = margin if extra_margin is None else min(margin, extra_margin)
        if symbol is None:
            symbol = _tb_or_none(g, q, tol, data, adapted)
        diagnostics.update(extra)
        return SingularPoint(np.asarray(q, float), corank, symbol,
                             classification, float(m), diagnostics)

    if corank == 0:
        return finish(Classification.REGULAR, symbol=TBSymbol((0,)))

    if ell == 1:
        H = hessian(data["jet"][0])
        hs = np.linalg.svd(H, compute_uv=False)
        # judge the Hessian against the germ's own curvature scale so a
        # flat critical point (e.g. an inflection) cannot self-normalize
        scale2 = max(float(hs[0]),
                     2.0 * _deg_coeff_scale(data["jet"].components, 2),
                     6.0 * _deg_coeff_scale(data["jet"].components, 3))
        if scale2 == 0.0:
            return finish(Classification.DEGENERATE_CRITICAL, extra_margin=math.inf,
                          hessian_ratio=0.0)
        ratio = float(hs[-1] / scale2)
        diagnostics["hessian_ratio"] = ratio
        if ratio > tol.band_hi:
            return finish(Classification.MORSE, extra_margin=ratio / tol.band_hi)
        if ratio <= tol.rank_rel_tol:
            return finish(Classification.DEGENERATE_CRITICAL,
                          extra_margin=tol.rank_rel_tol / max(ratio, 1e-300))
        return finish(Classification.UNCLASSIFIED, extra_margin=1.0)

    if (n, ell) == (2, 2) and corank == 1:
        ad = _plane_adapted(g, q, tol, _data=data)
        c2 = _ratio(ad["K_ww"], ad["s2"])
        diagnostics["fold_ratio"] = c2
        if c2 > tol.band_hi:
            return finish(Classification.FOLD, extra_margin=c2 / tol.band_hi,
                          adapted=ad)
        if c2 <= tol.rank_rel_tol:
            c3 = _ratio(ad["K_www"], ad["s3"])
            cS = _ratio(ad["K_Sw"], ad["s2"])
            diagnostics["cusp_third_ratio"] = c3
            diagnostics["cusp_unfold_ratio"] = cS
            if c3 > tol.band_hi and cS > tol.band_hi:
                extra = min(c3, cS) / tol.band_hi
                if c2 > 0:
                    extra = min(extra, tol.rank_rel_tol / c2)
                return finish(Classification.CUSP, extra_margin=extra, adapted=ad)
        return finish(Classification.UNCLASSIFIED, extra_margin=1.0, adapted=ad)

    if (n, ell) == (2, 3) and corank == 1:
        M = _intrinsic_second(data)  # 2 x 2 at corank 1
        ms = np.linalg.svd(M, compute_uv=False)
        s2 = max(_second_derivative_scale(data["jet"]), 1e-300)
        ratio = float(ms[-1] / s2) if ms.size else 0.0
        diagnostics["umbrella_ratio"] = ratio
        if M.shape[0] == 2 and ratio > tol.band_hi:
            return finish(Classification.CROSS_CAP, extra_margin=ratio / tol.band_hi)
        return finish(Classification.UNCLASSIFIED, extra_margin=1.0)

    return finish(Classification.UNCLASSIFIED)


def _tb_or_none(g, q, tol, data, adapted=None):
    try:
        return tb_symbol(g, q, depth=2, tol=tol, _data=data, _adapted=adapted)
    except IndeterminateRankError:
        return TBSymbol((data["corank"],))


def classify_germ(g: MapProgram, q, tol: Tolerances = DEFAULT_TOL) -> Classification:
    """Local singularity type of g at q (see classify_point for margins)."""
    return classify_point(g, q, tol).classification


# ---------------------------------------------------------------------------
# transversality to the corank-1 stratum


def check_transverse_corank1(g: MapProgram, q, tol: Tolerances = DEFAULT_TOL):
    """Is the jet extension transverse to the corank-1 stratum at q?

    Returns (bool, margin).  The local defining equations of the stratum,
    pulled back by the 1-jet extension, have derivative given by the second
    intrinsic derivative; transversality means that matrix has full row
    rank, decided against the map's curvature scale.
    """
    data = _local_frames(g, q, 2, tol)
    if data["corank"] != 1:
        raise UnsupportedStratumError(
            f"corank-1 check requested at a corank-{data['corank']} point")
    dS = _intrinsic_second(data)
    rows = dS.shape[0]
    scale = max(_second_derivative_scale(data["jet"]), 1e-300)
    sv = np.linalg.svd(dS, compute_uv=False)
    smallest = float(sv[rows - 1]) if rows <= len(sv) and rows <= g.n_in else 0.0
    if rows > g.n_in:
        smallest = 0.0
    margin = smallest / (tol.band_hi * scale)
    return margin >= 1.0, margin


# ---------------------------------------------------------------------------
# detection


def _grid_points(box, grid):
    axes = [np.linspace(lo, hi, grid + 1) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh])
    return pts, tuple(len(a) for a in axes)


def _minor_system(g: MapProgram, x, k):
    """Values and Jacobian of all k x k minors of dg at x."""
    jet = g.jet_at(np.asarray(x, float), 2)
    entries = [[jet_partial(c, j) for j in range(g.n_in)] for c in jet.components]
    vals, grads = [], []
    for rows in itertools.combinations(range(g.n_out), k):
        for cols in itertools.combinations(range(g.n_in), k):
            det = _jet_det([[entries[r][c] for c in cols] for r in rows])
            vals.append(float(det.value))
            grads.append(det.gradient())
    return np.asarray(vals), np.asarray(grads)


def _jet_det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    det = None
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in M[1:]]
        term = M[0][j] * _jet_det(minor)
        if j % 2 == 1:
            term = -term
        det = term if det is None else det + term
    return det


def _inside(x, rect, slack=0.0):
    for xi, (lo, hi) in zip(x, rect):
        span = hi - lo
        if xi < lo - slack * span or xi > hi + slack * span:
            return False
    return True


def _newton(eval_fn, x0, rect, tol: Tolerances):
    """Damping-free Newton/Gauss-Newton; returns (x, converged, iters).

    Least-squares steps handle under/overdetermined systems; wandering out
    of the doubled box, out of the map's domain, or into a runtime
    singularity all count as divergence (the candidate is dropped).
    """
    from .errors import EvaluationError

    x = np.asarray(x0, float).copy()
    for it in range(tol.newton_max_iter):
        try:
            vals, Jm = eval_fn(x)
        except (DomainError, EvaluationError):
            return x, False, it + 1
        step = None
        if Jm.shape[0] == Jm.shape[1]:
            try:
                step = np.linalg.solve(Jm, -vals)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and not np.all(np.isfinite(step)):
                step = None
        if step is None:
            step, *_ = np.linalg.lstsq(Jm, -vals, rcond=None)
        x = x + step
        if not _inside(x, rect, slack=0.5):
            return x, False, it + 1
        if np.linalg.norm(step) < tol.newton_step_tol:
            return x, True, it + 1
    return x, False, tol.newton_max_iter


def find_singular_points(g: MapProgram, box, grid, tol: Tolerances = DEFAULT_TOL,
                         stats=None):
    """Locate and classify corank >= 1 points of g inside a closed box.

    Grid nodes where the Jacobian's smallest singular value dips (local
    minima along grid lines, deep dips, and determinant sign changes for
    square maps) seed Newton iterations on the maximal-minor equations.
    Converged, deduplicated points are classified and returned sorted by
    location; the result is deterministic for fixed inputs.
    """
    n = g.n_in
    if n > 4:
        raise ShapeError("detection supports at most 4 source dimensions")
    if grid < 16:
        raise ShapeError("grid must be at least 16 per axis")
    rect = [(float(lo), float(hi)) for lo, hi in box]
    if not g.domain.contains_closed_box(rect):
        raise DomainError("search box is not contained in the map's domain")

    pts, shape = _grid_points(rect, grid)
    J = g.jacobian(pts)  # (ell, n, B)
    Jb = np.moveaxis(J, 2, 0)  # (B, ell, n)
    svals = np.linalg.svd(Jb, compute_uv=False)
    j_scale = float(np.max(svals)) if svals.size else 0.0
    sig_min = svals[:, -1].reshape(shape)

    seed_mask = np.zeros(shape, dtype=bool)
    for axis in range(n):
        lo = np.roll(sig_min, 1, axis=axis)
        hi = np.roll(sig_min, -1, axis=axis)
        interior = (sig_min <= lo) & (sig_min <= hi)
        sl = [slice(None)] * n
        sl[axis] = slice(1, -1)
        seed_mask[tuple(sl)] |= interior[tuple(sl)]
    if j_scale > 0:
        seed_mask |= (sig_min / j_scale) < tol.deep_dip_ratio
    if g.n_out == n:
        dets = np.linalg.det(Jb).reshape(shape)
        for axis in range(n):
            sl_a = [slice(None)] * n
            sl_b = [slice(None)] * n
            sl_a[axis] = slice(0, -1)
            sl_b[axis] = slice(1, None)
            flip = dets[tuple(sl_a)] * dets[tuple(sl_b)] <= 0.0
            seed_mask[tuple(sl_a)] |= flip
            seed_mask[tuple(sl_b)] |= flip

    seeds = pts.T[seed_mask.ravel()]
    k = min(n, g.n_out)
    attempted = converged = 0
    locations = []
    for seed in seeds:
        attempted += 1
        x, ok, _ = _newton(lambda x: _minor_system(g, x, k), seed, rect, tol)
        if not ok or not _inside(x, rect):
            continue
        converged += 1
        if any(np.linalg.norm(x - y) <= tol.dedup_radius for y in locations):
            continue
        locations.append(x)

    special = []
    if (n, g.n_out) == (2, 2):
        special = _refine_plane_cusps(g, locations, rect, tol, j_scale)
        locations = [x for x in locations
                     if all(np.linalg.norm(x - c) > tol.dedup_radius for c in special)]

    final = special + locations
    final.sort(key=lambda x: tuple(x))

    points = []
    for x in final:
        sp = classify_point(g, x, tol, j_scale=j_scale)
        if sp.corank < 1:
            continue
        points.append(sp)
    if stats is not None:
        stats.update({"seeds": int(attempted), "converged": int(converged),
                      "grid_nodes": int(pts.shape[1]), "j_scale": j_scale,
                      "cusp_candidates": len(special)})
    return points


def _plane_h_kh(g: MapProgram, x, row_choice):
    """Values/Jacobian of (det J, kernel-direction derivative of det J)."""
    jet = g.jet_at(np.asarray(x, float), 3)
    E = [[jet_partial(c, j) for j in range(2)] for c in jet.components]
    h = E[0][0] * E[1][1] - E[0][1] * E[1][0]  # order-2 jet
    hx, hy = jet_partial(h, 0), jet_partial(h, 1)
    if row_choice == 0:
        k0, k1 = -E[0][1], E[0][0]
    else:
        k0, k1 = -E[1][1], E[1][0]
    kh = hx * truncate(k0, 1) + hy * truncate(k1, 1)
    vals = np.array([float(h.value), float(kh.value)])
    grads = np.vstack([h.gradient(), kh.gradient()])
    return vals, grads


def _refine_plane_cusps(g, curve_points, rect, tol, j_scale):
    """Newton on {det J = 0, kernel tangency = 0} seeded near tangencies.

    The tangency value is evaluated once at every curve point; Newton runs
    from the points in the small-|kh| tail (cusps are zeros of kh along the
    curve, so their neighborhoods dominate the low quantiles).
    """
    seeds = []
    for seed in curve_points:
        J0 = g.jacobian(seed)
        row_choice = 0 if np.linalg.norm(J0[0]) >= np.linalg.norm(J0[1]) else 1
        vals, _ = _plane_h_kh(g, seed, row_choice)
        seeds.append((abs(vals[1]), seed, row_choice))
    if not seeds:
        return []
    cutoff = np.quantile([s[0] for s in seeds], 0.5)
    picked = [s for s in seeds if s[0] <= cutoff]
    if len(picked) < min(16, len(seeds)):
        picked = sorted(seeds, key=lambda s: s[0])[:16]

    found = []
    for _, seed, row_choice in picked:
        x, ok, _ = _newton(lambda x: _plane_h_kh(g, x, row_choice), seed, rect, tol)
        if not ok or not _inside(x, rect):
            continue
        if any(np.linalg.norm(x - y) <= tol.dedup_radius for y in found):
            continue
        sp = classify_point(g, x, tol, j_scale=j_scale)
        if sp.classification is Classification.CUSP:
            found.append(x)
    return found


# ---------------------------------------------------------------------------
# double points (s = 2 multijet incidences)


def find_double_points(g: MapProgram, box, grid, separation=None,
                       tol: Tolerances = DEFAULT_TOL):
    """Distinct source pairs with (numerically) equal images, for R^2 -> R^3.

    Pairs of grid nodes with close images and source separation above a
    floor (default 4x the grid spacing) are refined by Gauss-Newton on
    g(q1) - g(q2) = 0; each converged pair reports whether the two tangent
    planes span R^3 (smallest singular value of the stacked orthonormal
    tangent frames against a threshold).
    """
    if (g.n_in, g.n_out) != (2, 3):
        raise ShapeError("double-point search expects a map R^2 -> R^3")
    if grid < 16:
        raise ShapeError("grid must be at least 16 per axis")
    rect = [(float(lo), float(hi)) for lo, hi in box]
    if not g.domain.contains_closed_box(rect):
        raise DomainError("search box is not contained in the map's domain")
    spacing = max((hi - lo) / grid for lo, hi in rect)
    delta = 4.0 * spacing if separation is None else float(separation)
    if delta <= 0:
        raise ShapeError("separation floor must be positive")

    pts, _ = _grid_points(rect, grid)
    P = pts.T  # (B, 2)
    imgs = g.eval_batch(P)  # (B, 3)
    img_scale = max(1.0, float(np.max(np.abs(imgs))))

    d_img = np.linalg.norm(imgs[:, None, :] - imgs[None, :, :], axis=2)
    d_src = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    iu = np.triu_indices(len(P), k=1)
    ok = d_src[iu] >= delta
    cand = np.column_stack([iu[0][ok], iu[1][ok]])
    dvals = d_img[iu][ok]
    take = min(len(dvals), 8 * grid)
    order = np.argsort(dvals, kind="stable")[:take]
    cand = cand[order]

    def pair_residual(z):
        q1, q2 = z[:2], z[2:]
        r = g(q1) - g(q2)
        Jm = np.hstack([g.jacobian(q1), -g.jacobian(q2)])
        return r, Jm

    rect4 = rect + rect
    results = []
    for i, j in cand:
        z0 = np.concatenate([P[i], P[j]])
        z, okc, _ = _newton(pair_residual, z0, rect4, tol)
        if not okc:
            continue
        q1, q2 = z[:2], z[2:]
        if not (_inside(q1, rect) and _inside(q2, rect)):
            continue
        if np.linalg.norm(q1 - q2) < delta:
            continue
        r = g(q1) - g(q2)
        if np.linalg.norm(r) > tol.image_rel_tol * img_scale * 1e3:
            continue
        if tuple(q2) < tuple(q1):
            q1, q2 = q2, q1
        z_cat = np.concatenate([q1, q2])
        if any(np.linalg.norm(z_cat - np.concatenate([d.q1, d.q2])) <= tol.dedup_radius
               for d in results):
            continue
        transverse, marg = _crossing_transverse(g, q1, q2, tol)
        results.append(DoublePoint(q1, q2, 0.5 * (g(q1) + g(q2)), transverse, marg))
    results.sort(key=lambda d: tuple(np.concatenate([d.q1, d.q2])))
    return results


def _crossing_transverse(g, q1, q2, tol):
    frames = []
    degenerate = False
    for q in (q1, q2):
        U, s, _ = np.linalg.svd(g.jacobian(q))
        if s[0] == 0 or s[1] / s[0] <= tol.band_hi:
            degenerate = True
        frames.append(U[:, :2].T)
    stacked = np.vstack(frames)  # 4 x 3 with orthonormal rows per sheet
    sv = np.linalg.svd(stacked, compute_uv=False)
    margin = float(sv[2]) / (tol.band_hi * float(sv[0]))
    if degenerate:
        return False, 0.0
    return margin >= 1.0, margin


# ---------------------------------------------------------------------------
# infinitesimal stability (truncated-jet model)


def infinitesimal_stability_check(g: MapProgram, points, order,
                                  tol: Tolerances = DEFAULT_TOL):
    """Solvability of  dg(xi) + eta o g = tau  over truncated jets.

    ``points`` is one or two source points in a common fiber; ``order`` is
    the truncation order of all jets involved.  Unknowns are the jets of a
    source vector field xi at each point and of a single target vector field
    eta at the shared image; the check succeeds iff every monomial basis
    vector tau of the truncated vector fields along g is reachable.

    Returns (stable, defect) where defect is the codimension of the image.
    """
    pts = [np.asarray(p, float) for p in points]
    if len(pts) not in (1, 2):
        raise ShapeError("stability check expects 1 or 2 points")
    if order < 1:
        raise ShapeError("order must be >= 1")
    ys = [g(p) for p in pts]
    y_scale = max(1.0, max(float(np.max(np.abs(y))) for y in ys))
    for y in ys[1:]:
        if np.linalg.norm(y - ys[0]) > 1e-8 * y_scale:
            raise FiberError("points do not map to a common target value")
    y = ys[0]

    n, ell = g.n_in, g.n_out
    exps_n, _ = monomials(n, order)
    exps_l, _ = monomials(ell, order)
    Mn, Ml = len(exps_n), len(exps_l)
    s = len(pts)
    rows = s * ell * Mn
    cols_xi = s * n * Mn
    cols_eta = ell * Ml
    L = np.zeros((rows, cols_xi + cols_eta))

    for p_idx, q in enumerate(pts):
        jet = g.jet_at(q, order + 1)
        E = [[jet_partial(c, j) for j in range(n)] for c in jet.components]
        row0 = p_idx * ell * Mn

        # tg block: multiplication by the Jacobian-entry jets
        for j in range(n):
            for b_idx in range(Mn):
                coeffs = np.zeros(Mn)
                coeffs[b_idx] = 1.0
                mono = JetPoly(n, order, q, coeffs, copy=False)
                col = p_idx * n * Mn + j * Mn + b_idx
                for i in range(ell):
                    L[row0 + i * Mn: row0 + (i + 1) * Mn, col] = (E[i][j] * mono).coeffs

        # omega-g block: composition of target monomials with g
        nil = [truncate(jet.components[a], order) - jet.components[a].value
               for a in range(ell)]
        prods = {tuple([0] * ell): constant_jet(1.0, n, order, q)}
        for e in exps_l[1:]:
            prev = None
            for a in range(ell):
                if e[a] > 0:
                    prev_key = tuple(x - (1 if idx == a else 0) for idx, x in enumerate(e))
                    prev = prods[prev_key] * nil[a]
                    break
            prods[e] = prev
        # shift: eta is a jet at y, evaluated on g's full value g(q)=y + 0
        for a in range(ell):
            for g_idx, e in enumerate(exps_l):
                col = cols_xi + a * Ml + g_idx
                L[row0 + a * Mn: row0 + (a + 1) * Mn, col] = prods[e].coeffs

    norms = np.linalg.norm(L, axis=0)
    nz = norms > 0
    L[:, nz] = L[:, nz] / norms[nz]
    sv = np.linalg.svd(L, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return False, rows
    rank = int(np.sum(sv > tol.rank_rel_tol * sv[0]))
    defect = rows - rank
    return defect == 0, defect
