"""Acceptance suite: one test per criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one printed
pass line per criterion in addition to the pytest verdicts.
"""

import time

import numpy as np
import pytest

from jetgen.dsl import compose, parse_map
from jetgen.harness import ExperimentConfig, run_experiment
from jetgen.jets import derivative_matrix
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
from jetgen.gdsm import GdsmSpec, build_gdsm, cusp_count_experiment, reduce_gdsm
from jetgen.singular import Classification, infinitesimal_stability_check


def _announce(num, text):
    print(f"\nCRITERION {num}: PASS - {text}")


def _random_gl(rng, ell, min_det=0.1):
    while True:
        M = rng.standard_normal((ell, ell))
        scale = np.max(np.abs(M), axis=1)
        if np.all(scale > 0) and abs(np.linalg.det(M / scale[:, None])) >= min_det:
            return LinearMap(M)


# ----------------------------------------------------------------------
# 1. re-parametrization round trips


def test_criterion_01_phi_round_trips():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ell = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        L = _random_gl(rng, ell)
        alpha = LinearMap(rng.standard_normal((ell, m)))
        _, ap = phi(L, alpha)
        _, back = phi_inv(L, ap)
        worst = max(worst, float(np.max(np.abs(back.matrix - alpha.matrix))))
        _, fwd = phi(L, back)
        worst = max(worst, float(np.max(np.abs(fwd.matrix - ap.matrix))))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9, f"round-trip error {worst:.3e}"
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    _announce(1, f"1000 round trips, max error {worst:.2e}, {elapsed:.2f}s")


# ----------------------------------------------------------------------
# 2. graph/projection composition identity


def _random_poly_source(rng, n_in, n_out, var_names):
    """Small random polynomial map source over the given variables."""
    comps = []
    for _ in range(n_out):
        terms = []
        for _ in range(int(rng.integers(2, 5))):
            coef = round(float(rng.uniform(-2, 2)), 3)
            degs = rng.integers(0, 3, size=n_in)
            mono = "*".join(
                f"{v}^{d}" if d > 1 else v
                for v, d in zip(var_names, degs) if d > 0)
            terms.append(f"{coef}" + (f"*{mono}" if mono else ""))
        comps.append(" + ".join(terms))
    return f"map ({', '.join(var_names)}) -> ({', '.join(comps)})"


def _random_embedding_source(rng, n, m):
    """Graph-style embedding R^n -> R^m (first components are coordinates)."""
    vs = ["s", "t"][:n]
    comps = list(vs)
    for _ in range(m - n):
        coef = round(float(rng.uniform(-1.5, 1.5)), 3)
        d = int(rng.integers(1, 4))
        comps.append(f"{coef}*{vs[int(rng.integers(0, n))]}^{d}")
    return f"map ({', '.join(vs)}) -> ({', '.join(comps)})"


def test_criterion_02_composition_identity():
    rng = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 3))
        m = int(rng.integers(n, 4))
        ell = int(rng.integers(1, 4))
        F = parse_map(_random_poly_source(rng, m, ell, [f"x{i}" for i in range(1, m + 1)]))
        f = parse_map(_random_embedding_source(rng, n, m))
        ftil = compose(graph_embedding(F), f)
        for _ in range(20):
            L = _random_gl(rng, ell)
            alpha = LinearMap(rng.standard_normal((ell, m)))
            lhs = compose(linear_program(pi_lambda_alpha(L, alpha)), ftil)
            rhs = compose(h_lambda(L), compose(perturb(F, alpha), f))
            pts = rng.uniform(-1.5, 1.5, size=(100, n))
            va, vb = lhs.eval_batch(pts), rhs.eval_batch(pts)
            scale = max(1.0, float(np.max(np.abs(vb))))
            worst = max(worst, float(np.max(np.abs(va - vb))) / scale)
    assert worst <= 1e-9, f"max identity deviation {worst:.3e}"
    _announce(2, f"20 map pairs x 20 (L, alpha) x 100 points, max deviation {worst:.2e}")


# ----------------------------------------------------------------------
# 3. distance-squared reduction identity


def test_criterion_03_gdsm_reduction():
    rng = np.random.default_rng(1003)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 5))
        ell = int(rng.integers(1, 5))
        A = rng.uniform(0.2, 2.0, (ell, m)) * rng.choice([-1.0, 1.0], (ell, m))
        p = rng.standard_normal((ell, m))
        spec = GdsmSpec(A=A, p=p)
        G = build_gdsm(spec)
        F, alpha, shift = reduce_gdsm(spec)
        Fa = perturb(F, alpha)
        pts = rng.standard_normal((30, m)) * 2.0
        gv = G.eval_batch(pts)
        fv = Fa.eval_batch(pts) + shift
        scale = max(1.0, float(np.max(np.abs(gv))))
        worst = max(worst, float(np.max(np.abs(gv - fv))) / scale)
    assert worst <= 1e-10, f"max reduction error {worst:.3e}"
    _announce(3, f"100 random specs, max relative error {worst:.2e}")


# ----------------------------------------------------------------------
# 4-6. distance-squared classification counts


def test_criterion_04_plane_one_cusp():
    t0 = time.perf_counter()
    results = cusp_count_experiment([[1.0, 2.0], [3.0, 1.0]],
                                    n_samples=50, seed=42, grid=32)
    elapsed = time.perf_counter() - t0
    for r in results:
        assert r.cusp_count == 1, f"sample {r.index}: {r.cusp_count} cusps"
        assert r.other_count == 0, f"sample {r.index}: non-fold/cusp points"
        assert r.fold_count == len(r.points) - 1
        assert r.passed
    assert elapsed < 120.0, f"took {elapsed:.1f}s"
    _announce(4, f"50/50 samples with exactly one cusp, folds elsewhere ({elapsed:.1f}s)")


def test_criterion_05_plane_rank1_folds_only():
    results = cusp_count_experiment([[1.0, 2.0], [2.0, 4.0]],
                                    n_samples=50, seed=42, grid=32)
    for r in results:
        assert r.cusp_count == 0, f"sample {r.index}: unexpected cusp"
        assert all(q.classification is Classification.FOLD for q in r.points), \
            f"sample {r.index}: non-fold point"
        assert r.passed
    _announce(5, "50/50 rank-1 samples with folds only")


def test_criterion_06_umbrella():
    results = cusp_count_experiment([[1.0, 2.0], [3.0, 1.0], [1.0, 1.0]],
                                    n_samples=25, seed=42, grid=32)
    for r in results:
        assert len(r.points) == 1, f"sample {r.index}: {len(r.points)} singular points"
        assert r.points[0].classification is Classification.CROSS_CAP
        assert len(r.double_points) > 0
        assert r.double_points_transverse, f"sample {r.index}: tangential crossing"
        assert r.passed
    _announce(6, "25/25 samples: one cross-cap, all double points transverse")


# ----------------------------------------------------------------------
# 7. Morse genericity


def _morse_cfg(F, n_samples, seed, diagnostic=False):
    return ExperimentConfig.from_json_dict({
        "kind": "morse_genericity",
        "dims": {"n": 1, "m": 1, "ell": 1},
        "maps": {"F": F},
        "box": [[-3.0, 3.0]],
        "grid": 64,
        "n_samples": n_samples,
        "seed": seed,
        "diagnostic_zero_pi": diagnostic,
    })


def test_criterion_07_morse_genericity():
    for F in ("map (x) -> (x^3)", "map (x) -> (x^4 - x^2)"):
        report = run_experiment(_morse_cfg(F, 1000, 777))
        assert report.failures == 0, f"{F}: {report.failures} failures"
    diag = run_experiment(_morse_cfg("map (x) -> (x^3)", 1, 777, diagnostic=True))
    assert diag.failures == 1
    pts = diag.samples[0]["points"]
    assert any(p["classification"] == "degenerate_critical" for p in pts)
    _announce(7, "2000/2000 perturbed samples Morse; unperturbed cubic degenerate")


# ----------------------------------------------------------------------
# 8. excellent-map genericity


@pytest.fixture(scope="module")
def excellent_reports():
    reports = {}
    for name, F in [("squares", "map (x,y) -> (x^2, y^2)"),
                    ("conformal", "map (x,y) -> ((0.5*x)^2 - (0.5*y)^2, 2*(0.5*x)*(0.5*y))")]:
        cfg = ExperimentConfig.from_json_dict({
            "kind": "plane_excellent",
            "dims": {"n": 2, "m": 2, "ell": 2},
            "maps": {"F": F},
            "box": [[-3.0, 3.0], [-3.0, 3.0]],
            "grid": 24,
            "n_samples": 200,
            "seed": 2718,
        })
        reports[name] = run_experiment(cfg)
    return reports


def test_criterion_08_excellent_genericity(excellent_reports):
    for name, report in excellent_reports.items():
        assert report.failures == 0, f"{name}: {report.failures} failures"
        for s in report.samples:
            for p in s["points"]:
                assert p["classification"] in ("fold", "cusp")
                assert p["transverse_margin"] > 1.0
    diag = run_experiment(ExperimentConfig.from_json_dict({
        "kind": "plane_excellent",
        "dims": {"n": 2, "m": 2, "ell": 2},
        "maps": {"F": "map (x,y) -> (x^2, y^2)"},
        "box": [[-3.0, 3.0], [-3.0, 3.0]],
        "grid": 24,
        "n_samples": 1,
        "seed": 2718,
        "diagnostic_zero_pi": True,
    }))
    assert diag.failures == 1
    corank2 = [p for p in diag.samples[0]["points"] if p["corank"] == 2]
    assert corank2 and np.linalg.norm(corank2[0]["location"]) < 1e-6
    _announce(8, "400/400 perturbed samples excellent with transversality; "
                 "unperturbed squares map fails with a corank-2 origin")


# ----------------------------------------------------------------------
# 9. infinitesimal stability


def test_criterion_09_stability(excellent_reports):
    fold = parse_map("map (x,y) -> (x, y^2)")
    cusp = parse_map("map (x,y) -> (x, y^3 - x*y)")
    y3 = parse_map("map (x,y) -> (x, y^3)")
    origin = np.zeros(2)
    for order in (3, 4):
        ok, defect = infinitesimal_stability_check(fold, [origin], order)
        assert ok and defect == 0
        ok, defect = infinitesimal_stability_check(cusp, [origin], order)
        assert ok and defect == 0
    ok, defect = infinitesimal_stability_check(y3, [origin], 4)
    assert not ok and defect > 0

    # 100 fold points drawn from the criterion-8 runs
    F = parse_map("map (x,y) -> (x^2, y^2)")
    report = excellent_reports["squares"]
    checked = 0
    for s in report.samples:
        alpha = LinearMap(np.asarray(s["alpha"]).reshape(2, 2))
        g = perturb(F, alpha)
        for p in s["points"]:
            if p["classification"] != "fold":
                continue
            ok, defect = infinitesimal_stability_check(g, [np.asarray(p["location"])], 3)
            assert ok and defect == 0, f"fold at {p['location']} not stable"
            checked += 1
            if checked >= 100:
                break
        if checked >= 100:
            break
    assert checked == 100
    _announce(9, "normal forms verified at orders 3-4; degenerate germ has "
                 "positive defect; 100 sampled fold points stable")


# ----------------------------------------------------------------------
# 10. jet engine vs finite differences on the DSL corpus


DSL_CORPUS = [
    ("map (x,y) -> (x*y + x^3 - 2*y, sin(x)*cos(y))", [(-1.2, 0.4), (0.7, 1.1)]),
    ("map (x) on x in (0.1, 10) -> (log(x) + sqrt(x), 1/x)", [(0.8,), (3.5,)]),
    ("map (x,y,z) -> (exp(0.3*x)*y - z^2, x/(2 + cos(y)), x*y*z)",
     [(0.3, -0.8, 1.2), (-1.0, 0.5, 0.2)]),
    ("map (u,v) -> ((u - v)^2, exp(sin(u)) - cos(v^2))", [(0.9, -0.3)]),
    ("map (x,y) -> (x^2 - y^2, 2*x*y)", [(1.0, 0.5)]),
    ("map (x) -> (x^4 - x^2 + 0.25*x)", [(0.6,), (-1.4,)]),
]


def _fd_first(fun, x, h=1e-4):
    cols = []
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


def _fd_second(fun, x, i, j, h=1e-4):
    ei, ej = np.zeros(len(x)), np.zeros(len(x))
    ei[i], ej[j] = h, h
    if i == j:
        return (fun(x + ei) - 2 * fun(x) + fun(x - ei)) / h**2
    return (fun(x + ei + ej) - fun(x + ei - ej)
            - fun(x - ei + ej) + fun(x - ei - ej)) / (4 * h**2)


def test_criterion_10_jet_finite_difference_consistency():
    from jetgen.jets import hessian

    worst1 = worst2 = 0.0
    for src, points in DSL_CORPUS:
        g = parse_map(src)
        for q in points:
            q = np.asarray(q, float)
            jt = g.jet_at(q, 3)
            J = derivative_matrix(jt)
            J_fd = _fd_first(g, q)
            rel1 = np.max(np.abs(J - J_fd)) / max(1.0, np.max(np.abs(J_fd)))
            worst1 = max(worst1, float(rel1))
            for ci, comp in enumerate(jt.components):
                H = hessian(comp)
                for i in range(g.n_in):
                    for j in range(g.n_in):
                        want = _fd_second(lambda x: g(x)[ci], q, i, j)
                        rel2 = abs(H[i, j] - want) / max(1.0, abs(want))
                        worst2 = max(worst2, float(rel2))
    assert worst1 <= 1e-6, f"first partials off by {worst1:.3e}"
    assert worst2 <= 1e-4, f"second partials off by {worst2:.3e}"
    _announce(10, f"corpus first partials within {worst1:.2e}, second within {worst2:.2e}")
