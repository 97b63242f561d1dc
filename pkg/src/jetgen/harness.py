"""Seeded genericity experiments over perturbation space.

An experiment draws linear perturbations from per-sample Gaussian streams,
forms the perturbed composition, runs the detector/classifier suite of its
kind, and records pass/fail per sample:

* ``morse_genericity``  -- every critical point nondegenerate (ell = 1)
* ``plane_excellent``   -- every singular point a fold or cusp, with
                           transversality to the corank-1 stratum
* ``space_pinch``       -- every singular point a cross-cap, every double
                           point a transverse crossing
* ``gdsm_cusp``         -- delegated to the distance-squared experiments
* ``identity_checks``   -- re-parametrization round trips and the
                           graph/projection composition identity

Reports are reproducible bit-for-bit from (config, seed), including under
sample-level parallelism (``JETGEN_THREADS``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dsl import MapProgram, compose, parse_map
from .errors import (
    ConfigError,
    IndeterminateRankError,
    ReportSchemaError,
    UnsupportedStratumError,
)
from .gdsm import cusp_count_experiment, psi
from .maps import (
    LinearMap,
    graph_embedding,
    h_lambda,
    linear_program,
    perturb,
    phi,
    phi_inv,
    pi_lambda_alpha,
)
from .singular import (
    Classification,
    Tolerances,
    check_transverse_corank1,
    find_double_points,
    find_singular_points,
)

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "sample_perturbation",
    "sample_rng",
    "run_experiment",
    "write_report",
    "read_report",
    "summarize",
    "FORMAT_VERSION",
    "CSV_COLUMNS",
]

FORMAT_VERSION = "1"
CSV_COLUMNS = ("sample_index", "alpha", "point", "corank", "tb_symbol",
               "classification", "margin", "pass")
KINDS = ("morse_genericity", "plane_excellent", "space_pinch", "gdsm_cusp",
         "identity_checks")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    dims: tuple  # (n, m, ell)
    n_samples: int
    seed: int
    sigma: float = 1.0
    map_sources: dict = field(default_factory=dict)  # name -> DSL source
    box: tuple = ()
    grid: int = 32
    tolerances: Tolerances = Tolerances()
    allow_failures: int = 0
    diagnostic_zero_pi: bool = False
    gdsm_A: tuple = ()
    points_per_sample: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; pick one of {KINDS}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must fit in 64 bits")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        n, m, ell = self.dims
        if min(n, m, ell) < 1:
            raise ConfigError("dims must be positive")
        expected_out = {"morse_genericity": 1, "plane_excellent": 2, "space_pinch": 3}
        if self.kind in expected_out and ell != expected_out[self.kind]:
            raise ConfigError(f"kind {self.kind} requires ell = {expected_out[self.kind]}")
        if self.kind in ("morse_genericity", "plane_excellent", "space_pinch"):
            if "F" not in self.map_sources:
                raise ConfigError(f"kind {self.kind} requires a map source named 'F'")
            if not self.box:
                raise ConfigError(f"kind {self.kind} requires a search box")
        if self.kind == "identity_checks" and "F" not in self.map_sources:
            raise ConfigError("identity_checks requires a map source named 'F'")
        if self.kind == "gdsm_cusp" and not self.gdsm_A:
            raise ConfigError("gdsm_cusp requires the coefficient matrix gdsm_A")
        self.programs()  # dimension cross-checks

    def programs(self):
        """Parse and dimension-check the configured maps."""
        n, m, ell = self.dims
        out = {}
        if "F" in self.map_sources:
            F = parse_map(self.map_sources["F"])
            if self.kind != "identity_checks" and (F.n_in, F.n_out) != (m, ell):
                raise ConfigError(f"F must map R^{m} -> R^{ell}, "
                                  f"got R^{F.n_in} -> R^{F.n_out}")
            if self.kind == "identity_checks" and F.n_in != m:
                raise ConfigError(f"F must have {m} inputs")
            out["F"] = F
        if "f" in self.map_sources:
            f = parse_map(self.map_sources["f"])
            if (f.n_in, f.n_out) != (n, m):
                raise ConfigError(f"f must map R^{n} -> R^{m}, "
                                  f"got R^{f.n_in} -> R^{f.n_out}")
            out["f"] = f
        else:
            if n != m:
                raise ConfigError("omitting f requires n == m (identity embedding)")
        return out

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        d = {
            "kind": self.kind,
            "dims": {"n": self.dims[0], "m": self.dims[1], "ell": self.dims[2]},
            "n_samples": self.n_samples,
            "seed": int(self.seed),
            "sigma": self.sigma,
            "maps": dict(self.map_sources),
            "box": [list(b) for b in self.box],
            "grid": self.grid,
            "tolerances": {
                "rank_rel_tol": self.tolerances.rank_rel_tol,
                "newton_step_tol": self.tolerances.newton_step_tol,
                "dedup_radius": self.tolerances.dedup_radius,
            },
            "allow_failures": self.allow_failures,
            "diagnostic_zero_pi": self.diagnostic_zero_pi,
            "points_per_sample": self.points_per_sample,
        }
        if self.gdsm_A:
            d["gdsm"] = {"A": [list(r) for r in self.gdsm_A]}
        return d

    @classmethod
    def from_json_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        try:
            dims = d.get("dims", {})
            tol_over = d.get("tolerances", {})
            tol = Tolerances(
                rank_rel_tol=float(tol_over.get("rank_rel_tol", 1e-8)),
                newton_step_tol=float(tol_over.get("newton_step_tol", 1e-12)),
                dedup_radius=float(tol_over.get("dedup_radius", 1e-6)),
            )
            gdsm = d.get("gdsm", {})
            return cls(
                kind=d["kind"],
                dims=(int(dims["n"]), int(dims["m"]), int(dims["ell"])),
                n_samples=int(d["n_samples"]),
                seed=int(d["seed"]),
                sigma=float(d.get("sigma", 1.0)),
                map_sources=dict(d.get("maps", {})),
                box=tuple(tuple(float(x) for x in b) for b in d.get("box", [])),
                grid=int(d.get("grid", 32)),
                tolerances=tol,
                allow_failures=int(d.get("allow_failures", 0)),
                diagnostic_zero_pi=bool(d.get("diagnostic_zero_pi", False)),
                gdsm_A=tuple(tuple(float(x) for x in r) for r in gdsm.get("A", [])),
                points_per_sample=int(d.get("points_per_sample", 100)),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing required key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(data)

    def hash(self):
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# RNG streams


def sample_rng(seed, index):
    """Independent generator for one sample, keyed by (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=[int(seed), int(index)]))


def sample_perturbation(rng, dims, sigma) -> LinearMap:
    """ell x m matrix with i.i.d. normal(0, sigma^2) entries."""
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    _, m, ell = dims
    return LinearMap(sigma * rng.standard_normal((ell, m)))


# ---------------------------------------------------------------------------
# per-sample runners


def _point_record(sp):
    return {
        "location": [float(x) for x in sp.location],
        "corank": int(sp.corank),
        "tb_symbol": list(sp.tb_symbol.entries),
        "classification": str(sp.classification),
        "margin": float(sp.margin),
    }


def _double_record(dp):
    return {
        "q1": [float(x) for x in dp.q1],
        "q2": [float(x) for x in dp.q2],
        "image": [float(x) for x in dp.image_point],
        "transverse": bool(dp.crossing_transverse),
        "margin": float(dp.crossing_margin),
    }


def _min_margin(points, doubles=()):
    vals = [p["margin"] for p in points] + [d["margin"] for d in doubles]
    return float(min(vals)) if vals else float("inf")


def _compose_sample_map(cfg: ExperimentConfig, programs, alpha: LinearMap) -> MapProgram:
    g = perturb(programs["F"], alpha)
    if "f" in programs:
        g = compose(g, programs["f"])
    return g


def _run_detection_sample(cfg: ExperimentConfig, index):
    programs = cfg.programs()
    rng = sample_rng(cfg.seed, index)
    alpha = (LinearMap.zeros(cfg.dims[2], cfg.dims[1]) if cfg.diagnostic_zero_pi
             else sample_perturbation(rng, cfg.dims, cfg.sigma))
    g = _compose_sample_map(cfg, programs, alpha)
    tol = cfg.tolerances
    points = find_singular_points(g, cfg.box, cfg.grid, tol=tol)
    recs = [_point_record(p) for p in points]
    doubles = []
    reason = None

    if cfg.kind == "morse_genericity":
        bad = [r for r in recs if r["classification"] != str(Classification.MORSE)]
        if bad:
            reason = f"{len(bad)} non-Morse critical point(s)"
    elif cfg.kind == "plane_excellent":
        for p, r in zip(points, recs):
            if r["classification"] not in (str(Classification.FOLD), str(Classification.CUSP)):
                reason = f"point {r['location']} classified {r['classification']} (corank {r['corank']})"
                break
            try:
                ok, marg = check_transverse_corank1(g, p.location, tol)
            except (UnsupportedStratumError, IndeterminateRankError) as exc:
                reason = f"transversality check failed at {r['location']}: {exc}"
                break
            r["transverse_margin"] = float(marg)
            if not ok:
                reason = f"non-transverse corank-1 point at {r['location']}"
                break
    elif cfg.kind == "space_pinch":
        for r in recs:
            if r["classification"] != str(Classification.CROSS_CAP):
                reason = f"point {r['location']} classified {r['classification']}"
                break
        if reason is None:
            dps = find_double_points(g, cfg.box, cfg.grid, tol=tol)
            doubles = [_double_record(d) for d in dps]
            bad = [d for d in doubles if not d["transverse"]]
            if bad:
                reason = f"{len(bad)} tangential double point(s)"
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(f"unsupported detection kind {cfg.kind}")

    return {
        "index": int(index),
        "alpha": [float(x) for x in alpha.matrix.ravel()],
        "points": recs,
        "double_points": doubles,
        "passed": reason is None,
        "failure_reason": reason,
        "min_margin": _min_margin(recs, doubles),
    }


def _draw_gl(rng, ell, min_det=0.1):
    for _ in range(1000):
        L = LinearMap(rng.standard_normal((ell, ell)))
        scale = np.max(np.abs(L.matrix), axis=1)
        if np.all(scale > 0) and abs(np.linalg.det(L.matrix / scale[:, None])) >= min_det:
            return L
    raise RuntimeError("could not draw an invertible matrix")  # pragma: no cover


def _run_identity_sample(cfg: ExperimentConfig, index):
    programs = cfg.programs()
    n, m, ell = cfg.dims
    rng = sample_rng(cfg.seed, index)
    L = _draw_gl(rng, ell)
    alpha = sample_perturbation(rng, cfg.dims, cfg.sigma)
    tol = 1e-9

    _, ap = phi(L, alpha)
    _, back = phi_inv(L, ap)
    err_round = float(np.max(np.abs(back.matrix - alpha.matrix)))
    _, fwd = phi(L, back)
    err_round = max(err_round, float(np.max(np.abs(fwd.matrix - ap.matrix))))

    F = programs["F"]
    f = programs.get("f")
    inner = compose(graph_embedding(F), f) if f is not None else graph_embedding(F)
    lhs = compose(linear_program(pi_lambda_alpha(L, alpha)), inner)
    Fa = perturb(F, alpha)
    rhs = compose(h_lambda(L), compose(Fa, f) if f is not None else Fa)

    if cfg.box:
        lows = np.array([b[0] for b in cfg.box])
        highs = np.array([b[1] for b in cfg.box])
    else:
        lows, highs = -np.ones(n), np.ones(n)
    pts = rng.uniform(lows, highs, size=(cfg.points_per_sample, n))
    va = lhs.eval_batch(pts)
    vb = rhs.eval_batch(pts)
    scale = max(1.0, float(np.max(np.abs(vb))))
    err_comp = float(np.max(np.abs(va - vb)) / scale)

    passed = err_round <= tol and err_comp <= tol
    return {
        "index": int(index),
        "alpha": [float(x) for x in alpha.matrix.ravel()],
        "points": [],
        "double_points": [],
        "passed": bool(passed),
        "failure_reason": None if passed else
            f"round-trip error {err_round:.3e}, identity error {err_comp:.3e}",
        "min_margin": float("inf"),
        "round_trip_error": err_round,
        "identity_error": err_comp,
    }


def _run_gdsm_samples(cfg: ExperimentConfig):
    A = np.asarray(cfg.gdsm_A, dtype=float)
    box = cfg.box if cfg.box else None
    results = cusp_count_experiment(A, cfg.n_samples, cfg.seed, box=box,
                                    grid=cfg.grid, sigma=cfg.sigma,
                                    tol=cfg.tolerances)
    records = []
    for r in results:
        recs = [_point_record(p) for p in r.points]
        doubles = [_double_record(d) for d in r.double_points]
        alpha = psi(A, r.p)
        reason = None
        if not r.passed:
            reason = (f"expected {r.expected}: cusp_count={r.cusp_count}, "
                      f"cross_caps={r.cross_cap_count}, other={r.other_count}, "
                      f"double_transverse={r.double_points_transverse}")
        records.append({
            "index": r.index,
            "alpha": [float(x) for x in alpha.matrix.ravel()],
            "central_point": [float(x) for x in r.p.ravel()],
            "points": recs,
            "double_points": doubles,
            "passed": bool(r.passed),
            "failure_reason": reason,
            "min_margin": _min_margin(recs, doubles),
            "cusp_count": int(r.cusp_count),
        })
    return records


def _sample_worker(args):
    cfg_dict, index = args
    cfg = ExperimentConfig.from_json_dict(cfg_dict)
    if cfg.kind == "identity_checks":
        return _run_identity_sample(cfg, index)
    return _run_detection_sample(cfg, index)


# ---------------------------------------------------------------------------
# embedding validation (heuristic, warn-only)


def _validate_embedding(cfg: ExperimentConfig, programs):
    warnings = []
    f = programs.get("f")
    if f is None or not cfg.box:
        return warnings
    n = f.n_in
    axes = [np.linspace(lo, hi, 9) for lo, hi in cfg.box[:n]]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh]).T
    try:
        J = np.moveaxis(f.jacobian(pts.T), 2, 0)
        svals = np.linalg.svd(J, compute_uv=False)
        if np.any(svals[:, -1] <= 1e-10 * max(1.0, float(np.max(svals)))):
            warnings.append("configured f is not immersive on the sample grid")
        imgs = f.eval_batch(pts)
        d_img = np.linalg.norm(imgs[:, None, :] - imgs[None, :, :], axis=2)
        d_src = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        iu = np.triu_indices(len(pts), k=1)
        ratio = d_img[iu] / np.maximum(d_src[iu], 1e-300)
        if np.any(ratio < 1e-8):
            warnings.append("configured f may not be injective on the sample grid")
    except Exception as exc:  # heuristic only; never blocks the run
        warnings.append(f"embedding validation skipped: {exc}")
    return warnings


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    format_version: str
    config: dict
    config_hash: str
    samples: list
    aggregate: dict
    warnings: list
    wall_time_s: float | None = None  # not serialized; see write_report

    @property
    def failures(self):
        return int(self.aggregate["failures"])

    def to_json_dict(self):
        return {
            "format_version": self.format_version,
            "config": self.config,
            "config_hash": self.config_hash,
            "samples": self.samples,
            "aggregate": self.aggregate,
            "warnings": self.warnings,
        }

    @classmethod
    def from_json_dict(cls, d):
        for key in ("format_version", "config", "config_hash", "samples", "aggregate"):
            if key not in d:
                raise ReportSchemaError(f"report is missing key {key!r}")
        if d["format_version"] != FORMAT_VERSION:
            raise ReportSchemaError(
                f"unsupported report format_version {d['format_version']!r}")
        return cls(format_version=d["format_version"], config=d["config"],
                   config_hash=d["config_hash"], samples=d["samples"],
                   aggregate=d["aggregate"], warnings=d.get("warnings", []))


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Execute all samples of an experiment and aggregate the verdicts.

    Sample records are computed independently on per-sample RNG streams
    and merged in index order, so the report content is identical whether
    the run is serial or parallel.
    """
    t0 = time.perf_counter()
    programs = config.programs()
    warnings = _validate_embedding(config, programs)

    if config.kind == "gdsm_cusp":
        samples = _run_gdsm_samples(config)
    else:
        threads = int(os.environ.get("JETGEN_THREADS", "1") or "1")
        indices = list(range(config.n_samples))
        if threads > 1 and config.n_samples > 1:
            cfg_dict = config.to_json_dict()
            with ProcessPoolExecutor(max_workers=min(threads, config.n_samples)) as pool:
                samples = list(pool.map(_sample_worker,
                                        [(cfg_dict, i) for i in indices],
                                        chunksize=max(1, len(indices) // (4 * threads))))
        else:
            runner = (_run_identity_sample if config.kind == "identity_checks"
                      else _run_detection_sample)
            samples = [runner(config, i) for i in indices]
        samples.sort(key=lambda r: r["index"])

    failures = sum(1 for s in samples if not s["passed"])
    margins = [s["min_margin"] for s in samples if s["min_margin"] != float("inf")]
    aggregate = {
        "n_samples": len(samples),
        "failures": failures,
        "min_margin": (min(margins) if margins else None),
        "wall_time_s": None,
    }
    report = RunReport(
        format_version=FORMAT_VERSION,
        config=config.to_json_dict(),
        config_hash=config.hash(),
        samples=samples,
        aggregate=aggregate,
        warnings=warnings,
        wall_time_s=time.perf_counter() - t0,
    )
    return report


def _csv_float(x):
    return repr(float(x))


def _csv_join(values):
    return ";".join(_csv_float(v) for v in values)


def write_report(report: RunReport, path, fmt):
    """Persist a report as JSON (full nesting) or CSV (one row per point).

    Both formats embed the config hash and format version.  Timing is
    deliberately left out of the serialized bytes so identical (config,
    seed) runs produce identical files.
    """
    if fmt == "json":
        payload = json.dumps(report.to_json_dict(), sort_keys=True, indent=1)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(payload)
                fh.write("\n")
        except OSError as exc:
            raise ReportSchemaError(f"cannot write report to {path}: {exc}") from exc
        return
    if fmt != "csv":
        raise ReportSchemaError(f"unknown report format {fmt!r}")

    buf = io.StringIO()
    buf.write(f"# format_version={report.format_version}\n")
    buf.write(f"# config_hash={report.config_hash}\n")
    buf.write(f"# kind={report.config.get('kind', '')}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in report.samples:
        alpha = _csv_join(s["alpha"])
        passed = "true" if s["passed"] else "false"
        for p in s["points"]:
            writer.writerow([
                s["index"], alpha, _csv_join(p["location"]), p["corank"],
                ";".join(str(e) for e in p["tb_symbol"]),
                p["classification"], _csv_float(p["margin"]), passed,
            ])
        for d in s["double_points"]:
            cls = "double_point_transverse" if d["transverse"] else "double_point_tangential"
            for q in (d["q1"], d["q2"]):
                writer.writerow([
                    s["index"], alpha, _csv_join(q), 0, "", cls,
                    _csv_float(d["margin"]), passed,
                ])
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ReportSchemaError(f"cannot write report to {path}: {exc}") from exc


def read_report(path) -> RunReport:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ReportSchemaError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(f"report {path} is not valid JSON: {exc}") from exc
    return RunReport.from_json_dict(data)


def summarize(path):
    """Human-readable digest of a JSON report; returns (text, failures)."""
    report = read_report(path)
    agg = report.aggregate
    lines = [
        f"kind:        {report.config.get('kind')}",
        f"config hash: {report.config_hash[:16]}...",
        f"samples:     {agg['n_samples']}",
        f"failures:    {agg['failures']}",
        f"min margin:  {agg['min_margin'] if agg['min_margin'] is not None else 'n/a'}",
    ]
    for s in report.samples:
        if not s["passed"]:
            lines.append(f"  sample {s['index']}: {s['failure_reason']}")
    if report.warnings:
        lines.append("warnings:")
        lines.extend(f"  - {w}" for w in report.warnings)
    return "\n".join(lines), report.failures
