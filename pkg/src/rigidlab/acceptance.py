"""Acceptance suite shared by ``rigidlab verify-all`` and the test suite.

Each criterion returns a :class:`CriterionResult` whose ``details`` are
deterministic for a fixed seed; wall-clock runtimes are kept apart so that
artifacts written from ``details`` are byte-reproducible.
"""
from __future__ import annotations

import filecmp
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffgeo import branch_order_estimate
from .functionals import energy_report, gauss_bonnet_ledger, grid_for
from .moebius import MoebiusTransform, inversion_ledger, pushforward, safe_inversion_center
from .oracle_mesh import angle_defect_report, mesh_from_immersion
from .quadrature import build_grid
from .rigidity import SearchConfig, perturbation_sweep
from .sobolev import inversion_comparability, weighted_distance, weighted_norm
from .surface import CATALOG, make_catalog_surface, perturbed_sphere, sphere

PI = math.pi


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict
    runtime: float = 0.0
    skipped: bool = False
    artifacts: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")

    def line(self) -> str:
        return f"[{self.status}] criterion {self.number}: {self.title}"

    def to_json(self) -> dict:
        return {"number": self.number, "title": self.title, "status": self.status, "details": self.details}


def _close(value: float, target: float, tol: float) -> dict:
    return {"value": value, "target": target, "tolerance": tol, "ok": bool(abs(value - target) <= tol)}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def criterion_1(seed: int = 0) -> CriterionResult:
    def work():
        return energy_report(sphere(1.0), build_grid(sphere(1.0).domain, (256, 256)))
    rep, dt = _timed(work)
    targets = {"willmore": 4 * PI, "total_sff": 8 * PI, "total_gauss": 4 * PI, "total_traceless": 0.0}
    checks = {k: _close(rep.value(k), t, 1e-6 * max(abs(t), 1.0)) for k, t in targets.items()}
    ok = all(c["ok"] for c in checks.values()) and dt < 5.0
    return CriterionResult(1, "round sphere energies at 256x256", ok,
                           {"checks": checks, "runtime_under_5s": dt < 5.0}, dt)


def criterion_2(seed: int = 0) -> CriterionResult:
    cases = {
        "catenoid": (8 * PI, -4 * PI, 1e-3),
        "enneper": (8 * PI, -4 * PI, 1e-3),
        "chen_graph": (4 * PI, -2 * PI, 1e-2),
    }
    t0 = time.perf_counter()
    out, ok = {}, True
    for name, (sff, gauss, tol) in cases.items():
        rep = energy_report(make_catalog_surface(name))
        c = {"total_sff": _close(rep.total_sff, sff, tol), "total_gauss": _close(rep.total_gauss, gauss, tol)}
        for k in c:
            # the certified bound (quadrature error plus analytic tail) must fit the band
            c[k]["certified_bound"] = rep.bound(k)
            c[k]["ok"] = bool(c[k]["ok"] and rep.bound(k) <= tol)
        out[name] = c
        ok &= all(v["ok"] for v in c.values())
    return CriterionResult(2, "catenoid, Enneper and Chen graph totals with certified tails", ok, out,
                           time.perf_counter() - t0)


def criterion_3(seed: int = 0, n_centers: int = 3) -> CriterionResult:
    rng = np.random.default_rng(seed)
    out, ok, total = {}, True, 0.0
    for name in ("catenoid", "enneper", "chen_graph"):
        t0 = time.perf_counter()
        f = make_catalog_surface(name)
        base = energy_report(f)
        rows = []
        for _ in range(n_centers):
            x0 = safe_inversion_center(f, rng=rng).center
            led = inversion_ledger(f, x0, base_report=base)
            within = {k: bool(v <= 0.01) for k, v in led.relative_error.items()}
            rows.append({"center": led.center, "bracket": led.bracket, "predicted": led.predicted,
                         "measured": led.measured, "relative_error": led.relative_error, "within_1pct": within})
            ok &= all(within.values())
        dt = time.perf_counter() - t0
        total += dt
        ok &= dt < 60.0
        out[name] = {"centers": rows, "runtime_under_60s": dt < 60.0}
    return CriterionResult(3, "inversion ledger at random safe centres", ok, out, total)


def criterion_4(seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    out, ok = {}, True
    for name in CATALOG:
        rec = gauss_bonnet_ledger(make_catalog_surface(name))
        out[name] = {"predicted": rec.predicted, "measured": rec.measured, "tolerance": rec.tolerance,
                     "agrees": rec.agrees, "quantum": rec.quantum, "quantized": rec.quantized}
        ok &= rec.agrees and rec.quantized
    return CriterionResult(4, "Gauss-Bonnet ledger and quantisation over the catalog", ok, out,
                           time.perf_counter() - t0)


def criterion_5(seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    expected = {"inverted_enneper": 2, "inverted_chen_graph": 1, "inverted_catenoid": 0}
    out, ok = {}, True
    for name, m in expected.items():
        f = make_catalog_surface(name)
        rows = []
        for p in f.marked_points:
            if p.kind not in ("branch", "multiplicity-point-preimage"):
                continue
            try:
                est = branch_order_estimate(f, p)
                good = est.order == m and est.residual < 0.05
                rows.append({"location": str(p.location), "order": est.order, "slope": est.slope,
                             "residual": est.residual, "ok": bool(good)})
            except ValueError as exc:
                good = False
                rows.append({"location": str(p.location), "error": str(exc), "ok": False})
            ok &= good
        ok &= bool(rows)
        out[name] = {"expected": m, "points": rows}
    return CriterionResult(5, "branch-order detection", ok, out, time.perf_counter() - t0)


def criterion_6(seed: int = 0) -> CriterionResult:
    rep, dt = _timed(lambda: energy_report(make_catalog_surface("clifford_torus")))
    c = _close(rep.willmore, 2 * PI ** 2, 1e-4)
    return CriterionResult(6, "Clifford torus Willmore energy", c["ok"], {"willmore": c}, dt)


def _random_similarity(rng, n=3) -> MoebiusTransform:
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return MoebiusTransform(Q, float(rng.uniform(0.5, 2.0)), rng.normal(size=n))


def _random_member(rng):
    l = int(rng.integers(2, 4))
    m = int(rng.integers(-l, l + 1))
    return perturbed_sphere(float(rng.uniform(-0.2, 0.2)), l, m)


def criterion_7(seed: int = 0, n_triples: int = 100) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    f = perturbed_sphere(0.1, 2, 0)
    g = perturbed_sphere(0.05, 3, 1)
    grid = build_grid(f.domain, (64, 64))
    n0 = weighted_norm(f, grid).value
    n1 = weighted_norm(pushforward(f, MoebiusTransform.dilation(3.0, 3)), grid).value
    dil = abs(n1 - n0) / n0
    S = _random_similarity(rng)
    d0 = weighted_distance(f, g, grid).value
    d1 = weighted_distance(pushforward(f, S), pushforward(g, S), grid).value
    sim = abs(d1 - d0) / d0
    # triangle inequality with one fixed weight source
    tgrid = build_grid(f.domain, (32, 32))
    src = sphere(1.0)
    worst = -math.inf
    for _ in range(n_triples):
        a, b, c = (_random_member(rng) for _ in range(3))
        ab = weighted_distance(a, b, tgrid, src).value
        bc = weighted_distance(b, c, tgrid, src).value
        ac = weighted_distance(a, c, tgrid, src).value
        worst = max(worst, ac - ab - bc)
    comp = []
    for eps in (0.01, 0.02, 0.05, 0.1):
        rec = inversion_comparability(perturbed_sphere(eps), sphere(1.0), (0.0, 0.0, 3.0), grid)
        comp.append({"epsilon": eps, "ratio": rec.ratio, "in_band": rec.in_band})
    ok = dil <= 1e-10 and sim <= 1e-10 and worst <= 1e-9 and all(r["in_band"] for r in comp)
    details = {
        "dilation_invariance": {"relative_change": dil, "ok": dil <= 1e-10},
        "similarity_invariance": {"relative_change": sim, "ok": sim <= 1e-10},
        "triangle_inequality": {"triples": n_triples, "max_violation": worst, "ok": worst <= 1e-9},
        "comparability": comp,
    }
    return CriterionResult(7, "weighted Sobolev suite", bool(ok), details, time.perf_counter() - t0)


def criterion_8(seed: int = 0, workers: int | None = None) -> CriterionResult:
    cfg = SearchConfig(seed=seed)
    out, ok, total, arts = {}, True, 0.0, {}
    sweeps = {
        "round-sphere": ({"family": "round-sphere", "l": 2, "m": 0}, [0.005, 0.01, 0.02, 0.05]),
        "inverted-catenoid": ({"family": "inverted-catenoid"}, [0.0, 0.01, 0.02, 0.05, 0.1]),
    }
    for label, (fam, eps) in sweeps.items():
        res, dt = _timed(lambda: perturbation_sweep(fam, eps, (128, 128), cfg, workers))
        total += dt
        rows = [r for r in res.rows if r.epsilon > 0]
        by_delta = sorted(rows, key=lambda r: r.delta)
        decreasing = all(b.distance > a.distance for a, b in zip(by_delta, by_delta[1:]))
        conv = all(r.converged for r in res.rows)
        entry = {"fit": res.fit.to_json(), "spearman": res.fit.spearman, "strictly_monotone": decreasing,
                 "all_converged": conv, "runtime_under_10min": dt < 600.0}
        good = decreasing and res.fit.spearman == 1.0 and conv and dt < 600.0
        if label == "round-sphere":
            good &= 0.35 <= res.fit.exponent <= 0.65
        else:
            base = [r for r in res.rows if r.epsilon == 0]
            floor = 10 * cfg.tol
            entry["baseline_distance"] = base[0].distance if base else None
            good &= bool(base) and base[0].distance < floor
        entry["ok"] = bool(good)
        ok &= good
        out[label] = entry
        arts[label] = res
    return CriterionResult(8, "rigidity sweeps", bool(ok), out, total, artifacts=arts)


def criterion_9(seed: int = 0, resolution: int = 256) -> CriterionResult:
    t0 = time.perf_counter()
    out, ok = {}, True
    for name in CATALOG:
        f = make_catalog_surface(name)
        rep = angle_defect_report(mesh_from_immersion(f, resolution))
        quad = energy_report(f, grid_for(f)).total_gauss
        rel = abs(rep.total_curvature - quad) / max(abs(quad), 2 * PI)
        good = rel <= 0.01 and abs(rep.gauss_bonnet_residual) <= 1e-9
        out[name] = {"angle_defect": rep.total_curvature, "quadrature": quad, "relative": rel,
                     "gauss_bonnet_residual": rep.gauss_bonnet_residual, "ok": bool(good)}
        ok &= good
    return CriterionResult(9, "mesh oracle cross-check", bool(ok), out, time.perf_counter() - t0)


def compare_artifacts(dir_a, dir_b) -> CriterionResult:
    """Criterion 10: two verify-all runs produced byte-identical artifacts."""
    a, b = Path(dir_a), Path(dir_b)
    names_a = sorted(p.relative_to(a).as_posix() for p in a.rglob("*") if p.is_file())
    names_b = sorted(p.relative_to(b).as_posix() for p in b.rglob("*") if p.is_file())
    differ = [n for n in names_a if n in names_b and not filecmp.cmp(a / n, b / n, shallow=False)]
    missing = sorted(set(names_a) ^ set(names_b))
    ok = bool(names_a) and not differ and not missing
    return CriterionResult(10, "determinism of verify-all artifacts", ok,
                           {"files": len(names_a), "differing": differ, "unmatched": missing})


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9)


def run_criteria(seed: int = 0, workers: int | None = None, only=None) -> list:
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__.split("_")[1])
        if only and num not in only:
            continue
        kwargs = {"seed": seed}
        if num == 8:
            kwargs["workers"] = workers
        results.append(fn(**kwargs))
    return results
