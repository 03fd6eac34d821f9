"""Energy integrals with Richardson error estimates and the Gauss-Bonnet ledger."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffgeo import fundamental_forms
from .quadrature import QuadratureGrid, build_grid
from .surface import Immersion

ENERGY_KEYS = ("area", "willmore", "total_sff", "total_gauss", "total_traceless")

DENSITIES = {
    "area": lambda ff: np.ones_like(ff.K),
    "willmore": lambda ff: 0.25 * ff.normsq["H"],
    "total_sff": lambda ff: ff.normsq["A"],
    "total_gauss": lambda ff: ff.K,
    "total_traceless": lambda ff: ff.normsq["A0"],
}

EPS = np.finfo(float).eps


def default_resolution(f: Immersion) -> tuple:
    """Resolution at which catalog surfaces meet their reference tolerances."""
    d = f.domain
    if d.kind == "periodic-strip" and 0 not in d.periodic_axes:
        lo, hi = d.bounds[0]
        n = int(math.ceil((hi - lo) * 12 / 2.0)) * 2
        return (max(n, 64), 64)
    if d.kind == "periodic-strip":
        return (64, 64)
    return (128, 128)


def grid_for(f: Immersion, resolution=None) -> QuadratureGrid:
    return build_grid(f.domain, resolution or default_resolution(f))


@dataclass(frozen=True)
class Integral:
    value: float
    error: float
    tail: float = 0.0

    @property
    def bound(self) -> float:
        return self.error + self.tail


def _sums(f: Immersion, grid: QuadratureGrid, densities: dict) -> tuple:
    """Quadrature sums and absolute sums for each density."""
    terms = {k: [] for k in densities}
    for patch in grid.patches:
        jet = patch.jets(f)
        if not jet.is_finite():
            raise FloatingPointError("non-finite jet on the grid")
        ff = fundamental_forms(jet)
        dmu = ff.area_element * patch.weights
        for k, dens in densities.items():
            val = dens(ff)
            if not np.all(np.isfinite(val)):
                raise FloatingPointError(f"non-finite {k} density at a node")
            terms[k].append(val * dmu)
    out = {}
    for k, parts in terms.items():
        t = np.concatenate(parts)
        out[k] = (float(np.sum(t)), float(np.sum(np.abs(t))))
    return out


# |I_h - I_{h/2}| estimates the error of I_{h/2}; the factor covers I_h itself
RICHARDSON_SAFETY = 2.0


def _floor(abs_sum: float, n: int) -> float:
    return 16 * EPS * math.sqrt(max(n, 1)) * abs_sum + 1e-300


def integrate(f: Immersion, density, grid: QuadratureGrid) -> Integral:
    """Integrate a pointwise function of :class:`FundForms` against dmu.

    The value comes from ``grid``; the error estimate is twice the difference
    to the half-step grid plus a rounding floor.
    """
    coarse = _sums(f, grid, {"x": density})["x"]
    fine = _sums(f, grid.refine(), {"x": density})["x"]
    err = RICHARDSON_SAFETY * abs(coarse[0] - fine[0]) + _floor(coarse[1], grid.size)
    return Integral(coarse[0], err, 0.0)


def _rho_solve(rhos, values) -> tuple:
    """Extrapolate I(rho) = I0 + rho^2 (a + b log rho + c log^2 rho) to rho = 0.

    The logarithms cover ends with logarithmic growth, whose inversions are
    only C^{1,alpha} at the image point.  Returns (I0, uncertainty), the
    uncertainty being the change against the fit without the top log term.
    """
    r = np.asarray(rhos, dtype=float)
    v = np.asarray(values, dtype=float)
    L = np.log(r)
    M = np.stack([np.ones_like(r), r ** 2, r ** 2 * L, r ** 2 * L ** 2], axis=1)
    full = np.linalg.solve(M, v)[0]
    short = np.linalg.solve(M[1:, :3], v[1:])[0]
    return float(full), float(abs(full - short))


RHO_FACTORS = (1.0, 0.5, 0.25, 0.125)


@dataclass(frozen=True)
class EnergyReport:
    area: float
    willmore: float
    total_sff: float
    total_gauss: float
    total_traceless: float
    error_estimates: dict
    truncation_tail: dict
    identities: dict = field(default_factory=dict)
    grid: str = ""
    surface: dict = field(default_factory=dict)

    def value(self, key: str) -> float:
        return float(getattr(self, key))

    def bound(self, key: str) -> float:
        return self.error_estimates[key] + self.truncation_tail[key]

    def to_json(self) -> dict:
        def clean(x):
            return None if not math.isfinite(x) else float(x)
        return {
            "area": self.area,
            "willmore": self.willmore,
            "total_sff": self.total_sff,
            "total_gauss": self.total_gauss,
            "total_traceless": self.total_traceless,
            "error_estimates": {k: clean(v) for k, v in self.error_estimates.items()},
            "truncation_tail": {k: clean(v) for k, v in self.truncation_tail.items()},
            "identities": self.identities,
            "grid": self.grid,
            "surface": self.surface,
        }


def _has_finite_punctures(f: Immersion) -> bool:
    return any(not p.is_end for p in f.domain.punctures)


def energy_report(f: Immersion, grid: QuadratureGrid | None = None,
                  rho_extrapolate: bool = True) -> EnergyReport:
    """All five energy integrals with error estimates and identity checks.

    Finite-area points removed by exclusion discs are restored by
    extrapolation in the exclusion radius (rho, rho/2, rho/4, rho/8).
    """
    grid = grid or grid_for(f)
    coarse = _sums(f, grid, DENSITIES)
    fine = _sums(f, grid.refine(), DENSITIES)
    values = {k: coarse[k][0] for k in ENERGY_KEYS}
    errors = {k: RICHARDSON_SAFETY * abs(coarse[k][0] - fine[k][0]) + _floor(coarse[k][1], grid.size) for k in ENERGY_KEYS}
    tails = {k: float(f.tails.get(k, 0.0)) for k in ENERGY_KEYS}
    if rho_extrapolate and _has_finite_punctures(f):
        rho0 = min(p.rho for p in f.domain.punctures if not p.is_end)
        rhos = [rho0 * q for q in RHO_FACTORS]
        fine_grid = grid.refine()
        runs = [coarse] + [_sums(f, grid.with_domain(f.domain.with_rho(q)), DENSITIES) for q in RHO_FACTORS[1:]]
        fine_runs = [fine] + [_sums(f, fine_grid.with_domain(f.domain.with_rho(q)), DENSITIES)
                              for q in RHO_FACTORS[1:]]
        for k in ENERGY_KEYS:
            v0, unc = _rho_solve(rhos, [run[k][0] for run in runs])
            v1, _ = _rho_solve(rhos, [run[k][0] for run in fine_runs])
            values[k] = v0
            # the smaller discs are resolved less well, so the grid error is
            # estimated on the extrapolated values themselves
            errors[k] = max(errors[k], RICHARDSON_SAFETY * abs(v0 - v1) + _floor(coarse[k][1], grid.size))
            # same reasoning as for the grid: the order drop estimates the lower-order fit
            tails[k] += RICHARDSON_SAFETY * unc
    for k in ("willmore", "total_sff", "total_traceless"):
        # these densities are nonnegative; clamp rounding-level negatives
        if values[k] < 0 and -values[k] <= errors[k] + tails[k]:
            values[k] = 0.0
    w, a, kk, t = values["willmore"], values["total_sff"], values["total_gauss"], values["total_traceless"]
    tol1 = errors["willmore"] + 0.25 * errors["total_sff"] + 0.5 * errors["total_gauss"]
    tol2 = errors["total_traceless"] + errors["total_sff"] + 2 * errors["willmore"]
    identities = {
        "willmore_vs_sff_gauss": {"residual": w - (0.25 * a + 0.5 * kk), "tolerance": tol1,
                                  "ok": bool(abs(w - (0.25 * a + 0.5 * kk)) <= tol1 + 1e-12 * (1 + abs(a)))},
        "traceless_vs_sff_willmore": {"residual": t - (a - 2 * w), "tolerance": tol2,
                                      "ok": bool(abs(t - (a - 2 * w)) <= tol2 + 1e-12 * (1 + abs(a)))},
    }
    return EnergyReport(values["area"], w, a, kk, t, errors, tails, identities, grid.tag, dict(f.label))


# ---------------------------------------------------------------------------
# Gauss-Bonnet ledger


def predicted_total_curvature(f: Immersion) -> float:
    """2 pi (chi_open - sum over ends (k + 1) + sum over branch points m)."""
    ends = sum(m.order + 1 for m in f.marked_points if m.kind == "end")
    branch = sum(m.order for m in f.marked_points if m.kind == "branch")
    return 2 * math.pi * (f.punctured_euler_char - ends + branch)


@dataclass(frozen=True)
class LedgerRecord:
    surface: dict
    predicted: float
    measured: float
    tolerance: float
    agrees: bool
    quantum: float
    quantized: bool
    chi_open: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def gauss_bonnet_ledger(f: Immersion, grid: QuadratureGrid | None = None,
                        report: EnergyReport | None = None) -> LedgerRecord:
    """Compare the Gauss-Bonnet prediction with quadrature of K.

    The quantisation check uses 4 pi Z in R^3 and 2 pi Z otherwise.
    """
    pred = predicted_total_curvature(f)
    rep = report or energy_report(f, grid)
    meas = rep.total_gauss
    tol = rep.bound("total_gauss") + 1e-9 * max(1.0, abs(meas))
    quantum = 4 * math.pi if f.ambient_dim == 3 else 2 * math.pi
    nearest = quantum * round(meas / quantum)
    quantized = abs(meas - nearest) <= tol and abs(pred / quantum - round(pred / quantum)) < 1e-12
    return LedgerRecord(dict(f.label), pred, meas, tol, bool(abs(pred - meas) <= tol), quantum,
                        bool(quantized), f.punctured_euler_char)
