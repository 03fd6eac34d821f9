"""Alignment of immersions to rigidity model families and perturbation sweeps.

The similarity part of the conformal group is solved in closed form: with
the weight taken from the first argument, ``d(A, t + lam Q M)`` is a
weighted Procrustes problem in (t, lam, Q).  Derivative-free Nelder-Mead
handles the remaining directions (chart reparameterisations and the
non-similarity part of the Moebius group), started from a point-correspondence
fit on the light cone.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.stats import spearmanr

from .diffgeo import branch_order_estimate, conformality_defect
from .functionals import energy_report
from .jets import Jet2, holomorphic_pullback
from .moebius import (MoebiusTransform, compose_chain, fit_moebius, inverse, push_jet_chain,
                      pushforward)
from .quadrature import QuadratureGrid, build_grid
from .sobolev import WeightedDistance, weighted_distance
from .surface import (CYL_MINUS, CYL_PLUS, INF, Immersion, catenoid, make_catalog_surface,
                      perturbed_catenoid, perturbed_sphere, sphere, to_complex, to_points)

BASE_LEVELS = {
    "round_sphere": 8 * math.pi,
    "inverted_catenoid": 24 * math.pi,
    "inverted_enneper": 32 * math.pi,
    "inverted_chen": 20 * math.pi,
}

# chart-reparameterisation directions searched per family; the catenoid's
# theta rotation is a symmetry of the model and is absorbed by the rotation
PHI_DIMS = {"inverted_catenoid": 1, "inverted_enneper": 2, "inverted_chen": 2}


# ---------------------------------------------------------------------------
# reparameterisations


@dataclass(frozen=True)
class Reparameterization:
    """A conformal self-map of the parameter domain.

    ``sphere-moebius``: z -> (a z + b)/(c z + d) on the stereographic chart,
    params (a, b, c, d) complex with ad - bc = 1.  ``cylinder-shift``:
    (v, theta) -> (v + v0, theta + theta0) on a cylinder chart, i.e.
    z -> exp(v0 + i theta0) z on the plane chart; params (v0, theta0).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "sphere-moebius":
            a, b, c, d = (complex(p) for p in self.params)
            if abs(a * d - b * c - 1) > 1e-12:
                raise ValueError("sphere-moebius parameters need ad - bc = 1")
            object.__setattr__(self, "params", (a, b, c, d))
        elif self.kind == "cylinder-shift":
            v0, t0 = (float(p) for p in self.params)
            if not (math.isfinite(v0) and math.isfinite(t0)):
                raise ValueError("cylinder shifts are finite")
            object.__setattr__(self, "params", (v0, t0))
        else:
            raise ValueError(f"unknown reparameterization kind {self.kind!r}")

    @staticmethod
    def identity(kind: str = "sphere-moebius") -> "Reparameterization":
        return Reparameterization(kind, (1, 0, 0, 1) if kind == "sphere-moebius" else (0.0, 0.0))

    @staticmethod
    def from_matrix(M: np.ndarray) -> "Reparameterization":
        M = np.asarray(M, dtype=complex)
        M = M / np.sqrt(np.linalg.det(M))
        return Reparameterization("sphere-moebius", tuple(M.reshape(-1)))

    def matrix(self) -> np.ndarray:
        return np.array(self.params, dtype=complex).reshape(2, 2)

    def map(self, z: np.ndarray, strip: bool = False):
        """Image, first and second complex derivative at chart points ``z``."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "cylinder-shift":
            s = complex(self.params[0], self.params[1])
            if strip:
                return z + s, np.ones_like(z), np.zeros_like(z)
            e = np.exp(s)
            return e * z, np.full_like(z, e), np.zeros_like(z)
        if strip:
            raise ValueError("sphere-moebius maps act on the plane chart")
        a, b, c, d = self.params
        q = c * z + d
        return (a * z + b) / q, 1.0 / q ** 2, -2.0 * c / q ** 3

    def inverse_point(self, loc):
        """Preimage of a marked-point location."""
        if self.kind == "cylinder-shift":
            if loc in (INF, CYL_MINUS, CYL_PLUS) or loc == 0:
                return loc
            return complex(loc) * np.exp(-complex(*self.params))
        a, b, c, d = self.params
        if loc == INF:
            return INF if c == 0 else -d / c
        w = complex(loc)
        den = -c * w + a
        return INF if den == 0 else (d * w - b) / den

    def to_json(self) -> dict:
        if self.kind == "sphere-moebius":
            return {"kind": self.kind, "params": [[p.real, p.imag] for p in self.params]}
        return {"kind": self.kind, "params": list(self.params)}


def reparameterize(f: Immersion, phi: Reparameterization) -> Immersion:
    """The immersion f o phi on the same parameter domain.

    Exclusion discs are kept in place; marked points move to their preimages.
    """
    strip = f.domain.kind == "periodic-strip"
    if strip and phi.kind != "cylinder-shift":
        raise ValueError("only cylinder shifts act on strip domains")
    base = f.evaluator

    def ev(pts):
        z = to_complex(np.asarray(pts, dtype=float))
        w, dw, d2w = phi.map(z, strip)
        return holomorphic_pullback(base(to_points(w)), dw, d2w)

    marks = tuple(replace(m, location=phi.inverse_point(m.location)) for m in f.marked_points)
    label = {"surface": f"reparam({f.name})", "params": {"base": f.label, "phi": phi.to_json()}}
    return replace(f, evaluator=ev, marked_points=marks, label=label)


# ---------------------------------------------------------------------------
# weighted Procrustes on jets


@dataclass
class _Batch:
    """Flat jets of one immersion on the masked nodes of a grid."""

    P: np.ndarray
    D1: np.ndarray
    D2: np.ndarray

    @staticmethod
    def of(f: Immersion, grid: QuadratureGrid, masks) -> "_Batch":
        js = [p.jets(f).flat()[m] for p, m in zip(grid.patches, masks)]
        j = Jet2.concatenate(js)
        if not j.is_finite():
            raise FloatingPointError("non-finite jet on the alignment grid")
        return _Batch(j.position, j.d1, j.d2)

    @staticmethod
    def of_jet(j: Jet2) -> "_Batch":
        return _Batch(j.position, j.d1, j.d2)

    def weight(self) -> np.ndarray:
        g11 = np.einsum("mn,mn->m", self.D1[:, 0], self.D1[:, 0])
        g12 = np.einsum("mn,mn->m", self.D1[:, 0], self.D1[:, 1])
        g22 = np.einsum("mn,mn->m", self.D1[:, 1], self.D1[:, 1])
        det = g11 * g22 - g12 * g12
        if not np.all(det > 0):
            raise FloatingPointError("degenerate metric on the alignment grid")
        return 1.0 / np.sqrt(det)


def _masks(grid: QuadratureGrid):
    return [~grid.domain.excluded(p.native_complex()) for p in grid.patches]


def _quad_weights(grid: QuadratureGrid, masks) -> np.ndarray:
    return np.concatenate([p.weights[m] for p, m in zip(grid.patches, masks)])


def _stack(B: _Batch, P: np.ndarray, sw: np.ndarray) -> np.ndarray:
    """Rows of the jet components scaled so that the Euclidean product is the weighted one."""
    return np.concatenate([sw[:, None] * P, sw[:, None] * B.D1[:, 0], sw[:, None] * B.D1[:, 1],
                           sw[:, None] * B.D2[:, 0], (math.sqrt(2.0) * sw)[:, None] * B.D2[:, 1],
                           sw[:, None] * B.D2[:, 2]])


def _procrustes(A: _Batch, M: _Batch, w: np.ndarray):
    """Similarity (t, lam, Q) minimising ||A - t - lam Q M||^2 in the weighted jet norm.

    ``w`` already contains the quadrature weights and e^{-2u} of ``A``.
    Translations only see the positions, so they drop out after centring.
    Returns (t, lam, Q, squared distance).
    """
    W0 = w.sum()
    ma = (w @ A.P) / W0
    mm = (w @ M.P) / W0
    sw = np.sqrt(w)
    FA = _stack(A, A.P - ma, sw)
    FM = _stack(M, M.P - mm, sw)
    U, s, Vt = np.linalg.svd(FA.T @ FM)
    Q = U @ Vt
    lam = float(s.sum() / np.einsum("ij,ij->", FM, FM))
    t = ma - lam * Q @ mm
    R = FA - lam * FM @ Q.T
    return t, lam, Q, max(float(np.einsum("ij,ij->", R, R)), 0.0)


# ---------------------------------------------------------------------------
# results and configuration


@dataclass(frozen=True)
class SearchConfig:
    """Optimizer settings; ``tol`` is the target accuracy of the distance."""

    max_iter: int = 4000
    tol: float = 1e-7
    restarts: int = 5
    seed: int = 0
    coarse_resolution: int = 32
    polish_resolution: int = 64
    scan_v: tuple = (-2.0, 2.0, 17)
    scan_theta: int = 16

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["scan_v"] = list(self.scan_v)
        return d


@dataclass(frozen=True)
class AlignmentResult:
    transform: MoebiusTransform
    reparam: Reparameterization
    distance: WeightedDistance
    delta: float
    delta_error: float
    model: str
    iterations: int
    evaluations: int
    converged: bool
    objective_distance: float

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "transform": self.transform.to_json(),
            "reparam": self.reparam.to_json(),
            "distance": self.distance.to_json(),
            "delta": self.delta,
            "delta_error": self.delta_error,
            "optimizer": {"iterations": self.iterations, "evaluations": self.evaluations,
                          "converged": self.converged, "objective_distance": self.objective_distance},
        }


def _polish_grid(f: Immersion, grid: QuadratureGrid, cfg: SearchConfig) -> QuadratureGrid:
    # the distance is stationary at the optimum, so optimising on a moderate
    # grid and measuring on the requested one costs only second-order accuracy
    res = tuple(min(r, cfg.polish_resolution) for r in grid.resolution)
    return grid if res == tuple(grid.resolution) else build_grid(f.domain, res)


def _nelder_mead(fun, x0, scale, cfg: SearchConfig, rng: np.random.Generator):
    """Nelder-Mead with restarts from a fresh simplex around the incumbent.

    Minimises a squared distance, so the absolute function tolerance is the
    square of the distance tolerance.  Returns (x, f, iterations, evals, ok).
    """
    x = np.asarray(x0, dtype=float)
    k = x.size
    best = float(fun(x))
    nit = nfev = 0
    if best <= (1e-2 * cfg.tol) ** 2:
        # already at the global floor of a squared distance
        return x, best, 0, 1, True
    ok = False
    scale = np.asarray(scale, dtype=float) * np.ones(k)
    for r in range(max(cfg.restarts, 1)):
        s = scale * (0.5 ** r) * rng.uniform(0.7, 1.3, size=k)
        simplex = np.vstack([x] + [x + s[i] * np.eye(k)[i] for i in range(k)])
        res = minimize(fun, x, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": cfg.tol,
                                "fatol": cfg.tol ** 2, "maxiter": cfg.max_iter,
                                "maxfev": 2 * cfg.max_iter, "adaptive": k > 4})
        nit += int(res.nit)
        nfev += int(res.nfev)
        improved = best - float(res.fun)
        if float(res.fun) <= best:
            x, best = np.asarray(res.x, dtype=float), float(res.fun)
        ok = bool(res.success)
        if r > 0 and improved <= cfg.tol ** 2 and ok:
            break
    return x, best, nit, nfev, ok


# ---------------------------------------------------------------------------
# nearest round sphere


def _sl2_from_params(p: np.ndarray) -> np.ndarray:
    X = np.array([[p[0] + 1j * p[1], p[2] + 1j * p[3]], [p[4] + 1j * p[5], -p[0] - 1j * p[1]]])
    return expm(X)


def _three_point(z, w) -> np.ndarray:
    """SL(2, C) matrix of the Moebius map with z_k -> w_k (k = 0, 1, 2)."""
    def to_std(p):
        # p0 -> 0, p1 -> 1, p2 -> infinity
        a, b, c = p
        return np.array([[(b - c), -a * (b - c)], [(b - a), -c * (b - a)]], dtype=complex)
    M = np.linalg.inv(to_std(w)) @ to_std(z)
    return M / np.sqrt(np.linalg.det(M))


def _sphere_fit(pts: np.ndarray):
    """Algebraic least-squares sphere |x - c|^2 = r^2."""
    A = np.hstack([2 * pts, np.ones((len(pts), 1))])
    sol, *_ = np.linalg.lstsq(A, np.einsum("mn,mn->m", pts, pts), rcond=None)
    c = sol[:-1]
    return c, math.sqrt(max(sol[-1] + c @ c, 1e-300))


def _inv_stereo(x: np.ndarray) -> np.ndarray:
    return (x[..., 0] + 1j * x[..., 1]) / (1.0 - x[..., 2])


def nearest_round_sphere(f: Immersion, grid: QuadratureGrid | None = None,
                         config: SearchConfig | None = None, max_defect: float = 0.5) -> AlignmentResult:
    """Closest round sphere c + r Q S(phi) in the W^{2,2}_u distance (u from ``f``)."""
    cfg = config or SearchConfig()
    if f.domain.kind != "punctured-plane" or f.euler_char != 2 or f.ambient_dim != 3 or f.ends:
        raise ValueError("nearest_round_sphere needs a sphere-type immersion into R^3")
    grid = grid or build_grid(f.domain, (128, 128))
    coarse = build_grid(f.domain, (cfg.coarse_resolution, cfg.coarse_resolution))
    probe = coarse.patches[0].jets(f)
    defect = float(np.max(conformality_defect(probe)))
    if defect > max_defect:
        raise ValueError(f"conformality defect {defect:.3f} above {max_defect}")
    unit = sphere(1.0)

    def setup(g):
        masks = _masks(g)
        A = _Batch.of(f, g, masks)
        w = _quad_weights(g, masks) * A.weight()
        return g, masks, A, w

    # initial phi: sphere fit, then the Moebius map matching three chart points
    pts = np.concatenate([p.jets(f).flat().position for p in coarse.patches])
    c, r = _sphere_fit(pts)
    z3 = np.array([0.0, 1.0, -1.0], dtype=complex)
    img = f.jet(to_points(z3)).position
    w3 = _inv_stereo((img - c) / np.linalg.norm(img - c, axis=1)[:, None])
    cands = [np.eye(2, dtype=complex)]
    try:
        cands.append(_three_point(z3, w3))
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError):  # pragma: no cover
        pass

    def make_obj(state, M0):
        g, masks, A, w = state

        def obj(p):
            phi = Reparameterization.from_matrix(M0 @ _sl2_from_params(p))
            model = _Batch.of(reparameterize(unit, phi), g, masks)
            return _procrustes(A, model, w)[3]
        return obj

    rng = np.random.default_rng(cfg.seed)
    cs = setup(coarse)
    M0 = min(cands, key=lambda M: make_obj(cs, M)(np.zeros(6)))
    p, _, nit, nfev, _ = _nelder_mead(make_obj(cs, M0), np.zeros(6), 0.05, cfg, rng)
    fs = setup(_polish_grid(f, grid, cfg))
    M0 = M0 @ _sl2_from_params(p)
    p, best, nit2, nfev2, ok = _nelder_mead(make_obj(fs, M0), np.zeros(6), 1e-3, cfg, rng)
    phi = Reparameterization.from_matrix(M0 @ _sl2_from_params(p))
    g, masks, A, w = setup(grid)
    model_img = reparameterize(unit, phi)
    t, lam, Q, d2 = _procrustes(A, _Batch.of(model_img, g, masks), w)
    sigma = MoebiusTransform(Q, lam, t)
    dist = weighted_distance(f, pushforward(model_img, sigma), grid)
    rep = energy_report(f, grid)
    return AlignmentResult(sigma, phi, dist, rep.total_sff - BASE_LEVELS["round_sphere"],
                           rep.bound("total_sff"), "round_sphere", nit + nit2, nfev + nfev2,
                           ok, math.sqrt(d2))


# ---------------------------------------------------------------------------
# inverted model families


MODEL_FAMILIES = ("inverted_catenoid", "inverted_enneper", "inverted_chen")

_MODEL_CENTERS = {
    "inverted_catenoid": [0.0, 0.0, 0.0],
    "inverted_enneper": [0.0, 0.0, 1.5],
    "inverted_chen": [0.0, 0.0, 1.0, 0.5],
}


def model_surface(family: str, rho: float | None = None) -> Immersion:
    """The fixed representative of a model family.

    Internal parameters (catenoid neck, Enneper scale, Chen's c) are
    redundant modulo the conformal group and chart dilations, so a single
    representative suffices.
    """
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    base = {"inverted_catenoid": "inverted_catenoid", "inverted_enneper": "inverted_enneper",
            "inverted_chen": "inverted_chen_graph"}[family]
    params = {"center": _MODEL_CENTERS[family]}
    if rho is not None:
        params["rho"] = rho
    return make_catalog_surface(base, params)


def _signature(f: Immersion, family: str) -> None:
    marks = [m for m in f.marked_points if m.kind in ("branch", "multiplicity-point-preimage")]
    try:
        est = [branch_order_estimate(f, m).order for m in marks]
    except ValueError as exc:
        raise ValueError(f"signature mismatch: {exc}") from exc
    if family == "inverted_catenoid":
        ok = f.ambient_dim == 3 and sorted(est) == [0, 0] and all(
            m.kind == "multiplicity-point-preimage" for m in marks)
        if ok:
            a, b = (np.asarray(m.image, dtype=float) for m in marks)
            ok = bool(np.linalg.norm(a - b) <= 1e-9 * max(1.0, np.linalg.norm(a)))
    elif family == "inverted_enneper":
        ok = f.ambient_dim == 3 and est == [2]
    else:
        ok = f.ambient_dim >= 4 and est == [1]
    if not ok:
        raise ValueError(f"signature mismatch: {family} needs a different marked-point structure "
                         f"(found orders {est})")


def _sample_chart(f: Immersion, family: str) -> np.ndarray:
    if family == "inverted_catenoid":
        radii = np.exp(np.linspace(-2.5, 2.5, 11))
    else:
        radii = np.geomspace(0.15, 3.0, 10)
    th = 2 * np.pi * (np.arange(24) + 0.5) / 24
    z = (radii[:, None] * np.exp(1j * th)[None, :]).reshape(-1)
    return z[~f.domain.excluded(z)]


def _phi_of(family: str, q) -> Reparameterization:
    q = list(q) + [0.0] * (2 - len(q))
    return Reparameterization("cylinder-shift", (q[0], q[1]))


def align_to_model(f: Immersion, family: str, grid: QuadratureGrid | None = None,
                   config: SearchConfig | None = None) -> AlignmentResult:
    """Minimise d(sigma o f o phi, model) over Moebius sigma and chart shifts phi.

    The weight comes from sigma o f o phi.  sigma is written as
    S^{-1} o K_b o sigma0 with sigma0 from a light-cone fit, K_b a special
    conformal map and S the similarity fitted in closed form on the model
    side; Nelder-Mead runs over b and the chart shift.
    """
    cfg = config or SearchConfig()
    if family not in MODEL_FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    _signature(f, family)
    grid = grid or build_grid(f.domain, (128, 128))
    M = model_surface(family)
    if M.domain.kind != f.domain.kind:
        raise ValueError("immersion and model live on different parameter domains")
    n = f.ambient_dim
    nphi = PHI_DIMS[family]

    # light-cone scan over chart shifts
    zs = _sample_chart(f, family)
    y = M.jet(to_points(zs)).position

    def fit_at(q):
        x = reparameterize(f, _phi_of(family, q)).jet(to_points(zs)).position
        return fit_moebius(x, y)

    v0s = np.linspace(*cfg.scan_v[:2], int(cfg.scan_v[2]))
    ths = [0.0] if nphi == 1 else list(2 * np.pi * np.arange(cfg.scan_theta) / cfg.scan_theta)
    scan = []
    for v in v0s:
        for th in ths:
            q = [v] if nphi == 1 else [v, th]
            try:
                scan.append((fit_at(q)[1], tuple(q)))
            except (ValueError, FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError):
                continue
    if not scan:
        raise ArithmeticError("no admissible starting point for the alignment")
    q0 = np.array(min(scan)[1])
    q0 = minimize(lambda q: fit_at(q)[1], q0, method="Nelder-Mead",
                  options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400}).x
    sigma0 = fit_at(q0)[0]

    def make_obj(g):
        masks = _masks(g)
        wq = _quad_weights(g, masks)
        Mb = _Batch.of(M, g, masks)
        I0 = MoebiusTransform.inversion(np.zeros(n))
        cache = {}

        def chain(p):
            b, q = p[:n], q0 + p[n:]
            key = tuple(q)
            if key not in cache:
                cache.clear()
                fq = reparameterize(f, _phi_of(family, q))
                cache[key] = Jet2.concatenate([pt.jets(fq).flat()[m] for pt, m in zip(g.patches, masks)])
            ts = [sigma0] if not np.any(b) else [sigma0, I0, MoebiusTransform.translation_by(b), I0]
            return _Batch.of_jet(push_jet_chain(ts, cache[key]))

        def obj(p):
            try:
                A = chain(p)
                return _procrustes(A, Mb, wq * A.weight())[3]
            except (FloatingPointError, ZeroDivisionError):
                return math.inf
        return obj, chain, Mb, wq

    rng = np.random.default_rng(cfg.seed)
    scale = np.concatenate([np.full(n, 0.05), np.full(nphi, 0.05)])
    coarse = build_grid(f.domain, (cfg.coarse_resolution, cfg.coarse_resolution))
    obj_c, *_ = make_obj(coarse)
    p, _, nit, nfev, _ = _nelder_mead(obj_c, np.zeros(n + nphi), scale, cfg, rng)
    obj_f, *_ = make_obj(_polish_grid(f, grid, cfg))
    p, best, nit2, nfev2, ok = _nelder_mead(obj_f, p, scale * 0.02, cfg, rng)
    ok = ok and math.isfinite(best)
    _, chain_f, Mb, wq = make_obj(grid)

    # assemble sigma = S^{-1} o K_b o sigma0 and re-measure directly
    A = chain_f(p)
    t, lam, Q, d2 = _procrustes(A, Mb, wq * A.weight())
    S_inv = inverse(MoebiusTransform(Q, lam, t))
    b = p[:n]
    I0 = MoebiusTransform.inversion(np.zeros(n))
    pieces = [sigma0] + ([I0, MoebiusTransform.translation_by(b), I0] if np.any(b) else []) + [S_inv]
    sigma = compose_chain(pieces)
    phi = _phi_of(family, q0 + p[n:])
    aligned = pushforward(reparameterize(f, phi), sigma)
    dist = weighted_distance(aligned, M, grid)
    rep = energy_report(f, grid)
    return AlignmentResult(sigma, phi, dist, rep.total_sff - BASE_LEVELS[family], rep.bound("total_sff"),
                           family, nit + nit2, nfev + nfev2, ok, math.sqrt(d2))


# ---------------------------------------------------------------------------
# perturbation sweeps


SWEEP_FAMILIES = ("round-sphere", "inverted-catenoid")
SWEEP_HEADER = ("epsilon", "delta", "distance", "area", "normalized_distance", "converged")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    delta: float
    distance: float
    area: float
    normalized_distance: float
    converged: bool

    def __post_init__(self):
        for k in ("epsilon", "delta", "distance", "area", "normalized_distance"):
            if not math.isfinite(getattr(self, k)):
                raise ValueError(f"sweep column {k} is not finite")

    def csv_fields(self) -> list:
        return [repr(self.epsilon), repr(self.delta), repr(self.distance), repr(self.area),
                repr(self.normalized_distance), "true" if self.converged else "false"]


@dataclass(frozen=True)
class SweepFit:
    exponent: float
    residual: float
    rows_used: int
    spearman: float

    def to_json(self) -> dict:
        return {"exponent": self.exponent, "residual": self.residual, "rows_used": self.rows_used}


@dataclass(frozen=True)
class SweepResult:
    family: dict
    rows: tuple
    fit: SweepFit
    alignments: tuple = field(default=(), compare=False)


def family_member(family: dict, eps: float) -> Immersion:
    """The member of a perturbation family at amplitude ``eps``."""
    kind = family.get("family")
    if kind == "round-sphere":
        return perturbed_sphere(eps, int(family.get("l", 2)), int(family.get("m", 0)),
                                float(family.get("r", 1.0)))
    if kind == "inverted-catenoid":
        V = float(family.get("V", 20.0))
        base = perturbed_catenoid(eps, V) if eps != 0 else catenoid(V)
        center = np.asarray(family.get("center", [0.2, 0.1, 0.3]), dtype=float)
        return pushforward(base, MoebiusTransform.inversion(center))
    raise ValueError(f"unknown sweep family {kind!r}")


def _check_eps(eps_list) -> list:
    eps = [float(e) for e in eps_list]
    pos = [e for e in eps if e != 0]
    if any(not (0 < e <= 0.3) for e in pos) or any(e < 0 for e in eps):
        raise ValueError("sweep amplitudes must lie in (0, 0.3] (0 allowed as a baseline row)")
    if len(pos) < 4 or max(pos) / min(pos) < 10 - 1e-9:
        raise ValueError("a sweep needs >= 4 positive amplitudes spanning a decade")
    return eps


def _sweep_row(args):
    family, eps, resolution, cfg = args
    f = family_member(family, eps)
    grid = build_grid(f.domain, resolution)
    if family["family"] == "round-sphere":
        res = nearest_round_sphere(f, grid, cfg)
    else:
        res = align_to_model(f, "inverted_catenoid", grid, cfg)
    area = energy_report(f, grid).area
    d = res.distance.value
    return SweepRow(eps, res.delta, d, area, d / math.sqrt(area), res.converged), res


def fit_exponent(rows) -> SweepFit:
    """Least-squares slope of log(distance) against log(delta) over usable rows."""
    used = [r for r in rows if r.epsilon > 0 and r.converged and r.delta > 0 and r.distance > 0]
    skipped = [r for r in rows if r.epsilon > 0 and not r.converged]
    if skipped:
        warnings.warn(f"{len(skipped)} non-converged sweep row(s) excluded from the fit", RuntimeWarning)
    if len(used) < 2:
        return SweepFit(math.nan, math.nan, len(used), math.nan)
    x = np.log([r.delta for r in used])
    y = np.log([r.distance for r in used])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    rho = float(spearmanr([r.delta for r in used], [r.distance for r in used])[0])
    return SweepFit(float(coef[0]), resid, len(used), rho)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RIGIDLAB_WORKERS", "1")))
    except ValueError:
        return 1


def perturbation_sweep(family: dict, eps_list, resolution=(128, 128), config: SearchConfig | None = None,
                       workers: int | None = None) -> SweepResult:
    """Align every family member and fit distance ~ delta^p.

    Rows are independent; with ``workers`` > 1 they run in separate
    processes, and results are collected in input order.
    """
    cfg = config or SearchConfig()
    eps = _check_eps(eps_list)
    if family.get("family") not in SWEEP_FAMILIES:
        raise ValueError(f"unknown sweep family {family.get('family')!r}")
    jobs = [(dict(family), e, tuple(resolution), cfg) for e in eps]
    workers = workers or default_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_sweep_row, jobs))
    else:
        out = [_sweep_row(j) for j in jobs]
    rows = tuple(r for r, _ in out)
    return SweepResult(dict(family), rows, fit_exponent(rows), tuple(a for _, a in out))
