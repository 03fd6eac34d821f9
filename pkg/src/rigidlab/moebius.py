"""The conformal group of R^n acting on points, jets and immersions.

Elements are stored in the canonical form T(y) = t + lam R I_x(y), where the
inversion I_x(y) = x + (y - x)/|y - x|^2 is optional.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from . import _kernels
from .diffgeo import fundamental_forms
from .jets import Jet2, holomorphic_pullback
from .quadrature import Patch, build_grid
from .surface import (CYL_MINUS, CYL_PLUS, INF, Immersion, MarkedPoint, ParamDomain, Puncture,
                      to_complex, to_points)


@dataclass(frozen=True, eq=False)
class MoebiusTransform:
    rotation: np.ndarray
    scale: float
    translation: np.ndarray
    inversion_center: np.ndarray | None = None

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        n = R.shape[0]
        if R.shape != (n, n) or np.abs(R.T @ R - np.eye(n)).max() > 1e-10:
            raise ValueError("rotation must be orthogonal")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(n))
        if self.inversion_center is not None:
            object.__setattr__(self, "inversion_center",
                               np.asarray(self.inversion_center, dtype=float).reshape(n))

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @property
    def has_inversion(self) -> bool:
        return self.inversion_center is not None

    # constructors
    @staticmethod
    def identity(n: int) -> "MoebiusTransform":
        return MoebiusTransform(np.eye(n), 1.0, np.zeros(n))

    @staticmethod
    def translation_by(c) -> "MoebiusTransform":
        c = np.asarray(c, dtype=float)
        return MoebiusTransform(np.eye(c.size), 1.0, c)

    @staticmethod
    def dilation(lam: float, n: int) -> "MoebiusTransform":
        return MoebiusTransform(np.eye(n), float(lam), np.zeros(n))

    @staticmethod
    def similarity(R, lam: float, t) -> "MoebiusTransform":
        return MoebiusTransform(np.asarray(R, dtype=float), float(lam), np.asarray(t, dtype=float))

    @staticmethod
    def inversion(x0) -> "MoebiusTransform":
        x0 = np.asarray(x0, dtype=float)
        return MoebiusTransform(np.eye(x0.size), 1.0, np.zeros(x0.size), x0)

    def linear(self) -> np.ndarray:
        return self.scale * self.rotation

    def to_json(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "scale": float(self.scale),
            "translation": [float(v) for v in self.translation],
            "inversion_center": None if self.inversion_center is None
            else [float(v) for v in self.inversion_center],
        }

    @staticmethod
    def from_json(d: dict) -> "MoebiusTransform":
        t = np.asarray(d["translation"], dtype=float)
        n = t.size
        R = np.asarray(d["rotation"], dtype=float).reshape(n, n)
        x0 = d.get("inversion_center")
        return MoebiusTransform(R, float(d["scale"]), t, None if x0 is None else np.asarray(x0, dtype=float))


def _invert_points(y, x0):
    d = y - x0
    r2 = np.einsum("...n,...n->...", d, d)
    return x0 + d / r2[..., None]


def apply(T: MoebiusTransform, y) -> np.ndarray:
    """Apply T to points of shape (..., n)."""
    y = np.asarray(y, dtype=float)
    if T.has_inversion:
        d = y - T.inversion_center
        if np.any(np.einsum("...n,...n->...", d, d) == 0):
            raise ZeroDivisionError("point at the inversion pole")
        y = _invert_points(y, T.inversion_center)
    return y @ T.linear().T + T.translation


def at_infinity(T: MoebiusTransform):
    """Image of the point at infinity, or ``None`` when T fixes infinity."""
    if not T.has_inversion:
        return None
    return T.linear() @ T.inversion_center + T.translation


def derivative(T: MoebiusTransform, y) -> np.ndarray:
    """Jacobian DT(y) as an (n, n) matrix."""
    y = np.asarray(y, dtype=float)
    L = T.linear()
    if not T.has_inversion:
        return L
    d = y - T.inversion_center
    r2 = d @ d
    return L @ ((np.eye(T.dim) - 2 * np.outer(d, d) / r2) / r2)


def _similarity_inverse(T: MoebiusTransform) -> MoebiusTransform:
    Rt = T.rotation.T
    return MoebiusTransform(Rt, 1.0 / T.scale, -(Rt @ T.translation) / T.scale)


def _polar(M: np.ndarray):
    U, s, Vt = np.linalg.svd(M)
    lam = float(np.exp(np.mean(np.log(s))))
    return U @ Vt, lam


def _probe_points(n: int):
    base = np.array([[0.37, -0.61, 0.23, 0.41], [-0.52, 0.29, 0.71, -0.33], [0.83, 0.44, -0.19, 0.27],
                     [-0.14, -0.77, -0.58, 0.62]])
    return base[:, :n]


def _chain_apply(ts, y):
    for t in ts:
        y = apply(t, y)
    return y


def _chain_derivative(ts, y):
    D = np.eye(len(y))
    for t in ts:
        D = derivative(t, y) @ D
        y = apply(t, y)
    return D


def _from_chain(ts, pole) -> MoebiusTransform:
    """Canonical form of a chain of transforms given its pole (or ``None``)."""
    n = ts[0].dim
    if pole is not None:
        inv = MoebiusTransform.inversion(pole)
        ts = [inv] + list(ts)
    # pick a probe point well away from every intermediate singularity
    best, best_q = -1.0, None
    for q in _probe_points(n) * 1.0:
        for shift in (0.0, 1.7, -2.3):
            cand = q + shift
            y, margin = cand.copy(), np.inf
            for t in ts:
                if t.has_inversion:
                    margin = min(margin, np.linalg.norm(y - t.inversion_center))
                y = apply(t, y) if margin > 0 else y
            if margin > best:
                best, best_q = margin, cand
    M = _chain_derivative(ts, best_q)
    R, lam = _polar(M)
    t = _chain_apply(ts, best_q) - lam * R @ best_q
    return MoebiusTransform(R, lam, t, pole)


def compose(S: MoebiusTransform, T: MoebiusTransform) -> MoebiusTransform:
    """Canonical form of S o T."""
    if not S.has_inversion and not T.has_inversion:
        L = S.linear()
        return MoebiusTransform(S.rotation @ T.rotation, S.scale * T.scale, L @ T.translation + S.translation)
    if not S.has_inversion:
        return _from_chain([T, S], T.inversion_center)
    # S has an inversion: the pole is T^{-1}(x_S) unless T maps infinity there
    tinf = at_infinity(T)
    xs = S.inversion_center
    if tinf is not None and np.linalg.norm(tinf - xs) <= 1e-14 * max(1.0, np.linalg.norm(xs)):
        return _from_chain([T, S], None)
    pole = apply(inverse(T), xs) if tinf is not None or T.has_inversion else apply(_similarity_inverse(T), xs)
    return _from_chain([T, S], pole)


def inverse(T: MoebiusTransform) -> MoebiusTransform:
    if not T.has_inversion:
        return _similarity_inverse(T)
    tau = MoebiusTransform(T.rotation, T.scale, T.translation)
    # T = tau o I_x, so T^{-1} = I_x o tau^{-1} with pole tau(x)
    return _from_chain([_similarity_inverse(tau), MoebiusTransform.inversion(T.inversion_center)],
                       apply(tau, T.inversion_center))


def compose_chain(ts) -> MoebiusTransform:
    """Canonical form of ts[-1] o ... o ts[0].

    The pole is traced back through the chain exactly, and the similarity
    part is read off the chain itself, so intermediate factors with far-away
    poles (ill-conditioned in canonical form) never enter.
    """
    ts = list(ts)
    y = None  # None stands for the point at infinity
    for t in reversed(ts):
        if y is None:
            if t.has_inversion:
                y = t.inversion_center.copy()
            continue
        tinv = inverse(t) if t.has_inversion else _similarity_inverse(t)
        if tinv.has_inversion and np.array_equal(y, tinv.inversion_center):
            y = None
        else:
            y = apply(tinv, y)
    return _from_chain(ts, y)


def special_conformal(b) -> MoebiusTransform:
    """K_b = I_0 o T_b o I_0, fixing the origin with pole at -b/|b|^2."""
    b = np.asarray(b, dtype=float)
    n = b.size
    if not np.any(b):
        return MoebiusTransform.identity(n)
    I0 = MoebiusTransform.inversion(np.zeros(n))
    return compose(I0, compose(MoebiusTransform.translation_by(b), I0))


def _lift(x: np.ndarray) -> np.ndarray:
    s = np.einsum("mn,mn->m", x, x)
    return np.concatenate([x, 0.5 * (s - 1.0)[:, None], 0.5 * (s + 1.0)[:, None]], axis=1)


def similarity_fit(x, y):
    """Least-squares similarity y ~ t + lam Q x with Q orthogonal (reflections allowed)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    mx, my = x.mean(0), y.mean(0)
    xc, yc = x - mx, y - my
    U, s, Vt = np.linalg.svd(yc.T @ xc)
    Q = U @ Vt
    lam = float(s.sum() / max(np.einsum("mn,mn->", xc, xc), 1e-300))
    return MoebiusTransform(Q, lam, my - lam * Q @ mx)


def fit_moebius(x, y) -> tuple:
    """Moebius transform sigma with sigma(x_i) ~ y_i, and the RMS residual.

    Points are lifted to the light cone of R^{n+1,1}, where sigma acts
    linearly; the projective constraints L X_i || Y_i are solved in the
    least-squares sense (direct linear transform).  The pole of L fixes the
    inversion, and the similarity part is refitted by Procrustes, so the
    result is an exact Moebius transform even for noisy data.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    m, n = x.shape
    if m < n + 3:
        raise ValueError("too few correspondences for a Moebius fit")
    sx = MoebiusTransform.similarity(np.eye(n), 1.0 / np.sqrt(np.mean(np.sum((x - x.mean(0)) ** 2, 1))),
                                     np.zeros(n))
    sx = MoebiusTransform(np.eye(n), sx.scale, -sx.scale * x.mean(0))
    sy = MoebiusTransform(np.eye(n), 1.0 / np.sqrt(np.mean(np.sum((y - y.mean(0)) ** 2, 1))), np.zeros(n))
    sy = MoebiusTransform(np.eye(n), sy.scale, -sy.scale * y.mean(0))
    X, Y = _lift(apply(sx, x)), _lift(apply(sy, y))
    X /= np.linalg.norm(X, axis=1)[:, None]
    Y /= np.linalg.norm(Y, axis=1)[:, None]
    k = n + 2
    P = np.eye(k)[None] - Y[:, :, None] * Y[:, None, :]
    rows = (P[:, :, :, None] * X[:, None, None, :]).reshape(m * k, k * k)
    _, _, Vt = np.linalg.svd(rows, full_matrices=False)
    L = Vt[-1].reshape(k, k)
    far = np.zeros(k)
    far[-2:] = 1.0
    Xp = np.linalg.lstsq(L, far, rcond=None)[0]
    den = Xp[-1] - Xp[-2]
    xn = apply(sx, x)
    yn = apply(sy, y)
    pole = None if abs(den) < 1e-12 * np.linalg.norm(Xp) else Xp[:n] / den
    if pole is not None and np.min(np.linalg.norm(xn - pole, axis=1)) < 1e-9:
        pole = None
    base = xn if pole is None else _invert_points(xn, pole)
    S = similarity_fit(base, yn)
    core = S if pole is None else MoebiusTransform(S.rotation, S.scale, S.translation, pole)
    sigma = compose(inverse(sy), compose(core, sx))
    resid = float(np.sqrt(np.mean(np.sum((apply(sigma, x) - y) ** 2, 1))))
    return sigma, resid


# ---------------------------------------------------------------------------
# jets and immersions


def push_jet(T: MoebiusTransform, jet: Jet2) -> Jet2:
    """Exact chain-rule 2-jet of T o f."""
    shape = jet.shape
    j = jet.flat()
    p, a, b = _kernels.moebius_push_kernel(j.position, j.d1, j.d2, T.inversion_center, T.has_inversion,
                                           T.rotation, T.scale, T.translation)
    return Jet2(p, a, b).reshape(*shape) if shape else Jet2(p[0], a[0], b[0])


def push_jet_chain(ts, jet: Jet2) -> Jet2:
    for t in ts:
        jet = push_jet(t, jet)
    return jet


def _loc_key(loc):
    return INF if loc is None or loc == INF else loc if isinstance(loc, str) else complex(loc)


class PoleError(ValueError):
    """The inversion centre lies on the image of the immersion."""


def _nearest_on_patch(f: Immersion, patch, start: np.ndarray, x0: np.ndarray) -> float:
    """Local least-squares refinement of |f - x0| from a sampled node."""
    def probe(q):
        return Patch(np.asarray(q, dtype=float)[None, :], np.ones(1), patch.chart, patch.scale)

    def res(q):
        return probe(q).jets(f).position[0] - x0

    def jac(q):
        return probe(q).jets(f).d1[0].T

    try:
        sol = least_squares(res, start, jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=50)
    except (FloatingPointError, ValueError, ZeroDivisionError):
        return math.inf
    z = probe(sol.x).native_complex()
    pt = to_points(z)
    if not (np.all(f.domain.contains(pt)) and not np.any(f.domain.excluded(z))):
        return math.inf
    return float(np.linalg.norm(sol.fun))


def _check_center(f: Immersion, x0: np.ndarray, tol: float, refine: int = 4) -> float:
    grid = build_grid(f.domain, (32, 32))
    best = []
    for patch in grid.patches:
        pos = patch.jets(f).position.reshape(-1, f.ambient_dim)
        d = np.linalg.norm(pos - x0, axis=1)
        for i in np.argsort(d)[:refine]:
            best.append((float(d[i]), patch, patch.local[i]))
    best.sort(key=lambda b: b[0])
    dmin = best[0][0]
    # sampled nodes can straddle a point of the image; refine the closest ones
    for _, patch, start in best[:refine]:
        dmin = min(dmin, _nearest_on_patch(f, patch, start, x0))
    if dmin <= tol * (1.0 + float(np.linalg.norm(x0))):
        raise PoleError(f"inversion centre lies on the surface image (distance {dmin:.3e})")
    return dmin


def pushforward(f: Immersion, T: MoebiusTransform, rho: float | None = None,
                preimages=None, tol: float = 1e-6) -> Immersion:
    """Immersion T o f with updated domain and marked-point metadata.

    Under an inversion, ends of multiplicity k + 1 become finite points with
    branch order k (a multiplicity preimage when k = 0).  A cylinder domain
    with two ends is re-charted to the plane via z = exp(v + i theta).
    ``preimages`` lists ``(location, m)`` for points mapped to the pole; they
    become ends of order m (experimental).  ``rho`` overrides the exclusion
    radius of the new finite points.
    """
    if T.dim != f.ambient_dim:
        raise ValueError("transform dimension does not match the immersion")
    label = {"surface": f"pushforward({f.name})", "params": {"base": f.label, "transform": T.to_json()}}
    if not T.has_inversion:
        marks = tuple(replace(m, image=None if m.image is None else tuple(apply(T, np.asarray(m.image))))
                      for m in f.marked_points)
        limits = {k: tuple(apply(T, np.asarray(v))) for k, v in f.limits.items()}
        return Immersion(f.domain, lambda pts: push_jet(T, f.jet(pts)), f.ambient_dim, marks, f.euler_char,
                         label, dict(f.tails), limits, f.conformal)
    x0 = T.inversion_center
    if not preimages:
        _check_center(f, x0, tol)
    pole_image = tuple(float(c) for c in at_infinity(T))
    dom = f.domain
    ends = f.ends
    pre_locs = {_loc_key(loc) for loc, _ in (preimages or ())}
    # marked points sent to the pole are replaced by the new ends below
    others = [m for m in f.marked_points if m.kind != "end" and _loc_key(m.location) not in pre_locs]
    new_marks = [replace(m, image=None if m.image is None else tuple(apply(T, np.asarray(m.image))))
                 for m in others]
    limits = {k: tuple(apply(T, np.asarray(v))) for k, v in f.limits.items() if k not in pre_locs}

    def finite_mark(loc, k):
        kind = "branch" if k >= 1 else "multiplicity-point-preimage"
        return MarkedPoint(loc, kind, k, pole_image)

    if dom.kind == "periodic-strip" and ends:
        if dom.periodic_axes != frozenset({1}) or {m.location for m in ends} != {CYL_MINUS, CYL_PLUS}:
            raise ValueError("only cylinders with ends at v = +-inf can be re-charted")
        lo, hi = dom.bounds[0]
        period = dom.bounds[1][1] - dom.bounds[1][0]
        if abs(period - 2 * math.pi) > 1e-12:
            raise ValueError("cylinder re-charting needs period 2 pi")
        r_in = rho if rho is not None else math.exp(lo)
        r_out = rho if rho is not None else math.exp(-hi)
        new_dom = ParamDomain("punctured-plane", ((-math.inf, math.inf), (-math.inf, math.inf)),
                              punctures=(Puncture(0j, r_in, False), Puncture(None, r_out, False)))
        for m in ends:
            new_marks.append(finite_mark(0j if m.location == CYL_MINUS else INF, m.order))
        base_eval = f.evaluator

        def cyl(pts):
            z = to_complex(pts)
            w = np.log(z)
            return holomorphic_pullback(base_eval(to_points(w)), 1 / z, -1 / z ** 2)
        inner_eval = cyl
    elif ends:
        if dom.kind != "punctured-plane":
            raise ValueError("ends are supported on punctured-plane and cylinder domains")
        ps = []
        end_locs = {m.location for m in ends}
        for p in dom.punctures:
            loc = INF if p.location is None else p.location
            if p.is_end and loc in end_locs:
                ps.append(Puncture(p.location, rho if rho is not None else p.rho, False))
            else:
                ps.append(p)
        new_dom = replace(dom, punctures=tuple(ps))
        for m in ends:
            new_marks.append(finite_mark(m.location, m.order))
        inner_eval = f.evaluator
    else:
        new_dom = dom
        inner_eval = f.evaluator
    if preimages:
        if new_dom.kind != "punctured-plane":
            raise ValueError("pole preimages are supported on punctured-plane domains")
        ps = list(new_dom.punctures)
        for loc, m in preimages:
            key = _loc_key(loc)
            old = [i for i, p in enumerate(ps) if _loc_key(INF if p.location is None else p.location) == key]
            r = rho or (ps[old[0]].rho if old else 1e-2)
            for i in reversed(old):
                ps.pop(i)
            ps.append(Puncture(None if key == INF else complex(loc), r, True))
            new_marks.append(MarkedPoint(INF if key == INF else complex(loc), "end", int(m)))
        new_dom = replace(new_dom, punctures=tuple(ps))
    tails = {k: (math.inf if preimages and k == "area" else 0.0) for k in
             ("area", "willmore", "total_sff", "total_gauss", "total_traceless")}

    def ev(pts):
        return push_jet(T, inner_eval(pts))

    return Immersion(new_dom, ev, f.ambient_dim, tuple(new_marks), f.euler_char, label, tails, limits,
                     f.conformal)


# ---------------------------------------------------------------------------
# safe centres


@dataclass(frozen=True)
class SafeCenter:
    center: np.ndarray
    normalization: float
    distance: float
    candidates: int

    def to_json(self) -> dict:
        return {"center": [float(c) for c in self.center], "normalization": self.normalization,
                "normalized_distance": self.distance, "candidates": self.candidates}


def _sample_image(f: Immersion, grid=None):
    grid = grid or build_grid(f.domain, (64, 64))
    pos, sq, dmu = [], [], []
    for p in grid.patches:
        j = p.jets(f)
        ff = fundamental_forms(j)
        pos.append(j.position.reshape(-1, f.ambient_dim))
        sq.append(ff.normsq["A"])
        dmu.append(ff.area_element * p.weights)
    return np.concatenate(pos), np.concatenate(sq), np.concatenate(dmu)


def safe_inversion_center(f: Immersion, grid=None, rng: np.random.Generator | None = None,
                          spacing: float = 0.5, reach: float = 4.0) -> SafeCenter:
    """A point at normalised distance >= 1 from the sampled image.

    Images with ends are dilated so that the largest |A|^2 equals 2 (neck
    radius 1 for a catenoid) and probed on a lattice around their
    curvature-weighted centroid.  Compact images, whose |A|^2 may blow up at
    branch points, are dilated to bounding-box extent 2 (a unit sphere) and
    probed on a lattice outside the box.
    With ``rng`` a random admissible lattice point is returned, otherwise
    the one closest to the centroid.
    """
    pos, sq, dmu = _sample_image(f, grid)
    compact = not f.ends
    if compact or not sq.max() > 0:
        lam = 2.0 / max(float(np.ptp(pos, axis=0).max()), 1e-300)
    else:
        lam = math.sqrt(float(sq.max()) / 2.0)
    P = pos * lam
    w = sq * dmu
    if not w.sum() > 0:
        w = dmu
    c = (P * w[:, None]).sum(0) / w.sum()
    n = f.ambient_dim
    if compact:
        lo, hi = P.min(0), P.max(0)
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) + 3.0
        k = np.ceil(half / spacing).astype(int)
    else:
        k = np.full(n, int(math.ceil(reach / spacing)))
    axes = [c[i] + spacing * np.arange(-k[i], k[i] + 1) for i in range(n)]
    L = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    if compact:
        outside = np.any((L < lo) | (L > hi), axis=1)
        L = L[outside]
    dist, _ = cKDTree(P).query(L)
    ok = dist >= 1.0 - 1e-9
    if not np.any(ok):  # pragma: no cover - the lattice always reaches far enough
        raise RuntimeError("no admissible inversion centre found")
    cand, cd = L[ok], dist[ok]
    if rng is None:
        i = int(np.argmin(np.linalg.norm(cand - c, axis=1) + 1e-9 * np.arange(len(cand))))
    else:
        i = int(rng.integers(len(cand)))
    return SafeCenter(cand[i] / lam, lam, float(cd[i]), int(len(cand)))


# ---------------------------------------------------------------------------
# inversion ledger


@dataclass(frozen=True)
class InversionLedger:
    surface: dict
    center: list
    bracket: int
    base: dict
    predicted: dict
    measured: dict
    tolerance: dict
    relative_error: dict
    agrees: dict

    def to_json(self) -> dict:
        return dict(self.__dict__)


def inversion_bracket(f: Immersion, preimages=()) -> int:
    ends = sum(m.order + 1 for m in f.marked_points if m.kind == "end")
    return ends - sum(int(m) + 1 for _, m in preimages)


def inversion_ledger(f: Immersion, x0, resolution=None, rho: float | None = None, preimages=(),
                     base_report=None) -> InversionLedger:
    """Compare the inversion formulas for K, W and |A|^2 with quadrature of I_{x0} o f."""
    from .functionals import energy_report, grid_for

    x0 = np.asarray(x0, dtype=float)
    b = inversion_bracket(f, preimages)
    base = base_report or energy_report(f)
    g = pushforward(f, MoebiusTransform.inversion(x0), rho=rho, preimages=list(preimages) or None)
    meas = energy_report(g, grid_for(g, resolution))
    shift = {"total_gauss": 4 * math.pi * b, "willmore": 4 * math.pi * b, "total_sff": 8 * math.pi * b}
    pred, got, tol, rel, ok = {}, {}, {}, {}, {}
    for k, s in shift.items():
        pred[k] = base.value(k) + s
        got[k] = meas.value(k)
        tol[k] = float(base.bound(k) + meas.bound(k) + 1e-9 * max(1.0, abs(pred[k])))
        rel[k] = abs(got[k] - pred[k]) / max(abs(pred[k]), 2 * math.pi)
        ok[k] = bool(abs(got[k] - pred[k]) <= tol[k])
    return InversionLedger(dict(f.label), [float(c) for c in x0], b,
                           {k: base.value(k) for k in shift}, pred, got, tol, rel, ok)
