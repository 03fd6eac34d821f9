"""Parameter domains, the immersion abstraction and the model-surface catalog.

Chart conventions
-----------------
* ``sphere``: stereographic chart z = x + iy with S(z) = (2x, 2y, |z|^2 - 1)/(1 + |z|^2),
  so z = 0 maps to the south pole and z = infinity to the north pole.
* ``catenoid``: (v, theta) -> a (cosh v cos theta, cosh v sin theta, v) on the
  periodic strip [-V, V] x [0, 2 pi).
* ``enneper``: (x - x^3/3 + x y^2, -y - x^2 y + y^3/3, x^2 - y^2), metric (1 + |z|^2)^2.
* ``chen_graph``: (x, y, Re c z^2, Im c z^2) in R^4.
* ``clifford_torus``: (cos a, sin a, cos b, sin b)/sqrt(2) on the doubly periodic square.
* ``perturbed_sphere``: r (1 + eps Y_lm(S)) S in the stereographic chart (not conformal).
* ``perturbed_catenoid``: catenoid + eps psi N with psi = sech^2 v cos 2 theta.

Plane-type domains are treated as the Riemann sphere: ``punctured-plane``
domains carry punctures (the point at infinity or finite points) with an
exclusion radius measured in the local chart of the puncture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .harmonics import eval_poly, real_solid_harmonic
from .jets import Dual2, Jet2, jet_from_duals

KINDS = ("rectangle", "periodic-strip", "punctured-plane")
MARK_KINDS = ("end", "branch", "multiplicity-point-preimage")
INF = "inf"
CYL_MINUS = "v=-inf"
CYL_PLUS = "v=+inf"


@dataclass(frozen=True)
class Puncture:
    """Excluded point of a ``punctured-plane`` domain.

    ``location`` is a complex chart point or ``None`` for the point at
    infinity; ``rho`` is the exclusion radius in the puncture's local chart;
    ``is_end`` marks a truncated end (rather than a finite-area point).
    """

    location: complex | None
    rho: float
    is_end: bool = False


@dataclass(frozen=True)
class ParamDomain:
    kind: str
    bounds: tuple
    periodic_axes: frozenset = frozenset()
    punctures: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "rectangle":
            for lo, hi in self.bounds:
                if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
                    raise ValueError("rectangle bounds must be finite and increasing")
            if self.periodic_axes:
                raise ValueError("rectangle has no periodic axes")
        if self.kind == "periodic-strip":
            if not self.periodic_axes:
                raise ValueError("periodic-strip needs at least one periodic axis")
            for ax in self.periodic_axes:
                lo, hi = self.bounds[ax]
                if not hi - lo > 0:
                    raise ValueError("periodic axis needs a positive period")
        for p in self.punctures:
            if not p.rho > 0:
                raise ValueError("exclusion radius must be positive")
        if self.punctures and self.kind != "punctured-plane":
            raise ValueError("punctures live on punctured-plane domains")

    def with_rho(self, factor: float) -> "ParamDomain":
        """Copy with every finite-area puncture radius multiplied by ``factor``."""
        ps = tuple(p if p.is_end else replace(p, rho=p.rho * factor) for p in self.punctures)
        return replace(self, punctures=ps)

    def excluded(self, z: np.ndarray) -> np.ndarray:
        """Boolean mask of complex chart points inside some exclusion disc."""
        z = np.asarray(z, dtype=complex)
        mask = np.zeros(z.shape, dtype=bool)
        for p in self.punctures:
            if p.location is None:
                mask |= np.abs(z) * p.rho > self.scale
            else:
                mask |= np.abs(z - p.location) < p.rho * self.scale
        return mask

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        ok = np.all(np.isfinite(pts), axis=-1)
        if self.kind != "punctured-plane":
            for ax in range(2):
                if ax in self.periodic_axes:
                    continue
                lo, hi = self.bounds[ax]
                ok &= (pts[..., ax] >= lo - 1e-12) & (pts[..., ax] <= hi + 1e-12)
        return ok

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "bounds": [list(b) for b in self.bounds],
            "periodic_axes": sorted(self.periodic_axes),
            "punctures": [{"location": _loc_json(p.location), "rho": p.rho, "is_end": p.is_end}
                          for p in self.punctures],
            "scale": self.scale,
        }


def _loc_json(loc):
    if loc is None:
        return INF
    if isinstance(loc, str):
        return loc
    loc = complex(loc)
    return [loc.real, loc.imag]


@dataclass(frozen=True)
class MarkedPoint:
    """End, branch point or preimage of a multiplicity point.

    ``location`` is a complex chart point or one of the tags ``"inf"``,
    ``"v=-inf"``, ``"v=+inf"``.  ``image`` is the finite limit position in
    R^n when one exists.
    """

    location: complex | str
    kind: str
    order: int
    image: tuple | None = None

    def __post_init__(self):
        if self.kind not in MARK_KINDS:
            raise ValueError(f"unknown marked point kind {self.kind!r}")
        if self.order < 0:
            raise ValueError("order must be nonnegative")
        if self.kind == "branch" and self.order < 1:
            raise ValueError("branch points carry order >= 1")

    def to_json(self) -> dict:
        return {"location": _loc_json(self.location), "kind": self.kind, "order": self.order,
                "image": None if self.image is None else [float(c) for c in self.image]}


def local_chart(domain: ParamDomain, location) -> Callable:
    """Holomorphic local coordinate centred at a (possibly ideal) point.

    Returns ``phi(xi) -> (z, dz/dxi, d2z/dxi2)`` mapping a local complex
    coordinate to the native chart coordinate.
    """
    s = domain.scale
    if location == INF or location is None:
        def phi(xi):
            xi = np.asarray(xi, dtype=complex)
            return s / xi, -s / xi ** 2, 2 * s / xi ** 3
    elif location == CYL_PLUS:
        def phi(xi):
            xi = np.asarray(xi, dtype=complex)
            return -np.log(xi), -1 / xi, 1 / xi ** 2
    elif location == CYL_MINUS:
        def phi(xi):
            xi = np.asarray(xi, dtype=complex)
            return np.log(xi), 1 / xi, -1 / xi ** 2
    else:
        p = complex(location)

        def phi(xi):
            xi = np.asarray(xi, dtype=complex)
            return p + s * xi, np.full(xi.shape, s, dtype=complex), np.zeros(xi.shape, dtype=complex)
    return phi


def to_points(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1)


def to_complex(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0] + 1j * pts[..., 1]


@dataclass(frozen=True, eq=False)
class Immersion:
    """Chart-based map into R^n with exact 2-jets and marked-point metadata.

    ``evaluator`` maps an array of chart points (..., 2) to a :class:`Jet2`
    with the same batch shape; it is pure.  ``euler_char`` is the Euler
    characteristic of the compactified surface.  ``tails`` holds analytic
    bounds on the integrals lost to end truncation, keyed like the energy
    report.  ``limits`` maps ideal-point tags to finite image positions.
    """

    domain: ParamDomain
    evaluator: Callable[[np.ndarray], Jet2]
    ambient_dim: int
    marked_points: tuple
    euler_char: int
    label: dict
    tails: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)
    conformal: bool = True

    def jet(self, pts) -> Jet2:
        """Raw jet evaluation, no domain checks."""
        pts = np.asarray(pts, dtype=float)
        return self.evaluator(pts)

    @property
    def ends(self) -> list:
        return [m for m in self.marked_points if m.kind == "end"]

    @property
    def punctured_euler_char(self) -> int:
        return self.euler_char - len(self.ends)

    @property
    def name(self) -> str:
        return str(self.label.get("surface", "custom"))

    def describe(self) -> dict:
        return {
            "label": self.label,
            "ambient_dim": self.ambient_dim,
            "euler_char": self.euler_char,
            "domain": self.domain.to_json(),
            "marked_points": [m.to_json() for m in self.marked_points],
            "conformal_chart": self.conformal,
        }


def eval_jet2(f: Immersion, p) -> Jet2:
    """Validated jet evaluation at chart point(s) ``p``."""
    pts = np.asarray(p, dtype=float)
    if pts.shape[-1] != 2:
        raise ValueError("parameter points have two coordinates")
    if not np.all(f.domain.contains(pts)):
        raise ValueError("parameter point outside the domain")
    if np.any(f.domain.excluded(to_complex(pts))):
        raise ValueError("parameter point inside an exclusion neighbourhood")
    jet = f.jet(pts)
    if not jet.is_finite():
        raise FloatingPointError("non-finite jet")
    return jet


# ---------------------------------------------------------------------------
# catalog


def _xy(pts):
    return Dual2.variables(pts[..., 0], pts[..., 1])


def _stereo(x, y):
    p = 1.0 / (1.0 + x * x + y * y)
    return 2.0 * x * p, 2.0 * y * p, 1.0 - 2.0 * p


def sphere(r: float = 1.0) -> Immersion:
    _check(r > 0, "sphere radius must be positive")

    def ev(pts):
        return jet_from_duals([c * r for c in _stereo(*_xy(pts))])

    dom = ParamDomain("punctured-plane", ((-math.inf, math.inf), (-math.inf, math.inf)))
    return Immersion(dom, ev, 3, (), 2, {"surface": "sphere", "params": {"r": r}},
                     tails={k: 0.0 for k in _TAIL_KEYS}, limits={INF: (0.0, 0.0, float(r))})


def perturbed_sphere(eps: float, l: int = 2, m: int = 0, r: float = 1.0) -> Immersion:
    _check(abs(eps) < 0.3, "perturbation amplitude must satisfy |eps| < 0.3")
    _check(r > 0, "sphere radius must be positive")
    terms = real_solid_harmonic(int(l), int(m))

    def ev(pts):
        s = _stereo(*_xy(pts))
        fac = 1.0 + eps * eval_poly(terms, *s)
        return jet_from_duals([c * fac * r for c in s])

    north = 1.0 + eps * eval_poly(terms, 0.0, 0.0, 1.0)
    dom = ParamDomain("punctured-plane", ((-math.inf, math.inf), (-math.inf, math.inf)))
    return Immersion(dom, ev, 3, (), 2,
                     {"surface": "perturbed_sphere", "params": {"eps": eps, "l": int(l), "m": int(m), "r": r}},
                     tails={k: 0.0 for k in _TAIL_KEYS}, limits={INF: (0.0, 0.0, float(r * north))},
                     conformal=False)


def _catenoid_duals(pts, a):
    v, t = _xy(pts)
    ch = v.cosh()
    return [a * ch * t.cos(), a * ch * t.sin(), a * v], v, t


def catenoid(V: float = 20.0, a: float = 1.0) -> Immersion:
    _check(V >= 5, "catenoid truncation V must be >= 5")
    _check(a > 0, "neck radius must be positive")

    def ev(pts):
        comps, _, _ = _catenoid_duals(pts, a)
        return jet_from_duals(comps)

    dom = ParamDomain("periodic-strip", ((-V, V), (0.0, 2 * math.pi)), frozenset({1}))
    sff_tail = 8 * math.pi * (1 - math.tanh(V))
    tails = {"area": math.inf, "willmore": 0.0, "total_sff": sff_tail,
             "total_gauss": sff_tail / 2, "total_traceless": sff_tail}
    marks = (MarkedPoint(CYL_MINUS, "end", 0), MarkedPoint(CYL_PLUS, "end", 0))
    return Immersion(dom, ev, 3, marks, 2, {"surface": "catenoid", "params": {"V": V, "a": a}},
                     tails=tails)


def perturbed_catenoid(eps: float, V: float = 20.0, a: float = 1.0) -> Immersion:
    """Catenoid moved along its unit normal by eps sech^2(v) cos(2 theta)."""
    _check(abs(eps) < 0.3, "perturbation amplitude must satisfy |eps| < 0.3")
    _check(V >= 5, "catenoid truncation V must be >= 5")

    def ev(pts):
        comps, v, t = _catenoid_duals(pts, a)
        ch = v.cosh()
        psi = eps * a * (2.0 * t).cos() / (ch * ch)
        normal = [-1.0 * t.cos() / ch, -1.0 * t.sin() / ch, v.tanh()]
        return jet_from_duals([c + psi * nv for c, nv in zip(comps, normal)])

    dom = ParamDomain("periodic-strip", ((-V, V), (0.0, 2 * math.pi)), frozenset({1}))
    # the perturbation decays like e^{-2|v|}; widen the catenoid envelope accordingly
    sff_tail = 8 * math.pi * (1 - math.tanh(V)) * (1 + 10 * abs(eps))
    tails = {"area": math.inf, "willmore": sff_tail, "total_sff": sff_tail,
             "total_gauss": sff_tail, "total_traceless": sff_tail}
    marks = (MarkedPoint(CYL_MINUS, "end", 0), MarkedPoint(CYL_PLUS, "end", 0))
    return Immersion(dom, ev, 3, marks, 2,
                     {"surface": "perturbed_catenoid", "params": {"eps": eps, "V": V, "a": a}},
                     tails=tails, conformal=False)


def enneper(R: float = 1000.0, s: float = 1.0) -> Immersion:
    _check(R >= 5, "Enneper truncation R must be >= 5")
    _check(s > 0, "scale must be positive")

    def ev(pts):
        x, y = _xy(pts)
        return jet_from_duals([s * (x - x ** 3 / 3.0 + x * y * y),
                               s * (-y - x * x * y + y ** 3 / 3.0),
                               s * (x * x - y * y)])

    dom = ParamDomain("punctured-plane", ((-math.inf, math.inf), (-math.inf, math.inf)),
                      punctures=(Puncture(None, 1.0 / R, True),))
    t = 8 * math.pi / (1 + R * R)
    tails = {"area": math.inf, "willmore": 0.0, "total_sff": t, "total_gauss": t / 2,
             "total_traceless": t}
    return Immersion(dom, ev, 3, (MarkedPoint(INF, "end", 2),), 2,
                     {"surface": "enneper", "params": {"R": R, "s": s}}, tails=tails)


def _complex_param(c) -> complex:
    if isinstance(c, (list, tuple)):
        return complex(float(c[0]), float(c[1]))
    return complex(c)


def chen_graph(c=1.0, R: float = 40.0) -> Immersion:
    c = _complex_param(c)
    _check(abs(c) > 0, "Chen graph coefficient must be nonzero")
    _check(R >= 5, "Chen graph truncation R must be >= 5")
    cr, ci = c.real, c.imag

    def ev(pts):
        x, y = _xy(pts)
        q = x * x - y * y
        w = 2.0 * x * y
        return jet_from_duals([x, y, cr * q - ci * w, ci * q + cr * w])

    dom = ParamDomain("punctured-plane", ((-math.inf, math.inf), (-math.inf, math.inf)),
                      punctures=(Puncture(None, 1.0 / R, True),))
    t = 4 * math.pi / (1 + 4 * abs(c) ** 2 * R * R)
    tails = {"area": math.inf, "willmore": 0.0, "total_sff": t, "total_gauss": t / 2,
             "total_traceless": t}
    cp = cr if ci == 0 else [cr, ci]
    return Immersion(dom, ev, 4, (MarkedPoint(INF, "end", 1),), 2,
                     {"surface": "chen_graph", "params": {"c": cp, "R": R}}, tails=tails)


def clifford_torus() -> Immersion:
    k = 1.0 / math.sqrt(2.0)

    def ev(pts):
        a, b = _xy(pts)
        return jet_from_duals([k * a.cos(), k * a.sin(), k * b.cos(), k * b.sin()])

    dom = ParamDomain("periodic-strip", ((0.0, 2 * math.pi), (0.0, 2 * math.pi)), frozenset({0, 1}))
    return Immersion(dom, ev, 4, (), 0, {"surface": "clifford_torus", "params": {}},
                     tails={k_: 0.0 for k_ in _TAIL_KEYS})


_TAIL_KEYS = ("area", "willmore", "total_sff", "total_gauss", "total_traceless")

_BASES = {
    "sphere": (sphere, {"r": 1.0}),
    "catenoid": (catenoid, {"V": 20.0, "a": 1.0}),
    "enneper": (enneper, {"R": 1000.0, "s": 1.0}),
    "chen_graph": (chen_graph, {"c": 1.0, "R": 40.0}),
    "clifford_torus": (clifford_torus, {}),
    "perturbed_sphere": (perturbed_sphere, {"eps": 0.05, "l": 2, "m": 0, "r": 1.0}),
    "perturbed_catenoid": (perturbed_catenoid, {"eps": 0.05, "V": 20.0, "a": 1.0}),
}

CATALOG = tuple(_BASES) + tuple(f"inverted_{b}" for b in _BASES)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def catalog_defaults(name: str) -> dict:
    if name.startswith("inverted_"):
        base = name[len("inverted_"):]
        if base not in _BASES:
            raise KeyError(f"unknown catalog surface {name!r}")
        d = dict(_BASES[base][1])
        d.update({"center": "auto", "rho": 1e-2})
        return d
    if name not in _BASES:
        raise KeyError(f"unknown catalog surface {name!r}")
    return dict(_BASES[name][1])


def make_catalog_surface(name: str, params: dict | None = None) -> Immersion:
    """Build a catalog surface by identifier and parameters.

    Inverted variants accept the base surface's parameters plus ``center``
    (a point, or ``"auto"`` for a safe centre) and ``rho`` (exclusion radius
    of the finite points created from ends).
    """
    params = dict(params or {})
    defaults = catalog_defaults(name)
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
    full = {**defaults, **params}
    if name.startswith("inverted_"):
        from .moebius import MoebiusTransform, pushforward, safe_inversion_center
        base_name = name[len("inverted_"):]
        base_params = {k: v for k, v in full.items() if k not in ("center", "rho")}
        base = make_catalog_surface(base_name, base_params)
        center = full["center"]
        if isinstance(center, str):
            if center != "auto":
                raise ValueError("center must be a point or 'auto'")
            x0 = safe_inversion_center(base).center
        else:
            x0 = np.asarray(center, dtype=float)
            if x0.shape != (base.ambient_dim,):
                raise ValueError(f"center must have {base.ambient_dim} coordinates")
        out = pushforward(base, MoebiusTransform.inversion(x0), rho=float(full["rho"]))
        label = {"surface": name, "params": {**base_params, "center": [float(c) for c in x0],
                                              "rho": float(full["rho"])}}
        return replace(out, label=label)
    fn = _BASES[name][0]
    kwargs = {k: full[k] for k in defaults}
    try:
        return fn(**kwargs)
    except TypeError as exc:
        raise ValueError(str(exc)) from exc


def sample_grid(f: Immersion, resolution):
    from .quadrature import sample_grid as _sg
    return _sg(f, resolution)
