"""Tensor-product quadrature grids on parameter domains.

Non-periodic axes use composite Simpson, periodic axes the uniform trapezoid.
A ``punctured-plane`` domain is covered by two discs of the Riemann sphere,
|z| <= s and |z| >= s, each in polar coordinates of its own holomorphic local
chart (xi = z/s and xi = s/z).  Integrals are evaluated on local-chart jets so
that neighbourhoods of infinity are handled like any other point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jets import Jet2, holomorphic_pullback
from .surface import Immersion, ParamDomain, to_complex, to_points

MIN_RESOLUTION = 8


def simpson_rule(a: float, b: float, n: int):
    """Composite Simpson nodes and weights with ``n`` (even) intervals."""
    if n % 2:
        raise ValueError("Simpson axes need an even number of intervals")
    x = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * (b - a) / (3.0 * n)


def periodic_rule(a: float, b: float, n: int):
    x = a + (b - a) * np.arange(n) / n
    return x, np.full(n, (b - a) / n)


@dataclass(frozen=True, eq=False)
class Patch:
    """Nodes and weights in a local chart, with the map to the native chart.

    ``chart`` is ``"identity"``, ``"inner"`` (z = s xi) or ``"outer"``
    (z = s / xi).  ``weights`` integrate against dx in the local chart.
    """

    local: np.ndarray
    weights: np.ndarray
    chart: str
    scale: float

    def native_complex(self) -> np.ndarray:
        xi = to_complex(self.local)
        if self.chart == "inner":
            return self.scale * xi
        if self.chart == "outer":
            return self.scale / xi
        return xi

    def derivatives(self):
        xi = to_complex(self.local)
        s = self.scale
        if self.chart == "inner":
            return np.full(xi.shape, s, dtype=complex), np.zeros(xi.shape, dtype=complex)
        return -s / xi ** 2, 2 * s / xi ** 3

    def jets(self, f: Immersion) -> Jet2:
        """Jets of ``f`` in this patch's local chart."""
        if self.chart == "identity":
            return f.jet(self.local)
        z = self.native_complex()
        d1, d2 = self.derivatives()
        return holomorphic_pullback(f.jet(to_points(z)), d1, d2)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    domain: ParamDomain
    resolution: tuple
    patches: tuple
    region: tuple | None = None

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([to_points(p.native_complex()) for p in self.patches])

    @property
    def weights(self) -> np.ndarray:
        """Weights for dx in the native chart."""
        out = []
        for p in self.patches:
            if p.chart == "identity":
                out.append(p.weights)
            else:
                d1, _ = p.derivatives()
                out.append(p.weights * np.abs(d1) ** 2)
        return np.concatenate(out)

    @property
    def size(self) -> int:
        return sum(len(p.weights) for p in self.patches)

    @property
    def tag(self) -> str:
        return f"{self.domain.kind}:{self.resolution[0]}x{self.resolution[1]}"

    def refine(self) -> "QuadratureGrid":
        """The half-step grid used for Richardson error estimates."""
        return build_grid(self.domain, (2 * self.resolution[0], 2 * self.resolution[1]), self.region)

    def with_domain(self, domain: ParamDomain) -> "QuadratureGrid":
        return build_grid(domain, self.resolution, self.region)

    def local_jets(self, f: Immersion) -> list:
        return [p.jets(f) for p in self.patches]


def _check_resolution(resolution) -> tuple:
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    res = tuple(int(r) for r in resolution)
    if len(res) != 2:
        raise ValueError("resolution needs one integer per axis")
    if min(res) < MIN_RESOLUTION:
        raise ValueError(f"resolution {res} below minimum {MIN_RESOLUTION} per axis")
    return res


RADIAL_GRADING = 3


def _disc_patch(n_r: int, n_t: int, r0: float, chart: str, scale: float) -> Patch:
    # graded radius r = r0 + (1 - r0) s^p clusters nodes at the centre, where
    # inverted ends may carry logarithmic singularities in the curvature
    p = RADIAL_GRADING
    s, ws = simpson_rule(0.0, 1.0, n_r)
    r = r0 + (1.0 - r0) * s ** p
    wr = ws * (1.0 - r0) * p * s ** (p - 1)
    t, wt = periodic_rule(0.0, 2 * math.pi, n_t)
    keep = (r > 0) & (wr > 0)
    r, wr = r[keep], wr[keep] * r[keep]
    R, T = np.meshgrid(r, t, indexing="ij")
    W = np.outer(wr, wt)
    local = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    return Patch(local, W.reshape(-1), chart, scale)


def build_grid(domain: ParamDomain, resolution, region=None) -> QuadratureGrid:
    res = _check_resolution(resolution)
    if region is not None:
        (a0, a1), (b0, b1) = region
        x, wx = simpson_rule(a0, a1, res[0])
        y, wy = simpson_rule(b0, b1, res[1])
        X, Y = np.meshgrid(x, y, indexing="ij")
        p = Patch(np.stack([X, Y], -1).reshape(-1, 2), np.outer(wx, wy).reshape(-1), "identity", 1.0)
        return QuadratureGrid(domain, res, (p,), tuple(map(tuple, region)))
    if domain.kind in ("rectangle", "periodic-strip"):
        axes = []
        for ax in range(2):
            lo, hi = domain.bounds[ax]
            rule = periodic_rule if ax in domain.periodic_axes else simpson_rule
            axes.append(rule(lo, hi, res[ax]))
        (x, wx), (y, wy) = axes
        X, Y = np.meshgrid(x, y, indexing="ij")
        p = Patch(np.stack([X, Y], -1).reshape(-1, 2), np.outer(wx, wy).reshape(-1), "identity", 1.0)
        return QuadratureGrid(domain, res, (p,))
    s = domain.scale
    r_in = r_out = 0.0
    for pc in domain.punctures:
        if pc.location is None:
            r_out = max(r_out, pc.rho)
        elif pc.location == 0:
            r_in = max(r_in, pc.rho)
    patches = [_disc_patch(res[0], res[1], r_in, "inner", s), _disc_patch(res[0], res[1], r_out, "outer", s)]
    others = [pc for pc in domain.punctures if pc.location is not None and pc.location != 0]
    if others:
        trimmed = []
        for p in patches:
            z = p.native_complex()
            bad = np.zeros(z.shape, dtype=bool)
            for pc in others:
                bad |= np.abs(z - pc.location) < pc.rho * s
            trimmed.append(Patch(p.local[~bad], p.weights[~bad], p.chart, p.scale))
        patches = trimmed
    return QuadratureGrid(domain, res, tuple(patches))


def sample_grid(f: Immersion, resolution, region=None) -> QuadratureGrid:
    """Quadrature grid for ``f`` at the given per-axis resolution.

    For ``punctured-plane`` domains the two numbers are radial intervals and
    angular nodes per disc.  ``region`` restricts to a chart rectangle.
    """
    return build_grid(f.domain, resolution, region)
