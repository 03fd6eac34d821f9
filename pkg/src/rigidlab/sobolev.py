"""Weighted W^{2,2}_u norms and distances between immersions on a common domain.

The weight is e^{-2u} with u the conformal factor of the *first* argument
(``sqrt(det g) = e^{2u}`` for non-conformal charts).  D and D^2 are chart
derivatives of the grid's local charts; on ``punctured-plane`` domains the
integral is the sum over the two disc charts of the Riemann-sphere atlas, so
neighbourhoods of infinity are integrated in a chart where the weight stays
bounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .jets import Jet2
from .moebius import MoebiusTransform, pushforward
from .quadrature import QuadratureGrid
from .surface import Immersion, ParamDomain

COMPONENT_NAMES = ("zeroth", "first", "second")


@dataclass(frozen=True)
class WeightedDistance:
    """sqrt of the three e^{-2u}-weighted integrals of |h|^2, |Dh|^2, |D^2h|^2."""

    value: float
    components: tuple
    weight_source: str
    grid: str

    def __post_init__(self):
        if any(c < 0 for c in self.components):
            raise ValueError("weighted components are nonnegative")

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "components": dict(zip(COMPONENT_NAMES, self.components)),
            "weight_source": self.weight_source,
            "grid": self.grid,
        }

    def csv_row(self, surface: str, model: str) -> list:
        return [surface, model, repr(self.value)] + [repr(c) for c in self.components] + [self.grid]


def _same_domain(a: ParamDomain, b: ParamDomain) -> bool:
    return (a.kind == b.kind and a.periodic_axes == b.periodic_axes and a.scale == b.scale
            and np.array_equal(np.asarray(a.bounds, float), np.asarray(b.bounds, float)))


def _weight(jet: Jet2) -> np.ndarray:
    """e^{-2u} = 1 / sqrt(det g) at each node."""
    d1 = jet.d1
    g11 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 0])
    g12 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 1])
    g22 = np.einsum("mn,mn->m", d1[:, 1], d1[:, 1])
    det = g11 * g22 - g12 * g12
    with np.errstate(divide="ignore", invalid="ignore"):
        w = 1.0 / np.sqrt(det)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("weight e^{-2u} not finite at a node (degenerate metric)")
    return w


def _node_mask(grid: QuadratureGrid, patch) -> np.ndarray:
    # nodes inside exclusion discs of the grid's domain are rejected
    return ~grid.domain.excluded(patch.native_complex())


def _integrate(grid: QuadratureGrid, weight_from: Immersion, pairs) -> tuple:
    """Sum the weighted integrands over patches.

    ``pairs`` maps a patch to the jet of the integrand h (f or f - f0).
    """
    parts = []
    for patch in grid.patches:
        keep = _node_mask(grid, patch)
        if not np.any(keep):
            continue
        wj = patch.jets(weight_from).flat()[keep]
        hj = pairs(patch).flat()[keep]
        if not (wj.is_finite() and hj.is_finite()):
            raise FloatingPointError("non-finite jet on the grid")
        terms = _kernels.sobolev_kernel(hj.position, hj.d1, hj.d2, _weight(wj))
        parts.append(terms * patch.weights[keep][:, None])
    t = np.concatenate(parts)
    comps = tuple(float(np.sum(t[:, k])) for k in range(3))
    return tuple(max(c, 0.0) for c in comps)


def weighted_norm(f: Immersion, grid: QuadratureGrid) -> WeightedDistance:
    """The W^{2,2}_u norm of ``f`` itself, weighted by its own conformal factor."""
    comps = _integrate(grid, f, lambda p: p.jets(f))
    return WeightedDistance(math.sqrt(sum(comps)), comps, f.name, grid.tag)


def weighted_distance(f: Immersion, f0: Immersion, grid: QuadratureGrid,
                      weight_source: Immersion | None = None) -> WeightedDistance:
    """||f - f0|| in W^{2,2}_u with u from ``f`` (or from ``weight_source``).

    Fixing the weight source makes the distance a metric on immersions over
    ``grid``; by default it is always the first argument.
    """
    if not _same_domain(f.domain, f0.domain):
        raise ValueError("immersions live on different parameter domains")
    if f.ambient_dim != f0.ambient_dim:
        raise ValueError("immersions live in different ambient dimensions")
    src = f if weight_source is None else weight_source
    if not _same_domain(src.domain, f.domain):
        raise ValueError("weight source lives on a different parameter domain")
    comps = _integrate(grid, src, lambda p: p.jets(f) - p.jets(f0))
    return WeightedDistance(math.sqrt(sum(comps)), comps, src.name, grid.tag)


# ---------------------------------------------------------------------------
# inversion comparability


@dataclass(frozen=True)
class ComparabilityRecord:
    ratio: float
    direct: float
    inverted: float
    g_range: tuple
    g0_range: tuple
    scale: float
    c_star: float
    in_band: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _area_and_centroid(f: Immersion, grid: QuadratureGrid):
    area = 0.0
    moment = np.zeros(f.ambient_dim)
    for patch in grid.patches:
        j = patch.jets(f).flat()
        w = patch.weights / _weight(j)
        area += float(np.sum(w))
        moment += w @ j.position
    return area, moment / area


def _radius_range(f: Immersion, grid: QuadratureGrid, x0: np.ndarray) -> tuple:
    r = np.concatenate([np.linalg.norm(p.jets(f).flat().position - x0, axis=1) for p in grid.patches])
    return float(r.min()), float(r.max())


def inversion_comparability(f: Immersion, f0: Immersion, x0, grid: QuadratureGrid,
                            c_star: float = 1e3, strict: bool = False) -> ComparabilityRecord:
    """Ratio of distances after and before inverting at ``x0``.

    Both immersions are first dilated about the area centroid of ``f`` so that
    ``f`` has area one; both images must then avoid the unit ball about
    ``x0``.  The ratio is dist(I o f, I o f0) / dist(f, f0), and equals one
    by convention when the two coincide on the grid.
    """
    x0 = np.asarray(x0, dtype=float)
    area, c = _area_and_centroid(f, grid)
    if not (math.isfinite(area) and area > 0):
        raise ValueError("cannot normalise an immersion without positive finite area")
    lam = 1.0 / math.sqrt(area)
    n = f.ambient_dim
    S = MoebiusTransform.similarity(np.eye(n), lam, (1.0 - lam) * c)
    fs, f0s = pushforward(f, S), pushforward(f0, S)
    g_range = _radius_range(fs, grid, x0)
    g0_range = _radius_range(f0s, grid, x0)
    if g_range[0] < 1.0 or g0_range[0] < 1.0:
        raise ValueError("normalised image meets the unit ball about the inversion centre")
    direct = weighted_distance(fs, f0s, grid).value
    if direct == 0.0:
        ratio, inv = 1.0, 0.0
    else:
        I = MoebiusTransform.inversion(x0)
        inv = weighted_distance(pushforward(fs, I), pushforward(f0s, I), grid).value
        ratio = inv / direct
    ok = 1.0 / c_star <= ratio <= c_star
    if strict and not ok:
        raise ArithmeticError(f"comparability ratio {ratio:.3e} outside [1/{c_star:g}, {c_star:g}]")
    return ComparabilityRecord(ratio, direct, inv, g_range, g0_range, lam, c_star, bool(ok))
