"""Fundamental forms, curvature, branch orders and the weak Liouville residual."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .jets import Jet2, holomorphic_pullback
from .surface import Immersion, MarkedPoint, local_chart, to_points


@dataclass(frozen=True, eq=False)
class FundForms:
    """Pointwise geometry of a batch of jets (flattened to M nodes).

    ``g`` is (M, 3) as (g11, g12, g22); ``A``, ``A0`` are (M, 3, n);
    ``H`` is (M, n); ``normsq`` maps ``"A"``, ``"A0"``, ``"H"`` to (M,) arrays.
    """

    g: np.ndarray
    u: np.ndarray
    A: np.ndarray
    H: np.ndarray
    A0: np.ndarray
    K: np.ndarray
    normsq: dict

    @property
    def det(self) -> np.ndarray:
        return self.g[:, 0] * self.g[:, 2] - self.g[:, 1] ** 2

    @property
    def area_element(self) -> np.ndarray:
        """sqrt(det g), equal to e^{2u}."""
        return np.sqrt(self.det)

    def inverse_metric(self):
        det = self.det
        return self.g[:, 2] / det, -self.g[:, 1] / det, self.g[:, 0] / det


def fundamental_forms(jet: Jet2, check: bool = True) -> FundForms:
    """First and second fundamental forms of a batch of 2-jets.

    ``A_ij`` is the component of the second derivative normal to the tangent
    plane.  Raises ``ValueError`` on a degenerate metric when ``check``.
    """
    j = jet.flat()
    if check:
        _check_rank(j.d1)
    g, A, H, A0, sq, K = _kernels.fundamental_forms_kernel(j.d1, j.d2)
    det = g[:, 0] * g[:, 2] - g[:, 1] ** 2
    u = 0.25 * np.log(det)
    return FundForms(g, u, A, H, A0, K, {"A": sq[:, 0], "A0": sq[:, 1], "H": sq[:, 2]})


def _check_rank(d1: np.ndarray) -> None:
    g11 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 0])
    g12 = np.einsum("mn,mn->m", d1[:, 0], d1[:, 1])
    g22 = np.einsum("mn,mn->m", d1[:, 1], d1[:, 1])
    tr = g11 + g22
    det = g11 * g22 - g12 * g12
    # ratio of squared singular values
    disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    lo = 0.5 * tr - disc
    hi = 0.5 * tr + disc
    bad = ~(lo > 1e-24 * hi)
    if np.any(bad):
        raise ValueError(f"degenerate metric at {int(bad.sum())} node(s); near a branch point?")


def conformal_factor_gradient(jet: Jet2) -> np.ndarray:
    """Chart gradient of u = 1/4 log det g, computed from the 2-jet. Shape (M, 2)."""
    j = jet.flat()
    f1, f2 = j.d1[:, 0], j.d1[:, 1]
    f11, f12, f22 = j.d2[:, 0], j.d2[:, 1], j.d2[:, 2]
    dot = lambda a, b: np.einsum("mn,mn->m", a, b)  # noqa: E731
    g11, g12, g22 = dot(f1, f1), dot(f1, f2), dot(f2, f2)
    det = g11 * g22 - g12 * g12
    i11, i12, i22 = g22 / det, -g12 / det, g11 / det
    du1 = 0.5 * (i11 * dot(f11, f1) + i12 * (dot(f11, f2) + dot(f12, f1)) + i22 * dot(f12, f2))
    du2 = 0.5 * (i11 * dot(f12, f1) + i12 * (dot(f12, f2) + dot(f22, f1)) + i22 * dot(f22, f2))
    return np.stack([du1, du2], axis=1)


def conformality_defect(jet: Jet2) -> np.ndarray:
    """(|g11 - g22| + 2|g12|) / (g11 + g22) per node."""
    j = jet.flat()
    g11 = np.einsum("mn,mn->m", j.d1[:, 0], j.d1[:, 0])
    g12 = np.einsum("mn,mn->m", j.d1[:, 0], j.d1[:, 1])
    g22 = np.einsum("mn,mn->m", j.d1[:, 1], j.d1[:, 1])
    return (np.abs(g11 - g22) + 2 * np.abs(g12)) / (g11 + g22)


def gauss_curvature_direct(ff: FundForms) -> np.ndarray:
    """K = (<A11, A22> - |A12|^2) / det g, independent of the H route."""
    a11, a12, a22 = ff.A[:, 0], ff.A[:, 1], ff.A[:, 2]
    return (np.einsum("mn,mn->m", a11, a22) - np.einsum("mn,mn->m", a12, a12)) / ff.det


def shape_operator_curvature(jet: Jet2) -> np.ndarray:
    """Codimension-one K as det(II)/det(I) with the unit normal from a cross product."""
    j = jet.flat()
    if j.dim != 3:
        raise ValueError("shape operator route needs codimension one")
    nrm = np.cross(j.d1[:, 0], j.d1[:, 1])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    L, M, N = (np.einsum("mn,mn->m", j.d2[:, k], nrm) for k in range(3))
    g11 = np.einsum("mn,mn->m", j.d1[:, 0], j.d1[:, 0])
    g12 = np.einsum("mn,mn->m", j.d1[:, 0], j.d1[:, 1])
    g22 = np.einsum("mn,mn->m", j.d1[:, 1], j.d1[:, 1])
    return (L * N - M * M) / (g11 * g22 - g12 * g12)


def hessian_split(jet: Jet2):
    """Both sides of e^{-2u}|D^2 f|^2 = 4|Du|^2 + e^{-2u} sum_ij |A_ij|^2.

    The identity holds in conformal charts; returns (lhs, rhs) per node.
    """
    j = jet.flat()
    ff = fundamental_forms(j)
    ew = 1.0 / ff.area_element
    d2sq = (np.einsum("mn,mn->m", j.d2[:, 0], j.d2[:, 0]) + 2 * np.einsum("mn,mn->m", j.d2[:, 1], j.d2[:, 1])
            + np.einsum("mn,mn->m", j.d2[:, 2], j.d2[:, 2]))
    asq = (np.einsum("mn,mn->m", ff.A[:, 0], ff.A[:, 0]) + 2 * np.einsum("mn,mn->m", ff.A[:, 1], ff.A[:, 1])
           + np.einsum("mn,mn->m", ff.A[:, 2], ff.A[:, 2]))
    du = conformal_factor_gradient(j)
    return ew * d2sq, 4 * np.einsum("mk,mk->m", du, du) + ew * asq


# ---------------------------------------------------------------------------
# branch order


@dataclass(frozen=True)
class BranchEstimate:
    order: int
    slope: float
    residual: float
    radii: tuple
    circle_means: tuple

    def to_json(self) -> dict:
        return {"order": self.order, "slope": self.slope, "residual": self.residual,
                "radii": list(self.radii), "circle_means": list(self.circle_means)}


DEFAULT_RADII = tuple(np.geomspace(1e-1, 1e-3, 9))


def circle_mean_u(f: Immersion, location, radii, n_angles: int = 64) -> np.ndarray:
    """Mean of u over circles |xi| = r in the local chart centred at ``location``."""
    phi = local_chart(f.domain, location)
    theta = 2 * np.pi * np.arange(n_angles) / n_angles
    xi = np.asarray(radii, dtype=float)[:, None] * np.exp(1j * theta)[None, :]
    z, dz, d2z = phi(xi)
    jet = holomorphic_pullback(f.jet(to_points(z)), dz, d2z)
    d1 = jet.d1
    g11 = np.einsum("...n,...n->...", d1[..., 0, :], d1[..., 0, :])
    g12 = np.einsum("...n,...n->...", d1[..., 0, :], d1[..., 1, :])
    g22 = np.einsum("...n,...n->...", d1[..., 1, :], d1[..., 1, :])
    u = 0.25 * np.log(g11 * g22 - g12 * g12)
    return u.mean(axis=1)


def branch_order_estimate(f: Immersion, p: MarkedPoint, radii=DEFAULT_RADII, n_angles: int = 64,
                          tol: float = 0.1) -> BranchEstimate:
    """Fit circle means of u to m log r + b + c r^2 + d r^2 log r around a marked point.

    The r^2 terms absorb the variation of the smooth part of u (its Laplacian
    is -K e^{2u}; ends with logarithmic growth add the r^2 log r term).
    Jets are analytic, so the probes may sit inside the quadrature exclusion
    disc of the point.  Raises ``ValueError`` when the slope is not within
    ``tol`` of an integer.
    """
    if p.kind not in ("branch", "multiplicity-point-preimage"):
        raise ValueError("branch order is estimated at branch or multiplicity points")
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4 or np.any(np.diff(radii) >= 0) or radii[0] / radii[-1] < 100 - 1e-9:
        raise ValueError("need >= 4 decreasing radii spanning >= 2 decades")
    means = circle_mean_u(f, p.location, radii, n_angles)
    x = np.log(radii)
    A = np.stack([x, np.ones_like(x), radii ** 2, radii ** 2 * x], axis=1)
    coef, *_ = np.linalg.lstsq(A, means, rcond=None)
    slope = float(coef[0])
    resid = float(np.sqrt(np.mean((A @ coef - means) ** 2)))
    m = int(round(slope))
    if abs(slope - m) > tol or not math.isfinite(slope):
        raise ValueError(f"non-integer branch slope {slope:.4f} at {p.location!r}")
    if p.kind == "multiplicity-point-preimage" and m != 0:
        raise ValueError(f"multiplicity preimage shows slope {slope:.4f}")
    return BranchEstimate(m, slope, resid, tuple(map(float, radii)), tuple(map(float, means)))


# ---------------------------------------------------------------------------
# weak Liouville equation


BUMP_SHARPNESS = 4.0


def _bump(s):
    """exp(-a / (1 - s^2)) on (-1, 1) and its derivative."""
    a = BUMP_SHARPNESS
    inside = np.abs(s) < 1
    out = np.zeros_like(s)
    d = np.zeros_like(s)
    si = s[inside]
    q = 1 - si * si
    e = np.exp(-a / q)
    out[inside] = e
    d[inside] = e * (-2 * a * si / (q * q))
    return out, d


_POLYS = (
    (lambda s, t: np.ones_like(s), lambda s, t: (0 * s, 0 * s)),
    (lambda s, t: s, lambda s, t: (np.ones_like(s), 0 * s)),
    (lambda s, t: t, lambda s, t: (0 * s, np.ones_like(s))),
    (lambda s, t: s * t, lambda s, t: (t, s)),
    (lambda s, t: s * s, lambda s, t: (2 * s, 0 * s)),
    (lambda s, t: t * t, lambda s, t: (0 * s, 2 * t)),
)


def liouville_residual(f: Immersion, region, grid=64) -> float:
    """Max over test bumps of |int <Du, Dphi> - int K e^{2u} phi| / ||phi||_{H^1}.

    ``region`` is a chart rectangle ((x0, x1), (y0, y1)); ``grid`` is a
    resolution or a region grid built with :func:`sample_grid`.
    """
    from .quadrature import QuadratureGrid, build_grid

    (x0, x1), (y0, y1) = region
    if isinstance(grid, QuadratureGrid):
        g = grid
        if g.region is None:
            raise ValueError("Liouville residual needs a region grid")
    else:
        g = build_grid(f.domain, grid, region)
    pts = g.patches[0].local
    w = g.patches[0].weights
    from .surface import to_complex
    if np.any(f.domain.excluded(to_complex(pts))):
        raise ValueError("region touches an exclusion zone")
    jet = f.jet(pts)
    ff = fundamental_forms(jet)
    du = conformal_factor_gradient(jet)
    sx, sy = 2.0 / (x1 - x0), 2.0 / (y1 - y0)
    s = (pts[:, 0] - 0.5 * (x0 + x1)) * sx
    t = (pts[:, 1] - 0.5 * (y0 + y1)) * sy
    bs, dbs = _bump(s)
    bt, dbt = _bump(t)
    worst = 0.0
    for P, dP in _POLYS:
        p = P(s, t)
        ps, pt = dP(s, t)
        phi = bs * bt * p
        phx = (dbs * bt * p + bs * bt * ps) * sx
        phy = (bs * dbt * p + bs * bt * pt) * sy
        lhs = np.sum(w * (du[:, 0] * phx + du[:, 1] * phy))
        rhs = np.sum(w * ff.K * ff.area_element * phi)
        nrm = math.sqrt(np.sum(w * (phi * phi + phx * phx + phy * phy)))
        worst = max(worst, abs(lhs - rhs) / nrm)
    return worst
