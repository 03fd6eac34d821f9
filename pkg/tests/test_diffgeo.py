import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rigidlab.diffgeo import (
    DEFAULT_RADII,
    branch_order_estimate,
    fundamental_forms,
    gauss_curvature_direct,
    hessian_split,
    liouville_residual,
    shape_operator_curvature,
)
from rigidlab.jets import Jet2
from rigidlab.surface import (
    CATALOG,
    MarkedPoint,
    catenoid,
    chen_graph,
    make_catalog_surface,
    perturbed_sphere,
    sphere,
)
from test_surface_core import _interior_points

CONFORMAL = ["sphere", "catenoid", "enneper", "chen_graph", "clifford_torus"]


def _ff(f, n=40):
    return fundamental_forms(f.jet(_interior_points(f, n)))


# ---------------------------------------------------------------------------
# examples


def test_unit_sphere_curvatures():
    ff = _ff(sphere(1.0))
    np.testing.assert_allclose(np.sqrt(ff.normsq["H"]), 2.0, rtol=1e-12)
    np.testing.assert_allclose(ff.K, 1.0, rtol=1e-12)
    assert np.all(np.abs(ff.normsq["A0"]) < 1e-12)


def test_catenoid_curvatures_at_neck():
    ff = fundamental_forms(catenoid(20).jet(np.array([[0.0, 0.0]])))
    np.testing.assert_allclose(ff.H[0], 0.0, atol=1e-14)
    # K = -1/cosh^4 v
    assert ff.K[0] == pytest.approx(-1.0, abs=1e-14)
    assert ff.normsq["A"][0] == pytest.approx(2.0, abs=1e-14)


@given(st.floats(-4.0, 4.0), st.floats(0.0, 2 * math.pi))
def test_catenoid_gauss_curvature_profile(v, t):
    ff = fundamental_forms(catenoid(20).jet(np.array([[v, t]])))
    assert ff.K[0] == pytest.approx(-1.0 / math.cosh(v) ** 4, rel=1e-10)


def test_chen_graph_is_minimal_at_origin():
    ff = fundamental_forms(chen_graph(1.0).jet(np.array([[0.0, 0.0]])))
    np.testing.assert_allclose(ff.H[0], 0.0, atol=1e-14)


@pytest.mark.parametrize("name,m", [("inverted_enneper", 2), ("inverted_chen_graph", 1)])
def test_branch_orders(name, m):
    f = make_catalog_surface(name)
    pts = [p for p in f.marked_points if p.kind == "branch"]
    assert len(pts) == 1 and pts[0].order == m
    est = branch_order_estimate(f, pts[0])
    assert est.order == m
    assert abs(est.slope - m) < 0.1
    assert est.residual < 0.05


def test_inverted_catenoid_double_point_preimages():
    f = make_catalog_surface("inverted_catenoid")
    pts = [p for p in f.marked_points if p.kind == "multiplicity-point-preimage"]
    assert len(pts) == 2
    assert pts[0].location != pts[1].location
    for p in pts:
        est = branch_order_estimate(f, p)
        assert est.order == 0
        assert est.residual < 0.05


def test_liouville_sphere():
    assert liouville_residual(sphere(1.0), ((-0.8, 0.6), (-0.5, 0.9)), 128) < 1e-6


def test_liouville_catenoid_converges():
    region = ((-2.0, 2.0), (0.5, 2.5))
    res = [liouville_residual(catenoid(20), region, n) for n in (16, 32, 64, 128)]
    assert res[-1] < 1e-6
    for a, b in zip(res, res[1:]):
        assert a / b >= 4.0


def test_liouville_perturbed_sphere_quadratic_in_eps():
    region = ((-1.0, 1.0), (-1.0, 1.0))
    eps = np.array([0.01, 0.02, 0.05])
    res = np.array([liouville_residual(perturbed_sphere(e, 2, 0), region, 128) for e in eps])
    # fitted constant of res = C eps^2 over the sweep
    C = float(np.sum(res * eps ** 2) / np.sum(eps ** 4))
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert 1.8 <= slope <= 2.2
    assert res[2] <= 1.1 * C * 0.05 ** 2
    assert np.all(res <= 1.1 * C * eps ** 2)


# ---------------------------------------------------------------------------
# errors


def test_degenerate_metric_raises():
    jet = Jet2(np.zeros((1, 3)), np.array([[[1.0, 0, 0], [2.0, 0, 0]]]), np.zeros((1, 3, 3)))
    with pytest.raises(ValueError, match="degenerate"):
        fundamental_forms(jet)


def test_branch_estimate_rejects_ends():
    f = make_catalog_surface("enneper")
    with pytest.raises(ValueError):
        branch_order_estimate(f, f.marked_points[0])


def test_branch_estimate_needs_two_decades():
    f = make_catalog_surface("inverted_enneper")
    with pytest.raises(ValueError, match="decades"):
        branch_order_estimate(f, f.marked_points[0], radii=[0.1, 0.05, 0.02, 0.01])
    with pytest.raises(ValueError):
        branch_order_estimate(f, f.marked_points[0], radii=[0.1, 0.001])


def test_branch_estimate_flags_mismarked_point():
    # the sphere has no branching: calling its chart origin a multiplicity
    # preimage gives slope 0, but a fake branch at a stretched catenoid
    # truncation gives a non-integer slope
    f = sphere(1.0)
    est = branch_order_estimate(f, MarkedPoint(0j, "multiplicity-point-preimage", 0))
    assert est.order == 0
    g = make_catalog_surface("inverted_enneper")
    p = g.marked_points[0]
    with pytest.raises(ValueError, match="non-integer"):
        branch_order_estimate(g, p, radii=np.geomspace(30.0, 0.3, 6))


def test_liouville_region_in_exclusion():
    f = make_catalog_surface("inverted_catenoid")
    p = next(q for q in f.domain.punctures if q.location is not None)
    c = p.location
    with pytest.raises(ValueError, match="exclusion"):
        liouville_residual(f, ((c.real - 0.5, c.real + 0.5), (c.imag - 0.5, c.imag + 0.5)), 32)


# ---------------------------------------------------------------------------
# invariants at sampled points of every catalog surface


@pytest.mark.parametrize("name", CATALOG)
def test_fundamental_form_invariants(name):
    f = make_catalog_surface(name)
    j = f.jet(_interior_points(f)).flat()
    ff = fundamental_forms(j)
    assert np.all(ff.det > 0)
    # A_ij normal to the tangent plane
    i11, i12, i22 = ff.inverse_metric()
    for k in range(3):
        dots = np.einsum("mn,man->ma", ff.A[:, k], j.d1)
        c1 = i11 * dots[:, 0] + i12 * dots[:, 1]
        c2 = i12 * dots[:, 0] + i22 * dots[:, 1]
        tang = np.linalg.norm(c1[:, None] * j.d1[:, 0] + c2[:, None] * j.d1[:, 1], axis=1)
        # relative to |A_ij|, with a rounding floor where A_ij itself vanishes
        floor = 1e-13 * np.linalg.norm(j.d2[:, k], axis=1)
        assert np.all(tang <= 1e-9 * np.linalg.norm(ff.A[:, k], axis=1) + floor)
    # trace of the traceless part
    tr = i11[:, None] * ff.A0[:, 0] + 2 * i12[:, None] * ff.A0[:, 1] + i22[:, None] * ff.A0[:, 2]
    trA = i11[:, None] * ff.A[:, 0] + 2 * i12[:, None] * ff.A[:, 1] + i22[:, None] * ff.A[:, 2]
    assert np.all(np.linalg.norm(tr, axis=1) <= 1e-9 * (1 + np.linalg.norm(trA, axis=1)))
    np.testing.assert_allclose(ff.H, trA, rtol=1e-12, atol=1e-12)
    # Gauss equation against the direct route
    resid = np.abs(gauss_curvature_direct(ff) - 0.5 * (ff.normsq["H"] - ff.normsq["A"]))
    assert np.all(resid <= 1e-8 * (1 + ff.normsq["A"]))
    assert np.all(np.abs(ff.K - gauss_curvature_direct(ff)) <= 1e-8 * (1 + ff.normsq["A"]))
    # traceless norm identity |A0|^2 = |A|^2 - |H|^2/2
    np.testing.assert_allclose(ff.normsq["A0"], ff.normsq["A"] - 0.5 * ff.normsq["H"],
                               atol=1e-9 * (1 + ff.normsq["A"].max()))
    if f.ambient_dim == 3:
        np.testing.assert_allclose(shape_operator_curvature(j), ff.K, rtol=1e-8,
                                   atol=1e-8 * (1 + ff.normsq["A"].max()))


@pytest.mark.parametrize("name", CONFORMAL + [f"inverted_{n}" for n in CONFORMAL])
def test_hessian_split_identity(name):
    f = make_catalog_surface(name)
    lhs, rhs = hessian_split(f.jet(_interior_points(f)))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


@pytest.mark.parametrize("name", [n for n in CATALOG if n.startswith("inverted_")])
def test_branch_estimates_match_marks(name):
    f = make_catalog_surface(name)
    for p in f.marked_points:
        if p.kind in ("branch", "multiplicity-point-preimage"):
            est = branch_order_estimate(f, p, radii=DEFAULT_RADII)
            assert est.order == (p.order if p.kind == "branch" else 0)


@given(st.floats(0.3, 3.0))
def test_curvature_scaling(r):
    ff = fundamental_forms(sphere(r).jet(np.array([[0.4, -0.2]])))
    assert ff.K[0] == pytest.approx(1 / r ** 2, rel=1e-12)
    assert ff.normsq["H"][0] == pytest.approx(4 / r ** 2, rel=1e-12)
