import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rigidlab.diffgeo import conformality_defect
from rigidlab.quadrature import build_grid
from rigidlab.surface import (
    CATALOG,
    INF,
    MarkedPoint,
    ParamDomain,
    Puncture,
    catenoid,
    chen_graph,
    clifford_torus,
    enneper,
    eval_jet2,
    make_catalog_surface,
    perturbed_sphere,
    sample_grid,
    sphere,
    to_complex,
)

SMOOTH = ["sphere", "catenoid", "enneper", "chen_graph", "clifford_torus"]


def _interior_points(f, n=40, seed=1):
    """Random chart points inside the domain and away from exclusions."""
    rng = np.random.default_rng(seed)
    dom = f.domain
    if dom.kind == "punctured-plane":
        pts = rng.normal(size=(4 * n, 2)) * 1.5
    else:
        lo = np.array([b[0] for b in dom.bounds])
        hi = np.array([b[1] for b in dom.bounds])
        lo, hi = np.maximum(lo, -3.0), np.minimum(hi, 3.0)
        pts = lo + (hi - lo) * rng.random((4 * n, 2))
    keep = ~dom.excluded(to_complex(pts))
    # stay clear of the exclusion discs too
    z = to_complex(pts)
    for p in dom.punctures:
        if p.location is not None:
            keep &= np.abs(z - p.location) > 4 * p.rho * dom.scale
        else:
            keep &= np.abs(z) * p.rho < 0.5 * dom.scale
    return pts[keep][:n]


# ---------------------------------------------------------------------------
# examples


def test_sphere_chart_origin_is_south_pole():
    j = eval_jet2(sphere(1.0), [0.0, 0.0])
    np.testing.assert_allclose(j.position, [0.0, 0.0, -1.0], atol=1e-15)


def test_catenoid_jet_at_origin():
    j = eval_jet2(catenoid(V=20), [0.0, 0.0])
    # f = (cosh v cos t, cosh v sin t, v)
    np.testing.assert_allclose(j.position, [1.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(j.d1[0], [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(j.d1[1], [0.0, 1.0, 0.0], atol=1e-15)


def test_enneper_has_one_end_of_order_two():
    f = enneper(R=10)
    ends = [m for m in f.marked_points if m.kind == "end"]
    assert len(ends) == 1
    assert ends[0].order == 2
    assert ends[0].location == INF


def test_sphere_stereographic_factor_at_origin():
    j = eval_jet2(sphere(1.0), [0.0, 0.0])
    # 2/(1+|z|^2) at z = 0
    assert np.linalg.norm(j.d1[0]) == pytest.approx(2.0, abs=1e-14)
    assert np.linalg.norm(j.d1[1]) == pytest.approx(2.0, abs=1e-14)
    assert abs(np.dot(j.d1[0], j.d1[1])) < 1e-14


def test_catenoid_unit_orthogonal_frame_at_origin():
    j = eval_jet2(catenoid(20), [0.0, 0.0])
    assert np.linalg.norm(j.d1[0]) == pytest.approx(1.0, abs=1e-15)
    assert np.linalg.norm(j.d1[1]) == pytest.approx(1.0, abs=1e-15)
    assert np.dot(j.d1[0], j.d1[1]) == pytest.approx(0.0, abs=1e-15)


def test_chen_graph_hessian_at_origin():
    j = eval_jet2(chen_graph(c=1.0, R=5), [0.0, 0.0])
    # graph components Re z^2 = x^2 - y^2 and Im z^2 = 2xy
    hess3 = np.array([[j.d2[0, 2], j.d2[1, 2]], [j.d2[1, 2], j.d2[2, 2]]])
    hess4 = np.array([[j.d2[0, 3], j.d2[1, 3]], [j.d2[1, 3], j.d2[2, 3]]])
    np.testing.assert_allclose(hess3, [[2.0, 0.0], [0.0, -2.0]], atol=1e-15)
    np.testing.assert_allclose(hess4, [[0.0, 2.0], [2.0, 0.0]], atol=1e-15)


def test_clifford_grid_uniform_weights():
    g = sample_grid(clifford_torus(), (64, 64))
    w = g.weights
    assert g.size == 4096
    np.testing.assert_allclose(w, w[0], rtol=1e-15)


def test_catenoid_grid_weights_sum_to_domain_area():
    g = sample_grid(catenoid(20), (128, 64))
    assert g.weights.sum() == pytest.approx(40 * 2 * math.pi, rel=1e-12)


def test_inverted_enneper_grid_avoids_branch_preimage():
    f = make_catalog_surface("inverted_enneper", {"rho": 1e-2})
    g = sample_grid(f, (64, 64))
    pre = [p for p in f.domain.punctures if not p.is_end]
    assert pre
    z = to_complex(g.nodes)
    for p in pre:
        if p.location is None:
            assert np.all(np.abs(z) * p.rho <= f.domain.scale)
        else:
            assert np.all(np.abs(z - p.location) >= p.rho * f.domain.scale)


# ---------------------------------------------------------------------------
# errors


def test_unknown_identifier():
    with pytest.raises(KeyError):
        make_catalog_surface("torus_of_doom")


@pytest.mark.parametrize("name,params", [
    ("sphere", {"r": -1.0}),
    ("catenoid", {"V": 2.0}),
    ("enneper", {"R": 1.0}),
    ("chen_graph", {"c": 0.0}),
    ("perturbed_sphere", {"eps": 0.4}),
])
def test_parameter_out_of_range(name, params):
    with pytest.raises(ValueError):
        make_catalog_surface(name, params)


def test_unknown_parameter_rejected():
    with pytest.raises(ValueError, match="unknown parameter"):
        make_catalog_surface("sphere", {"radius": 2.0})


def test_inversion_center_on_surface_rejected_with_distance():
    with pytest.raises(ValueError, match="distance"):
        make_catalog_surface("inverted_sphere", {"center": [0.0, 0.0, 1.0]})


def test_eval_outside_domain():
    with pytest.raises(ValueError):
        eval_jet2(catenoid(10), [11.0, 0.0])


def test_eval_inside_exclusion():
    f = make_catalog_surface("inverted_enneper")
    p = next(q for q in f.domain.punctures if not q.is_end)
    # the branch preimage sits at infinity of the chart
    loc = complex(10.0 / p.rho) if p.location is None else p.location
    with pytest.raises(ValueError):
        eval_jet2(f, [loc.real, loc.imag])


def test_domain_invariants():
    with pytest.raises(ValueError):
        ParamDomain("rectangle", ((0.0, math.inf), (0.0, 1.0)))
    with pytest.raises(ValueError):
        ParamDomain("periodic-strip", ((0.0, 1.0), (0.0, 0.0)), frozenset({1}))
    with pytest.raises(ValueError):
        ParamDomain("punctured-plane", ((-1, 1), (-1, 1)), punctures=(Puncture(0j, 0.0),))


def test_marked_point_invariants():
    with pytest.raises(ValueError):
        MarkedPoint(0j, "branch", 0)
    with pytest.raises(ValueError):
        MarkedPoint(0j, "end", -1)
    with pytest.raises(ValueError):
        MarkedPoint(0j, "cusp", 1)


def test_end_marks_only_on_noncompact_surfaces():
    for name in CATALOG:
        f = make_catalog_surface(name)
        if f.domain.kind == "punctured-plane" and not any(p.is_end for p in f.domain.punctures):
            assert not f.ends, name


def test_resolution_minimum():
    with pytest.raises(ValueError):
        sample_grid(sphere(), (4, 64))


# ---------------------------------------------------------------------------
# properties


@pytest.mark.parametrize("name", SMOOTH + [f"inverted_{n}" for n in SMOOTH])
def test_conformality_defect(name):
    f = make_catalog_surface(name)
    j = f.jet(_interior_points(f))
    g11 = np.einsum("...i,...i", j.d1[:, 0], j.d1[:, 0])
    g22 = np.einsum("...i,...i", j.d1[:, 1], j.d1[:, 1])
    assert np.all(conformality_defect(j) <= 1e-10 * (g11 + g22))


def test_perturbed_sphere_defect_is_reported_and_small():
    # normal perturbations keep g diagonal to first order: the defect is quadratic in eps
    pts = _interior_points(sphere())
    d = []
    for eps in (0.01, 0.02, 0.04):
        j = perturbed_sphere(eps).jet(pts)
        tr = np.einsum("...ai,...ai->...", j.d1, j.d1)
        d.append(np.max(conformality_defect(j) / tr))
    assert d[0] > 0
    assert d[1] / d[0] == pytest.approx(4.0, rel=0.1)
    assert d[2] / d[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("name", CATALOG)
def test_jets_match_finite_differences(name):
    """Central differences of positions approach the exact jets at order h^2."""
    f = make_catalog_surface(name)
    pts = _interior_points(f, n=6)
    j = f.jet(pts)

    def fd_err(h):
        e = np.eye(2) * h
        errs = []
        for a in range(2):
            fp, fm = f.jet(pts + e[a]).position, f.jet(pts - e[a]).position
            errs.append(np.abs((fp - fm) / (2 * h) - j.d1[:, a]).max())
            # second derivatives from differences of exact first derivatives
            dp, dm = f.jet(pts + e[a]).d1, f.jet(pts - e[a]).d1
            approx = (dp - dm) / (2 * h)
            errs.append(np.abs(approx[:, a] - j.d2[:, 2 * a]).max())
            errs.append(np.abs(approx[:, 1 - a] - j.d2[:, 1]).max())
        return max(errs)

    e3, e4 = fd_err(1e-3), fd_err(1e-4)
    if name == "chen_graph":
        # quadratic polynomial chart: central differences are exact, only rounding remains
        assert e3 < 1e-9 and e4 < 1e-9
        return
    assert 50 <= e3 / e4 <= 200


@pytest.mark.parametrize("name", SMOOTH)
def test_mixed_partial_symmetry(name):
    """d/du (df/dv) and d/dv (df/du) both match the single stored d12."""
    f = make_catalog_surface(name)
    pts = _interior_points(f, n=6)
    j = f.jet(pts)
    h = 1e-5
    e = np.eye(2) * h
    d_u_fv = (f.jet(pts + e[0]).d1[:, 1] - f.jet(pts - e[0]).d1[:, 1]) / (2 * h)
    d_v_fu = (f.jet(pts + e[1]).d1[:, 0] - f.jet(pts - e[1]).d1[:, 0]) / (2 * h)
    scale = 1 + np.abs(j.d2).max()
    assert np.abs(d_u_fv - j.d2[:, 1]).max() < 1e-6 * scale
    assert np.abs(d_v_fu - j.d2[:, 1]).max() < 1e-6 * scale


@given(st.floats(0.2, 5.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_sphere_positions_on_sphere(r, x, y):
    j = sphere(r).jet(np.array([[x, y]]))
    assert np.linalg.norm(j.position[0]) == pytest.approx(r, rel=1e-13)


@given(st.floats(-0.29, 0.29), st.integers(0, 4), st.data())
def test_perturbed_sphere_radial_profile(eps, l, data):
    m = data.draw(st.integers(-l, l))
    f = perturbed_sphere(eps, l, m)
    j = f.jet(np.array([[0.3, -0.7], [1.1, 0.4]]))
    r = np.linalg.norm(j.position, axis=-1)
    assert np.all(r > 0)
    assert np.all(np.abs(r - 1.0) <= abs(eps) * 10 + 1e-12)
