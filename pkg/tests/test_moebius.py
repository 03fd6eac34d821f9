import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rigidlab.diffgeo import branch_order_estimate
from rigidlab.functionals import energy_report, grid_for
from rigidlab.moebius import (
    MoebiusTransform,
    PoleError,
    apply,
    compose,
    compose_chain,
    derivative,
    fit_moebius,
    inverse,
    inversion_bracket,
    inversion_ledger,
    push_jet,
    pushforward,
    safe_inversion_center,
    special_conformal,
)
from rigidlab.surface import CATALOG, INF, catenoid, clifford_torus, make_catalog_surface, sphere
from test_surface_core import _interior_points

PI = math.pi


def _rotation(rng, n=3):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def _random_transform(rng, n=3, inversion=None):
    inv = rng.random() < 0.5 if inversion is None else inversion
    x0 = rng.normal(size=n) if inv else None
    return MoebiusTransform(_rotation(rng, n), float(rng.uniform(0.3, 3.0)), rng.normal(size=n), x0)


def _pole_distance(T, y):
    return math.inf if not T.has_inversion else float(np.linalg.norm(y - T.inversion_center))


# ---------------------------------------------------------------------------
# apply


def test_unit_inversion_of_point():
    I0 = MoebiusTransform.inversion(np.zeros(3))
    np.testing.assert_allclose(apply(I0, [2.0, 0.0, 0.0]), [0.5, 0.0, 0.0], atol=1e-16)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_inversion_is_involution(y):
    y = np.array(y)
    assume(np.linalg.norm(y) > 1e-3)
    I0 = MoebiusTransform.inversion(np.zeros(3))
    np.testing.assert_allclose(apply(I0, apply(I0, y)), y, rtol=1e-12, atol=1e-12)


def test_translation():
    c = np.array([1.0, -2.0, 0.5])
    y = np.array([0.3, 0.4, 0.5])
    np.testing.assert_allclose(apply(MoebiusTransform.translation_by(c), y), y + c, atol=1e-15)


def test_pole_raises():
    T = MoebiusTransform.inversion([1.0, 2.0, 3.0])
    with pytest.raises(ZeroDivisionError):
        apply(T, [1.0, 2.0, 3.0])


def test_factorization_order():
    rng = np.random.default_rng(3)
    T = _random_transform(rng, inversion=True)
    y = rng.normal(size=3)
    x0 = T.inversion_center
    d = y - x0
    expected = T.translation + T.scale * T.rotation @ (x0 + d / (d @ d))
    np.testing.assert_allclose(apply(T, y), expected, rtol=1e-14)


def test_invalid_transforms():
    with pytest.raises(ValueError):
        MoebiusTransform(np.array([[1.0, 1.0, 0], [0, 1, 0], [0, 0, 1]]), 1.0, np.zeros(3))
    with pytest.raises(ValueError):
        MoebiusTransform(np.eye(3), 0.0, np.zeros(3))


def test_json_roundtrip():
    T = _random_transform(np.random.default_rng(0), inversion=True)
    S = MoebiusTransform.from_json(T.to_json())
    y = np.array([0.1, 0.2, -0.3])
    np.testing.assert_allclose(apply(S, y), apply(T, y), rtol=1e-15)
    d = T.to_json()
    assert set(d) == {"rotation", "scale", "translation", "inversion_center"}
    assert len(d["rotation"]) == 9


# ---------------------------------------------------------------------------
# group laws


@pytest.mark.parametrize("seed", range(100))
def test_composition_law(seed):
    rng = np.random.default_rng(seed)
    S, T = _random_transform(rng), _random_transform(rng)
    y = rng.normal(size=3)
    assume_ok = _pole_distance(T, y) > 0.05
    if not assume_ok:
        y = y + 1.0
    Ty = apply(T, y)
    if _pole_distance(S, Ty) < 0.05:
        Ty_shift = S.inversion_center + 0.5
        y = apply(inverse(T), Ty_shift)
        Ty = apply(T, y)
    ST = compose(S, T)
    lhs, rhs = apply(ST, y), apply(S, Ty)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * (1 + np.linalg.norm(rhs))


@pytest.mark.parametrize("seed", range(30))
def test_inverse_law(seed):
    rng = np.random.default_rng(1000 + seed)
    T = _random_transform(rng)
    y = rng.normal(size=3)
    if _pole_distance(T, y) < 0.05:
        y = y + 1.0
    Ti = inverse(T)
    back = apply(Ti, apply(T, y))
    assert np.linalg.norm(back - y) <= 1e-10 * (1 + np.linalg.norm(y))


@pytest.mark.parametrize("seed", range(10))
def test_chain_and_associativity(seed):
    rng = np.random.default_rng(2000 + seed)
    ts = [_random_transform(rng) for _ in range(3)]
    y = rng.normal(size=3) * 0.1 + 5.0
    direct = y
    for t in ts:
        direct = apply(t, direct)
    via_chain = apply(compose_chain(ts), y)
    via_pairs = apply(compose(ts[2], compose(ts[1], ts[0])), y)
    for v in (via_chain, via_pairs):
        assert np.linalg.norm(v - direct) <= 1e-9 * (1 + np.linalg.norm(direct))


def test_rotation_stays_orthogonal_under_composition():
    rng = np.random.default_rng(7)
    T = _random_transform(rng, inversion=True)
    for _ in range(5):
        T = compose(_random_transform(rng), T)
        R = T.rotation
        assert np.abs(R.T @ R - np.eye(3)).max() <= 1e-12
        assert T.scale > 0


def test_special_conformal_fixes_origin():
    K = special_conformal([0.3, -0.2, 0.1])
    np.testing.assert_allclose(apply(K, np.zeros(3)), 0.0, atol=1e-12)


def test_derivative_is_conformal():
    rng = np.random.default_rng(11)
    T = _random_transform(rng, inversion=True)
    y = T.inversion_center + np.array([0.4, -0.3, 0.2])
    D = derivative(T, y)
    G = D.T @ D
    np.testing.assert_allclose(G, G[0, 0] * np.eye(3), atol=1e-12 * G[0, 0])
    h = 1e-6
    fd = np.stack([(apply(T, y + h * e) - apply(T, y - h * e)) / (2 * h) for e in np.eye(3)], 1)
    np.testing.assert_allclose(fd, D, rtol=1e-6, atol=1e-8)


def test_fit_moebius_recovers_transform():
    rng = np.random.default_rng(4)
    T = _random_transform(rng, inversion=True)
    x = rng.normal(size=(12, 3)) + 4.0
    sigma, resid = fit_moebius(x, apply(T, x))
    assert resid < 1e-8
    y = rng.normal(size=3) + 4.0
    np.testing.assert_allclose(apply(sigma, y), apply(T, y), rtol=1e-7)


# ---------------------------------------------------------------------------
# pushforward


def test_dilated_sphere_willmore_invariant():
    g = pushforward(sphere(1.0), MoebiusTransform.dilation(2.0, 3))
    rep = energy_report(g)
    assert rep.willmore == pytest.approx(4 * PI, abs=1e-6)
    assert rep.area == pytest.approx(16 * PI, rel=1e-8)


def test_inverted_catenoid_total_curvature():
    f = catenoid(20)
    x0 = safe_inversion_center(f).center
    rep = energy_report(pushforward(f, MoebiusTransform.inversion(x0)))
    assert rep.total_sff == pytest.approx(24 * PI, rel=0.01)


def test_inverted_enneper_branch_order():
    f = make_catalog_surface("enneper")
    g = pushforward(f, MoebiusTransform.inversion(safe_inversion_center(f).center))
    (p,) = [m for m in g.marked_points if m.kind == "branch"]
    assert p.location == INF
    assert branch_order_estimate(g, p).order == 2


def test_pushforward_metadata():
    f = catenoid(20)
    x0 = safe_inversion_center(f).center
    g = pushforward(f, MoebiusTransform.inversion(x0))
    assert g.domain.kind == "punctured-plane"
    assert not g.ends
    pre = [m for m in g.marked_points if m.kind == "multiplicity-point-preimage"]
    assert len(pre) == 2
    # both preimages land on the image of infinity, which is x0
    for m in pre:
        np.testing.assert_allclose(m.image, x0, atol=1e-12)


@pytest.mark.parametrize("name", ["sphere", "catenoid", "enneper", "chen_graph"])
def test_pushforward_center_on_surface(name):
    f = make_catalog_surface(name)
    pts = _interior_points(f, 3)
    x0 = f.jet(pts[:1]).position[0]
    with pytest.raises(PoleError, match="distance"):
        pushforward(f, MoebiusTransform.inversion(x0))


def test_center_at_straddled_point():
    # the Enneper origin is the image of z = 0, which the grid does not sample
    with pytest.raises(PoleError):
        pushforward(make_catalog_surface("enneper"), MoebiusTransform.inversion(np.zeros(3)))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        pushforward(sphere(), MoebiusTransform.identity(4))


@pytest.mark.parametrize("name", ["sphere", "catenoid", "enneper", "chen_graph", "clifford_torus"])
def test_pushforward_jets_match_finite_differences(name):
    f = make_catalog_surface(name)
    T = MoebiusTransform(_rotation(np.random.default_rng(5), f.ambient_dim), 1.3,
                         np.ones(f.ambient_dim), safe_inversion_center(f).center)
    g = pushforward(f, T)
    pts = _interior_points(f, 6)
    j = g.jet(pts)

    def fd_err(h):
        e = np.eye(2) * h
        errs = []
        for a in range(2):
            jp, jm = g.jet(pts + e[a]), g.jet(pts - e[a])
            errs.append(np.abs((jp.position - jm.position) / (2 * h) - j.d1[:, a]).max())
            d = (jp.d1 - jm.d1) / (2 * h)
            errs.append(np.abs(d[:, a] - j.d2[:, 2 * a]).max())
        return max(errs)

    assert 50 <= fd_err(1e-3) / fd_err(1e-4) <= 200


@pytest.mark.parametrize("seed", range(5))
def test_push_jet_chain_rule(seed):
    rng = np.random.default_rng(seed)
    T = _random_transform(rng, inversion=True)
    f = sphere(1.0)
    pts = np.array([[0.3, 0.2]])
    j = f.jet(pts)
    if _pole_distance(T, j.position[0]) < 0.2:
        T = MoebiusTransform(T.rotation, T.scale, T.translation, T.inversion_center + 2.0)
    pj = push_jet(T, j)
    np.testing.assert_allclose(pj.position[0], apply(T, j.position[0]), rtol=1e-13)
    np.testing.assert_allclose(pj.d1[0], (derivative(T, j.position[0]) @ j.d1[0].T).T, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ["sphere", "catenoid", "enneper", "chen_graph", "clifford_torus"])
def test_similarity_invariance_of_energies(name):
    f = make_catalog_surface(name)
    n = f.ambient_dim
    rng = np.random.default_rng(8)
    g = pushforward(f, MoebiusTransform(_rotation(rng, n), 1.7, rng.normal(size=n)))
    a, b = energy_report(f), energy_report(g)
    for k in ("willmore", "total_sff", "total_gauss"):
        assert abs(a.value(k) - b.value(k)) <= a.bound(k) + b.bound(k) + 1e-10 * (1 + abs(a.value(k)))


# ---------------------------------------------------------------------------
# safe centres


def test_safe_center_sphere():
    sc = safe_inversion_center(sphere(1.0))
    assert sc.normalization == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(sc.center) >= 2.0 - 1e-9
    assert sc.distance >= 1.0 - 1e-9


def test_safe_center_catenoid_on_axis():
    sc = safe_inversion_center(catenoid(20))
    assert sc.normalization == pytest.approx(1.0, rel=1e-9)
    np.testing.assert_allclose(sc.center[:2], 0.0, atol=1e-12)
    assert sc.distance >= 1.0 - 1e-9


def test_safe_center_clifford():
    f = clifford_torus()
    sc = safe_inversion_center(f)
    pos = f.jet(grid_for(f).nodes).position * sc.normalization
    assert np.min(np.linalg.norm(pos - sc.center * sc.normalization, axis=1)) >= 1.0 - 1e-9


@pytest.mark.parametrize("name", CATALOG)
def test_safe_center_exists_for_catalog(name):
    f = make_catalog_surface(name)
    sc = safe_inversion_center(f, rng=np.random.default_rng(0))
    assert sc.distance >= 1.0 - 1e-9
    assert sc.candidates > 0


# ---------------------------------------------------------------------------
# ledger


@pytest.mark.parametrize("name,bracket,sff,will,gauss", [
    ("catenoid", 2, 24 * PI, 8 * PI, 4 * PI),
    ("enneper", 3, 32 * PI, 12 * PI, 8 * PI),
    ("chen_graph", 2, 20 * PI, 8 * PI, 6 * PI),
])
def test_inversion_ledger_examples(name, bracket, sff, will, gauss):
    f = make_catalog_surface(name)
    assert inversion_bracket(f) == bracket
    led = inversion_ledger(f, safe_inversion_center(f).center)
    assert led.bracket == bracket
    targets = {"total_sff": sff, "willmore": will, "total_gauss": gauss}
    for k, t in targets.items():
        assert led.predicted[k] == pytest.approx(t, rel=1e-3)
        assert led.measured[k] == pytest.approx(t, rel=0.01)
        assert led.agrees[k], (k, led)


@pytest.mark.parametrize("name", CATALOG)
def test_ledger_consistency_random_centers(name):
    rng = np.random.default_rng(5)
    f = make_catalog_surface(name)
    base = energy_report(f)
    for _ in range(5):
        led = inversion_ledger(f, safe_inversion_center(f, rng=rng).center, base_report=base)
        assert all(led.agrees.values()), led


def test_reinversion_at_double_point():
    """Experimental: centre on the image, with preimage multiplicities supplied."""
    g = make_catalog_surface("inverted_catenoid")
    x0 = np.asarray(g.marked_points[0].image)
    pre = [(m.location, 0) for m in g.marked_points if m.kind == "multiplicity-point-preimage"]
    assert inversion_bracket(g, pre) == -2
    led = inversion_ledger(g, x0, preimages=pre)
    for k, t in (("total_sff", 8 * PI), ("willmore", 0.0), ("total_gauss", -4 * PI)):
        assert led.predicted[k] == pytest.approx(t, abs=0.01 * 8 * PI)
        assert led.relative_error[k] <= 0.01
