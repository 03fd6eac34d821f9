import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidlab.moebius import MoebiusTransform, pushforward
from rigidlab.quadrature import build_grid
from rigidlab.sobolev import (
    WeightedDistance,
    inversion_comparability,
    weighted_distance,
    weighted_norm,
)
from rigidlab.surface import catenoid, clifford_torus, make_catalog_surface, perturbed_sphere, sphere


@pytest.fixture(scope="module")
def grid128():
    return build_grid(sphere().domain, (128, 128))


@pytest.fixture(scope="module")
def grid32():
    return build_grid(sphere().domain, (32, 32))


def _rotation(rng, n=3):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def _member(rng):
    l = int(rng.integers(2, 4))
    return perturbed_sphere(float(rng.uniform(-0.2, 0.2)), l, int(rng.integers(-l, l + 1)))


# ---------------------------------------------------------------------------
# weighted norm


def test_sphere_norm_finite_and_dilation_invariant(grid128):
    n1 = weighted_norm(sphere(1.0), grid128)
    assert math.isfinite(n1.value) and n1.value > 0
    for lam in (0.5, 3.0, 17.0):
        n2 = weighted_norm(pushforward(sphere(1.0), MoebiusTransform.dilation(lam, 3)), grid128)
        assert abs(n2.value - n1.value) <= 1e-10 * n1.value


def test_sphere_radii_have_equal_norms(grid128):
    a = weighted_norm(sphere(1.0), grid128).value
    b = weighted_norm(sphere(2.0), grid128).value
    assert abs(a - b) <= 1e-10 * a


def test_catenoid_norm_stable_under_doubling():
    f = catenoid(V=5)
    a = weighted_norm(f, build_grid(f.domain, (256, 64))).value
    b = weighted_norm(f, build_grid(f.domain, (512, 128))).value
    assert math.isfinite(a)
    assert abs(a - b) <= 1e-6 * b


def test_norm_is_not_translation_invariant(grid128):
    # the |f|^2 term moves with the image; only comparability survives
    a = weighted_norm(sphere(1.0), grid128).value
    b = weighted_norm(pushforward(sphere(1.0), MoebiusTransform.translation_by([2.0, 0, 0])), grid128).value
    assert abs(a - b) > 1e-3 * a


def test_components_sum_to_square(grid32):
    d = weighted_norm(perturbed_sphere(0.1), grid32)
    assert d.value ** 2 == pytest.approx(sum(d.components), rel=1e-14)
    assert all(c >= 0 for c in d.components)
    assert set(d.to_json()["components"]) == {"zeroth", "first", "second"}


def test_negative_component_rejected():
    with pytest.raises(ValueError):
        WeightedDistance(1.0, (1.0, -0.5, 0.5), "x", "g")


def test_weight_handles_branch_exclusions():
    f = make_catalog_surface("inverted_enneper")
    d = weighted_norm(f, build_grid(f.domain, (32, 32)))
    assert math.isfinite(d.value)


# ---------------------------------------------------------------------------
# weighted distance


def test_distance_to_itself_is_zero(grid128):
    assert weighted_distance(sphere(1.0), sphere(1.0), grid128).value == 0.0


def test_perturbed_sphere_distance_linear_in_eps(grid128):
    eps = [0.01, 0.02, 0.03, 0.04, 0.05]
    # the l = 2 perturbation has zero mean, so the unit sphere is the best fit to first order
    d = [weighted_distance(perturbed_sphere(e, 2, 0), sphere(1.0), grid128).value for e in eps]
    assert all(x > 0 for x in d)
    assert all(b > a for a, b in zip(d, d[1:]))
    ratios = [x / e for x, e in zip(d, eps)]
    a = min(ratios)
    assert max(ratios) <= 2 * a


@pytest.mark.parametrize("seed", range(5))
def test_common_similarity_invariance(seed, grid128):
    rng = np.random.default_rng(seed)
    f, g = perturbed_sphere(0.1, 2, 0), perturbed_sphere(0.05, 3, 1)
    S = MoebiusTransform(_rotation(rng), float(rng.uniform(0.2, 5.0)), rng.normal(size=3) * 3)
    d0 = weighted_distance(f, g, grid128).value
    d1 = weighted_distance(pushforward(f, S), pushforward(g, S), grid128).value
    assert abs(d1 - d0) <= 1e-10 * d0


def test_domain_mismatch(grid32):
    with pytest.raises(ValueError, match="domain"):
        weighted_distance(sphere(), catenoid(), grid32)
    with pytest.raises(ValueError):
        weighted_distance(clifford_torus(), make_catalog_surface("catenoid"), grid32)


def test_triangle_inequality_100_triples(grid32):
    rng = np.random.default_rng(42)
    src = sphere(1.0)
    worst = -math.inf
    for _ in range(100):
        a, b, c = _member(rng), _member(rng), _member(rng)
        ab = weighted_distance(a, b, grid32, src).value
        bc = weighted_distance(b, c, grid32, src).value
        ac = weighted_distance(a, c, grid32, src).value
        worst = max(worst, ac - ab - bc)
    assert worst <= 1e-9


@settings(max_examples=15)
@given(st.floats(-0.25, 0.25), st.floats(-0.25, 0.25))
def test_symmetry_with_fixed_weight_source(e1, e2):
    grid = build_grid(sphere().domain, (16, 16))
    a, b = perturbed_sphere(e1, 2, 0), perturbed_sphere(e2, 3, -1)
    src = sphere(1.0)
    assert weighted_distance(a, b, grid, src).value == pytest.approx(weighted_distance(b, a, grid, src).value,
                                                                     rel=1e-13, abs=1e-15)


def test_default_weight_source_is_first_argument(grid32):
    a, b = perturbed_sphere(0.2, 2, 0), sphere(1.0)
    d = weighted_distance(a, b, grid32)
    assert d.weight_source == "perturbed_sphere"
    assert d.value == weighted_distance(a, b, grid32, a).value


# ---------------------------------------------------------------------------
# inversion comparability


def test_comparability_identity_convention(grid128):
    rec = inversion_comparability(sphere(1.0), sphere(1.0), (0.0, 0.0, 3.0), grid128)
    assert rec.ratio == 1.0


def test_comparability_perturbed_pair(grid128):
    rec = inversion_comparability(perturbed_sphere(0.02), sphere(1.0), (0.0, 0.0, 3.0), grid128)
    assert 1e-2 <= rec.ratio <= 1e2
    assert rec.in_band
    assert rec.g_range[0] >= 1.0 and rec.g0_range[0] >= 1.0


def test_comparability_stabilizes(grid128):
    eps = [0.04, 0.02, 0.01, 0.005]
    r = [inversion_comparability(perturbed_sphere(e), sphere(1.0), (0.0, 0.0, 3.0), grid128).ratio for e in eps]
    steps = [abs(b - a) for a, b in zip(r, r[1:])]
    assert all(b < a for a, b in zip(steps, steps[1:]))
    assert all(1e-3 <= x <= 1e3 for x in r)


def test_comparability_center_inside_unit_ball(grid128):
    with pytest.raises(ValueError, match="unit ball"):
        inversion_comparability(perturbed_sphere(0.02), sphere(1.0), (0.0, 0.0, 0.8), grid128)


def test_comparability_strict_band(grid128):
    with pytest.raises(ArithmeticError):
        inversion_comparability(perturbed_sphere(0.02), sphere(1.0), (0.0, 0.0, 3.0), grid128,
                                c_star=1.0 + 1e-12, strict=True)
