import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from robinheat.geometry import (
    Family,
    GeometryError,
    RadialGeometry,
    WarpingFunction,
    hypothesis_check,
    sn_eval,
    sn_ratio,
    space_form_r,
    space_form_s,
    substitution_for,
    unit_sphere_area,
    warped_curvatures,
)


# -- sn_kappa ---------------------------------------------------------------


@pytest.mark.parametrize(
    "kappa, exact",
    [
        (1.0, lambda r: np.sin(r)),
        (4.0, lambda r: np.sin(2 * r) / 2),
        (0.0, lambda r: r),
        (-1.0, lambda r: np.sinh(r)),
        (-0.25, lambda r: np.sinh(0.5 * r) / 0.5),
    ],
)
def test_sn_matches_closed_forms(kappa, exact):
    r = np.linspace(0.0, 1.5, 301)
    assert np.allclose(sn_eval(kappa, r), exact(r), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("kappa", [1.0, -1.0, 0.3])
def test_sn_derivative_matches_difference(kappa):
    r = np.linspace(0.1, 1.4, 50)
    h = 1e-6
    fd = (sn_eval(kappa, r + h) - sn_eval(kappa, r - h)) / (2 * h)
    assert np.allclose(sn_eval(kappa, r, 1), fd, rtol=1e-8)


@given(st.floats(1e-14, 1e-7), st.floats(0.0, 2.0))
def test_sn_continuous_across_zero_curvature(eps, r):
    # the series branch must agree with both signs of a tiny curvature
    for k in (eps, -eps):
        assert sn_eval(k, r) == pytest.approx(r, rel=1e-6, abs=1e-300)
        assert sn_eval(k, r, 1) == pytest.approx(1.0, rel=1e-6)


@given(st.floats(-4.0, 4.0), st.floats(0.01, 1.5))
@settings(max_examples=200)
def test_sn_solves_its_ode(kappa, r):
    h = 1e-4
    d2 = (sn_eval(kappa, r + h) - 2 * sn_eval(kappa, r) + sn_eval(kappa, r - h)) / h**2
    assert d2 + kappa * sn_eval(kappa, r) == pytest.approx(0.0, abs=1e-5 * max(1.0, abs(kappa)))


def test_sn_rejects_bad_input():
    with pytest.raises(GeometryError):
        sn_eval(1.0, 4.0)
    with pytest.raises(GeometryError):
        sn_eval(0.0, -1.0)
    with pytest.raises(GeometryError):
        sn_eval(0.0, 1.0, order=2)
    with pytest.raises(GeometryError):
        sn_eval(math.nan, 1.0)


def test_sn_ratio_flat_is_inverse_radius():
    r = np.linspace(0.1, 2.0, 20)
    assert np.allclose(sn_ratio(0.0, r), 1.0 / r)


@pytest.mark.parametrize("kappa", [1.0, 1e-9, 0.0, -1e-9, -2.0])
def test_space_form_s_is_integral_of_sn(kappa):
    for r in (1e-4, 0.3, 1.2):
        exact = quad(lambda x: sn_eval(kappa, x), 0.0, r, epsabs=1e-15, epsrel=1e-13)[0]
        assert float(space_form_s(kappa, r)) == pytest.approx(exact, rel=1e-11)


@given(st.floats(-3.0, 3.0), st.floats(0.0, 1.0))
@example(2.225073858507203e-309, 6.103515625e-05)
def test_space_form_inverse_roundtrip(kappa, r):
    s = space_form_s(kappa, np.array([r]))
    assert float(space_form_r(kappa, s)[0]) == pytest.approx(r, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("n, area", [(2, 2 * math.pi), (3, 4 * math.pi), (4, 2 * math.pi**2)])
def test_unit_sphere_area(n, area):
    assert unit_sphere_area(n) == pytest.approx(area, rel=1e-14)


# -- geometry validation and derived data -----------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family="real", m=3, kappa=1.0, R=math.pi, alpha=1.0),
        dict(family="kahler", m=2, kappa=1.0, R=math.pi / 2, alpha=1.0),
        dict(family="quaternion", m=1, kappa=4.0, R=0.8, alpha=1.0),
        dict(family="real", m=1, kappa=0.0, R=1.0, alpha=1.0),
        dict(family="real", m=3, kappa=0.0, R=0.0, alpha=1.0),
        dict(family="real", m=3, kappa=0.0, R=1.0, alpha=math.nan),
        dict(family="real", m=3, kappa=0.0, R=1.0, alpha=1.0, damping=-1.0),
        dict(family="warped", m=3, kappa=0.0, R=1.0, alpha=1.0),
    ],
)
def test_invalid_geometries_rejected(kwargs):
    with pytest.raises(GeometryError):
        RadialGeometry(**kwargs)


def test_warped_sn_beyond_first_zero_rejected():
    with pytest.raises(GeometryError):
        RadialGeometry.warped(3, WarpingFunction.sn(4.0), 2.0, 1.0)


@pytest.mark.parametrize(
    "geom",
    [
        RadialGeometry.real(3, 1.0, 1.0, 1.0),
        RadialGeometry.real(2, 0.0, 1.0, math.inf),
        RadialGeometry.kahler(2, -0.5, 1.0, 0.5, damping=0.25),
        RadialGeometry.warped(3, WarpingFunction.sn(-1.0), 1.0, 2.0),
    ],
)
def test_geometry_dict_roundtrip(geom):
    back = RadialGeometry.from_dict(geom.to_dict())
    assert back.to_dict() == geom.to_dict()


@pytest.mark.parametrize(
    "geom",
    [
        RadialGeometry.real(3, 1.0, 1.0, 1.0),
        RadialGeometry.kahler(2, 0.5, 1.0, 1.0),
        RadialGeometry.quaternion(2, -1.0, 1.0, 1.0),
        RadialGeometry.warped(4, WarpingFunction.sn(-0.5), 1.0, 1.0),
        RadialGeometry.real(3, 0.0, 1.0, 1.0, damping=0.7),
    ],
)
def test_drift_is_log_derivative_of_weight(geom):
    r = np.linspace(0.05, 0.95, 40)
    h = 1e-6
    fd = (np.log(geom.weight(r + h)) - np.log(geom.weight(r - h))) / (2 * h)
    assert np.allclose(geom.drift(r), fd, rtol=1e-7)


@given(st.floats(-4.0, 4.0), st.floats(0.0, 1.5))
@settings(max_examples=200)
def test_sn_pythagorean_identity(kappa, r):
    assert sn_eval(kappa, r, 1) ** 2 + kappa * sn_eval(kappa, r) ** 2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [1, 2, 4])
def test_flat_kahler_drift_is_euclidean(m):
    r = np.linspace(0.01, 1.0, 200)
    drift = RadialGeometry.kahler(m, 0.0, 1.0, 1.0).drift(r)
    assert np.allclose(drift, (2 * m - 1) / r, rtol=1e-12, atol=0.0)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_flat_kahler_and_quaternion_weights_are_euclidean(m):
    r = np.linspace(0.0, 1.0, 11)
    assert np.allclose(RadialGeometry.kahler(m, 0.0, 1.0, 1.0).weight(r), r ** (2 * m - 1))
    assert np.allclose(RadialGeometry.quaternion(m, 0.0, 1.0, 1.0).weight(r), r ** (4 * m - 1))
    assert RadialGeometry.kahler(m, 0.0, 1.0, 1.0).real_dim == 2 * m


def test_dirichlet_flag_and_with_alpha():
    g = RadialGeometry.real(3, 0.0, 1.0, 1.0)
    assert not g.dirichlet
    assert g.with_alpha(math.inf).dirichlet
    assert g.with_radius(0.5).R == 0.5


# -- sampled warping ------------------------------------------------------------


def _sampled_sinh(R=1.0, n=129):
    r = np.linspace(0.0, R, n)
    return WarpingFunction.sampled(R, np.sinh(r), np.cosh(r), np.sinh(r))


def test_sampled_warping_interpolates():
    w = _sampled_sinh()
    r = np.linspace(0.0, 1.0, 37)
    f, df, _ = w.evaluate(r)
    assert np.allclose(f, np.sinh(r), atol=1e-9)
    assert np.allclose(df, np.cosh(r), atol=1e-6)


def test_sampled_warping_validation():
    r = np.linspace(0.0, 1.0, 16)
    with pytest.raises(GeometryError):
        WarpingFunction.sampled(1.0, r + 0.1, np.ones_like(r), 0 * r)
    with pytest.raises(GeometryError):
        WarpingFunction.sampled(1.0, r[:4], np.ones(4), np.zeros(4))
    with pytest.raises(GeometryError):
        WarpingFunction.sampled(1.0, -r, -np.ones_like(r), 0 * r)


def test_sampled_warping_roundtrip_and_range():
    w = _sampled_sinh()
    back = WarpingFunction.from_dict(w.to_dict())
    assert np.allclose(back.samples[0], w.samples[0])
    with pytest.raises(GeometryError):
        w.evaluate(1.5)


# -- substitutions ----------------------------------------------------------------


@pytest.mark.parametrize(
    "geom",
    [
        RadialGeometry.kahler(2, 0.5, 1.0, 1.0),
        RadialGeometry.quaternion(1, -1.0, 1.0, 1.0),
        RadialGeometry.warped(3, _sampled_sinh(), 1.0, 1.0),
    ],
)
def test_substitution_matches_quadrature(geom):
    sub = substitution_for(geom)
    for r in (0.2, 0.7, 1.0):
        exact = quad(lambda x: float(sub.speed(np.array([x]))[0]), 0.0, r, epsabs=1e-14, epsrel=1e-12)[0]
        assert float(sub.s_of_r(np.array([r]))[0]) == pytest.approx(exact, rel=1e-9)
    s = np.linspace(0.0, sub.s_max, 50)
    assert np.allclose(sub.s_of_r(sub.r_of_s(s)), s, rtol=1e-10, atol=1e-13)


def test_speed_prime_matches_drift_relation():
    geom = RadialGeometry.kahler(2, 0.5, 1.0, 1.0)
    sub = substitution_for(geom)
    r = np.linspace(0.1, 0.9, 30)
    h = 1e-6
    fd = (sub.speed(r + h) - sub.speed(r - h)) / (2 * h)
    assert np.allclose(sub.speed_prime(r), fd, rtol=1e-7)


def test_space_form_substitution_uses_closed_form():
    geom = RadialGeometry.real(3, 1.0, 1.0, 1.0)
    sub = substitution_for(geom)
    assert sub.s_max == pytest.approx(1.0 - math.cos(1.0), rel=1e-14)


def test_damped_geometry_has_no_substitution():
    with pytest.raises(GeometryError):
        substitution_for(RadialGeometry.real(3, 0.0, 1.0, 1.0, damping=0.3))


# -- curvature hypotheses ---------------------------------------------------------


@pytest.mark.parametrize("kappa", [-1.0, 0.0, 1.0])
def test_space_form_curvatures_are_constant(kappa):
    r = np.linspace(0.05, 1.0, 20)
    k_rad, k_tan = warped_curvatures(WarpingFunction.sn(kappa), r)
    assert np.allclose(k_rad, kappa, atol=1e-12)
    assert np.allclose(k_tan, kappa, atol=1e-6)


@pytest.mark.parametrize(
    "f_kappa, model_kappa, mode, m, expect",
    [
        (1.0, 0.0, "RicciLower", 2, True),
        (1.0, 0.0, "RicciLower", 3, True),
        (0.0, 1.0, "RicciLower", 3, False),
        (-1.0, 0.0, "SectUpper", 2, True),
        (-1.0, 0.0, "SectUpper", 3, True),
        (1.0, 0.0, "SectUpper", 3, False),
        (0.5, 0.5, "RicciLower", 3, True),
    ],
)
def test_hypothesis_check_on_space_forms(f_kappa, model_kappa, mode, m, expect):
    rep = hypothesis_check(WarpingFunction.sn(f_kappa), model_kappa, mode, m, 1.0)
    assert rep.passed is expect
    if f_kappa != model_kappa:
        sign = 1 if expect else -1
        # Ricci slack is (m-1)(kappa' - kappa); sectional slack is kappa - kappa'
        scale = (m - 1) if mode == "RicciLower" else 1
        assert rep.margin == pytest.approx(sign * scale * abs(f_kappa - model_kappa), rel=1e-5)


def test_hypothesis_check_on_sampled_warping():
    # curvature of sinh is -1, so a model at -1/2 leaves slack 1/2
    rep = hypothesis_check(_sampled_sinh(), -0.5, "SectUpper", 3, 1.0)
    assert rep.passed
    assert rep.margin == pytest.approx(0.5, abs=1e-3)
    assert rep.excluded_below == pytest.approx(1.0 / 512)
    assert Family("warped") == Family.WARPED


# -- worked examples -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kappa, r, expected",
    [(0.0, 2.0, 2.0), (1.0, math.pi / 2, 1.0), (-1.0, 1.0, 1.1752011936438014)],
)
def test_sn_worked_values(kappa, r, expected):
    assert float(sn_eval(kappa, r)) == pytest.approx(expected, rel=1e-14)


def test_substitution_worked_values():
    assert float(space_form_s(0.0, 2.0)) == pytest.approx(2.0)
    assert float(space_form_s(1.0, math.pi / 2)) == pytest.approx(1.0, rel=1e-14)
    for m in (1, 2, 3):
        sub = substitution_for(RadialGeometry.kahler(m, 0.0, 1.5, 1.0))
        r = np.linspace(0.0, 1.5, 13)
        assert np.allclose(sub.speed(r), r, atol=1e-14)
        assert np.allclose(sub.s_of_r(r), r * r / 2, rtol=1e-10, atol=1e-14)
