import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robinheat.geometry import RadialGeometry
from robinheat.heat import (
    HeatKernelField,
    TimeGrid,
    TruncationError,
    kernel_spectral,
    kernel_timestep,
    log_slope,
    phi2_centre_formula,
    propagate,
    roundoff_bound,
    substituted_diagnostics,
    t_min,
)
from robinheat.sturm import PreconditionError, solve

FLAT = RadialGeometry.real(3, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def flat_spec():
    return solve(FLAT, 2049, 300)


# -- time grids -----------------------------------------------------------------


@pytest.mark.parametrize("times", [[], [0.0, 1.0], [0.2, 0.1], [0.1, math.nan], [[0.1]]])
def test_time_grid_rejects_invalid(times):
    with pytest.raises(ValueError):
        TimeGrid.of(times)


def test_time_grid_geometric():
    g = TimeGrid.geometric(0.01, 1.0, 5)
    assert g.array[0] == pytest.approx(0.01)
    assert g.array[-1] == pytest.approx(1.0)
    assert np.allclose(np.diff(np.log(g.array)), math.log(10) / 2)


# -- spectral kernel ------------------------------------------------------------


def test_short_time_centre_value_is_euclidean(flat_spec):
    t = 0.01
    field = kernel_spectral(flat_spec, TimeGrid.of([t]))
    assert field.values[0, 0] == pytest.approx((4 * math.pi * t) ** -1.5, rel=0.05)


def test_long_time_first_mode_dominates(flat_spec):
    lam = flat_spec.lambdas
    t = 20.0 / (lam[1] - lam[0])
    field = kernel_spectral(flat_spec, TimeGrid.of([t]))
    scaled = math.exp(lam[0] * t) * field.values[0]
    target = flat_spec.centre_values[0] * flat_spec.modes[:, 0]
    assert np.max(np.abs(scaled - target) / np.abs(target)) < 1e-6


@pytest.mark.parametrize("kappa", [-1.0, 0.0, 1.0])
def test_neumann_kernel_has_unit_mass(kappa):
    spec = solve(RadialGeometry.real(3, kappa, 1.0, 0.0), 1025, 200)
    field = kernel_spectral(spec, TimeGrid.geometric(0.01, 2.0, 9))
    assert np.allclose(field.mass(), 1.0, atol=1e-6)


def test_robin_mass_decreases(flat_spec):
    field = kernel_spectral(flat_spec, TimeGrid.geometric(0.01, 2.0, 9))
    mass = field.mass()
    assert np.all(np.diff(mass) < 0)
    assert np.all(mass < 1.0)


def test_exact_time_derivative_matches_heat_equation(flat_spec):
    field = kernel_spectral(flat_spec, TimeGrid.of([0.05, 0.2, 1.0]))
    op = flat_spec.op
    rhs = np.array([-op.apply(row) for row in field.values])
    assert np.allclose(field.dt_values, rhs, atol=1e-8 * np.abs(field.values).max())


def test_times_below_truncation_limit_refused():
    spec = solve(FLAT, 257, 20)
    tmin = t_min(spec)
    with pytest.raises(TruncationError):
        kernel_spectral(spec, TimeGrid.of([tmin / 4, 1.0]))
    kernel_spectral(spec, TimeGrid.of([tmin * 1.01]))


def test_log_slope_approaches_lambda1(flat_spec):
    lam = flat_spec.lambdas
    t = 14.0 / (lam[1] - lam[0])
    # second-mode contamination is about exp(-14) times an amplitude ratio
    assert log_slope(flat_spec, t) == pytest.approx(lam[0], rel=1e-3)
    assert log_slope(flat_spec, 2 * t) == pytest.approx(lam[0], rel=1e-8)


def test_roundoff_bound_covers_unresolvable_gap():
    # at t = 0.02 the centre of the unit ball sees alpha only through ~exp(-50)
    t = [0.02]
    a, b = solve(FLAT, 1025), solve(FLAT.with_alpha(2.0), 1025)
    gap = kernel_spectral(a, TimeGrid.of(t)).values[0] - kernel_spectral(b, TimeGrid.of(t)).values[0]
    bound = roundoff_bound(a, t)[0] + roundoff_bound(b, t)[0]
    assert abs(gap[0]) < bound
    assert bound < 1e-8
    assert np.all(np.diff(roundoff_bound(a, [0.05, 0.2, 1.0])) < 0)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
@settings(max_examples=25, deadline=None)
def test_semigroup_property(s, t):
    spec = solve(FLAT, 513, 120)
    # H(., s + t) = P_t H(., s)
    both = kernel_spectral(spec, TimeGrid.of([s + t])).values[0]
    first = kernel_spectral(spec, TimeGrid.of([s])).values[0]
    assert np.allclose(propagate(spec, first, t), both, rtol=1e-8, atol=1e-10 * np.abs(both).max())


@given(st.floats(0.02, 1.0))
@settings(max_examples=20, deadline=None)
def test_kernel_positive_and_radially_decreasing(t):
    spec = solve(RadialGeometry.real(3, 1.0, 1.0, 2.0), 513, 120)
    H = kernel_spectral(spec, TimeGrid.of([t])).values[0]
    assert np.all(H > 0)
    assert np.all(np.diff(H) < 0)


def test_json_and_csv_roundtrip(flat_spec):
    field = kernel_spectral(solve(FLAT, 129, 30), TimeGrid.of([0.1, 0.5]))
    back = HeatKernelField.from_json(json.loads(json.dumps(field.to_json())))
    assert np.array_equal(back.values, field.values)
    assert back.geom == field.geom
    rows = field.to_csv().splitlines()
    assert rows[0] == "r,t,H"
    assert len(rows) == 1 + 2 * 129
    with pytest.raises(ValueError):
        HeatKernelField.from_json({"schema": 99})


# -- Crank-Nicolson ------------------------------------------------------------------


@pytest.fixture(scope="module")
def flat_cn():
    return kernel_timestep(FLAT, TimeGrid.of([0.05, 0.1, 0.2, 0.5, 1.0]), N=2049)


def _assert_mass_decreasing(history):
    # the wall value of the mollified start is ~exp(-R^2/(4t)), so while
    # t < 0.01 a step loses less mass than one ulp; after that it is strict
    t, mass = history[:, 0], history[:, 1]
    d = np.diff(mass)
    assert np.all(d <= 4 * np.finfo(float).eps)
    assert np.all(d[t[1:] >= 0.01] < 0)


def test_timestep_agrees_with_spectral(flat_spec, flat_cn):
    ref = kernel_spectral(flat_spec, TimeGrid.of(flat_cn.t))
    rel = np.abs(flat_cn.values - ref.values) / np.abs(ref.values)
    assert rel.max() < 1e-3


def test_timestep_mass_identity(flat_cn):
    assert flat_cn.info["mass_identity_max_abs"] < 1e-10
    _assert_mass_decreasing(flat_cn.mass_history)


def test_timestep_neumann_conserves_mass_each_step():
    geom = RadialGeometry.real(3, 0.0, 1.0, 0.0)
    field = kernel_timestep(geom, TimeGrid.of([0.05, 0.5]), N=513)
    hist = field.mass_history[:, 1]
    assert np.abs(np.diff(hist)).max() < 1e-10
    assert hist[0] == pytest.approx(1.0, abs=1e-10)


def test_timestep_dirichlet_mass_strictly_decreasing():
    geom = RadialGeometry.real(3, 0.0, 1.0, math.inf)
    field = kernel_timestep(geom, TimeGrid.of([0.05, 0.3]), N=513)
    _assert_mass_decreasing(field.mass_history)
    assert field.mass_history[0, 1] <= 1.0
    assert np.all(field.values[:, -1] == 0.0)


def test_timestep_lands_on_requested_times():
    field = kernel_timestep(FLAT, TimeGrid.of([0.05, 0.0731, 0.2]), N=257)
    assert np.array_equal(field.t, [0.05, 0.0731, 0.2])
    steps_t = field.mass_history[:, 0]
    for target in field.t:
        assert np.min(np.abs(steps_t - target)) < 1e-12


def test_timestep_validation():
    with pytest.raises(ValueError):
        kernel_timestep(FLAT, TimeGrid.of([0.1]), mollifier_width=1e-4, N=257)
    with pytest.raises(ValueError):
        kernel_timestep(FLAT, TimeGrid.of([1e-5]), N=257)


# -- substituted kernel ---------------------------------------------------------------


def test_flat_sign_suite_at_t_one_tenth(flat_spec):
    field = kernel_spectral(flat_spec, TimeGrid.of([0.1]))
    diag = substituted_diagnostics(field)
    assert diag.gate_met
    assert all(v.status == "pass" for v in diag.verdicts), [v for v in diag.verdicts if v.status != "pass"]


def test_centre_second_derivative_formula(flat_spec):
    field = kernel_spectral(flat_spec, TimeGrid.of([0.2]))
    diag = substituted_diagnostics(field)
    formula = phi2_centre_formula(flat_spec, [0.2])[0]
    assert diag.phi2_centre_fd[0] == pytest.approx(formula, rel=0.01)
    assert formula > 0


@pytest.mark.parametrize("kappa", [-1.0, 1.0])
def test_curved_sign_suite(kappa):
    # radius 0.7 sits inside the positivity gate for kappa = 1, alpha = 1
    spec = solve(RadialGeometry.real(3, kappa, 0.7, 1.0), 2049, 300)
    diag = substituted_diagnostics(kernel_spectral(spec, TimeGrid.of([0.05, 0.2, 1.0])))
    assert all(v.status == "pass" for v in diag.verdicts)
    assert np.all(diag.k3_residual < 1e-3)


def test_gate_unmet_marks_verdicts_empirical():
    spec = solve(RadialGeometry.real(3, 1.0, 1.2, 1.0), 1025, 200)
    diag = substituted_diagnostics(kernel_spectral(spec, TimeGrid.of([0.2])))
    assert not diag.gate_met
    second = [v for v in diag.verdicts if v.name.startswith("phi''") and "formula" not in v.name]
    assert second and all(v.status.startswith("empirical-") for v in second)


def test_scaled_derivatives():
    spec = solve(RadialGeometry.real(3, 1.0, 0.7, 1.0), 513, 100)
    diag = substituted_diagnostics(kernel_spectral(spec, TimeGrid.of([0.3])))
    assert np.allclose(diag.phi1, math.exp(3 * 0.3) * diag.dphi)
    assert np.allclose(diag.phi2, math.exp(8 * 0.3) * diag.d2phi)


def test_substituted_diagnostics_preconditions():
    spec = solve(RadialGeometry.real(3, 0.0, 1.0, math.inf), 257, 40)
    with pytest.raises(PreconditionError):
        substituted_diagnostics(kernel_spectral(spec, TimeGrid.of([0.5])))
    kspec = solve(RadialGeometry.kahler(2, 0.0, 1.0, 1.0), 1025, 40)
    with pytest.raises(PreconditionError):
        substituted_diagnostics(kernel_spectral(kspec, TimeGrid.of([0.5])))
