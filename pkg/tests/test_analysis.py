from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmadir.analysis import (AnalysisInputError, FitError, ball_volume, blows_up, default_t_grid,
                             empirical_modulus, fit_exponent, holder_exponent_check, laplacian_mass,
                             mass_comparison, modulus_function, omega_u0_comparison, psi_norm, stability_check,
                             theorem_a_verdict)
from cmadir.barriers import minimal_concave_majorant
from cmadir.catalog import lookup
from cmadir.domain import build_grid, make_domain, sample_field
from cmadir.solver import solve
from cmadir.suites import quadratic_mass_check
from conftest import coarse_problem


@pytest.fixture(scope="module")
def grid():
    return build_grid(make_domain("ball", 2), 0.1)


def test_constant_field_has_zero_modulus(grid):
    u = sample_field(grid, lambda x: np.full(x.shape[0], 3.0))
    c = empirical_modulus(u, pair_budget=10_000)
    assert np.all(c.omega == 0)


def test_linear_field_modulus_is_t(grid):
    u = sample_field(grid, lambda x: x[:, 0])
    t = default_t_grid(grid.h, 2.0)
    c = empirical_modulus(u, t, pair_budget=200_000)
    # measured pairs have length <= t, and the axis pairs give floor(t/h) h exactly
    assert np.all(c.omega[1:] <= t + 1e-12)
    assert np.all(c.omega[1:] >= np.floor(t / grid.h + 1e-9) * grid.h - 1e-12)


def test_modulus_is_nondecreasing_and_deterministic(grid):
    u = sample_field(grid, lambda x: np.sin(3 * x[:, 0]) * x[:, 2])
    a = empirical_modulus(u, pair_budget=50_000, seed=4)
    b = empirical_modulus(u, pair_budget=50_000, seed=4)
    assert np.all(np.diff(a.omega) >= 0)
    assert np.array_equal(a.omega, b.omega)


def test_t_grid_must_start_at_2h(grid):
    u = sample_field(grid, lambda x: x[:, 0])
    with pytest.raises(ValueError):
        empirical_modulus(u, [0.05, 0.5])


@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.25])
def test_fit_recovers_power_laws(alpha):
    t = np.geomspace(0.01, 1, 30)
    c = minimal_concave_majorant(np.column_stack([t, t**alpha]))
    assert fit_exponent(c, (0.01, 1)).slope == pytest.approx(alpha, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.1, 10))
def test_fit_property(alpha, scale):
    t = np.geomspace(0.02, 0.8, 20)
    c = minimal_concave_majorant(np.column_stack([t, scale * t**alpha]))
    assert fit_exponent(c).slope == pytest.approx(alpha, abs=1e-6)


def test_fit_needs_five_samples():
    t = np.geomspace(0.1, 1, 4)
    c = minimal_concave_majorant(np.column_stack([t, t]))
    with pytest.raises(FitError):
        fit_exponent(c)


def test_blow_up_rule():
    t = np.geomspace(0.1, 1, 12)
    assert blows_up(1 / t)
    assert not blows_up(np.ones(12))
    assert not blows_up(t)


def test_zero_data_verdict():
    p = coarse_problem("zero", "zero", h=0.2)
    u, _ = solve(p)
    v = theorem_a_verdict(u, p, pair_budget=20_000)
    assert v.passed and v.numbers["eta_max"] == 0.0


def test_psi_norm_examples(grid):
    zero = sample_field(grid, lambda x: np.zeros(x.shape[0]))
    assert psi_norm(zero, lambda t: t).total == 0.0
    lin = sample_field(grid, lambda x: x[:, 0])
    r = psi_norm(lin, lambda t: t, t_max=2.0, pair_budget=200_000)
    assert r.sup_part == pytest.approx(1.0, abs=grid.h)
    assert r.ratio_part == pytest.approx(1.0, abs=1e-9)
    assert r.total == pytest.approx(2.0, abs=grid.h)


def test_psi_must_not_vanish(grid):
    lin = sample_field(grid, lambda x: x[:, 0])
    with pytest.raises(AnalysisInputError):
        psi_norm(lin, lambda t: np.zeros_like(t), pair_budget=100)


def test_modulus_function_parsing():
    assert modulus_function("power:0.5")(np.array([4.0]))[0] == pytest.approx(2.0)
    assert modulus_function("log:1")(np.array([np.exp(-2)]))[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        modulus_function("cosh:1")


def test_mass_of_equal_fields_is_equal(grid):
    u = sample_field(grid, lambda x: (x**2).sum(1))
    v = mass_comparison(u, u.copy(), 0.0)
    assert v.passed and v.numbers["mass_u"] == v.numbers["mass_v"]


def test_quadratic_mass():
    v = quadratic_mass_check(0.1)
    assert v.passed, v.numbers


def test_ball_volume():
    assert ball_volume(4) == pytest.approx(np.pi**2 / 2)


def test_laplacian_of_quadratic_is_constant(grid):
    u = sample_field(grid, lambda x: (x**2).sum(1))
    n_int = grid.interior.size
    assert laplacian_mass(u) == pytest.approx(8 * n_int * grid.h**4 / grid.h**2 * grid.h**2, rel=1e-9)


def test_mass_precondition_violation(grid):
    u = sample_field(grid, lambda x: (x**2).sum(1))
    v = u.copy()
    v.values[...] = v.values + 1.0
    with pytest.raises(AnalysisInputError):
        mass_comparison(u, v, 1e-8)


def test_stability_constant_shift():
    p = coarse_problem("re_z1", "const", f_params={"value": 1.0})
    q = p.with_data(phi=lookup("re_z1", shift=0.25))
    v = stability_check(p, q)
    assert v.passed
    assert v.numbers["lhs"] == pytest.approx(0.25, abs=1e-8)


def test_stability_density_change():
    p = coarse_problem("re_z1", "zero")
    q = p.with_data(f=lookup("const", value=1.0))
    v = stability_check(p, q)
    assert v.passed and v.numbers["rhs"] == pytest.approx(4.0)


def test_stability_needs_same_grid():
    p = coarse_problem("re_z1", "zero")
    q = coarse_problem("re_z1", "zero", h=0.2)
    with pytest.raises(AnalysisInputError):
        stability_check(p, q)


def test_holder_check_linear():
    p = coarse_problem("re_z1", "zero", h=0.1)
    u = sample_field(p.grid, lambda x: x[:, 0])
    v = holder_exponent_check(u, 1.0, pair_budget=50_000)
    # lattice rounding of pair lengths biases the fitted slope slightly low
    assert v.passed and v.numbers["slope"] == pytest.approx(1.0, abs=0.1)


def test_holder_check_empty_range():
    p = coarse_problem("re_z1", "zero", h=0.25)
    u = sample_field(p.grid, lambda x: x[:, 0])
    with pytest.raises(FitError):
        holder_exponent_check(u, 1.0, t_range=(0.5, 0.4))


def test_omega_u0_degenerate_case_is_flagged():
    p = coarse_problem("const", "const", h=0.2, phi_params={"value": 1.0}, f_params={"value": 1.0})
    v = omega_u0_comparison(p, pair_budget=20_000)
    assert v.numbers["degenerate"]
    assert np.isfinite(v.numbers["ratio_max"])


def test_omega_u0_zero_density_ratio():
    p = coarse_problem("re_z1", "zero", h=0.2)
    v = omega_u0_comparison(p, pair_budget=20_000)
    # U = U0 so the ratio is omega_U / max(omega_U, t^(1/2)) <= 1
    assert v.numbers["ratio_max"] <= 1 + 1e-9
