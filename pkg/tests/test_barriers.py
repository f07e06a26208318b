from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmadir.barriers import (barrier_bundle, boundary_modulus, boundary_sample, composite_barrier_lp,
                             minimal_concave_majorant, point_barrier, sub_barrier, super_barrier)
from cmadir.catalog import lookup
from cmadir.domain import make_domain
from cmadir.solver import solve
from conftest import coarse_problem


def test_majorant_of_linear_samples_is_itself():
    t = np.linspace(0, 1, 11)
    c = minimal_concave_majorant(np.column_stack([t, t]))
    assert np.allclose(c.majorant(t), t)


def test_majorant_of_square_at_three_points():
    c = minimal_concave_majorant([(0, 0), (0.5, 0.25), (1, 1)])
    assert c.majorant(0.5) == pytest.approx(0.5)


def test_concave_piecewise_linear_is_a_fixed_point():
    t = np.linspace(0, 1, 21)
    w = np.minimum(2 * t, 1)
    c = minimal_concave_majorant(np.column_stack([t, w]))
    assert np.allclose(c.majorant(t), w)


def test_decreasing_samples_are_rejected():
    with pytest.raises(ValueError):
        minimal_concave_majorant([(0, 0), (1, 1), (2, 0.5)])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=30), st.lists(st.floats(0, 5), min_size=1, max_size=6))
def test_majorant_properties(increments, slopes):
    w = np.cumsum(increments)
    t = np.linspace(0.1, 3, w.size)
    c = minimal_concave_majorant(np.column_stack([t, w]))
    assert np.all(c.majorant(t) >= w - 1e-12)
    assert c.majorant(0.0) == 0.0
    assert c.is_concave(1e-9)
    # any concave candidate min_k (a_k + b_k t) >= w with a_k >= 0 dominates the hull
    b = np.asarray(slopes)
    a = np.maximum(0.0, np.max(w[None, :] - b[:, None] * t[None, :], axis=1))
    cand = np.min(a[:, None] + b[:, None] * c.hull_t[None, :], axis=0)
    assert np.all(cand >= c.hull_w - 1e-9)


def test_majorant_bound_holds_for_subadditive_modulus():
    t = np.linspace(0, 2, 41)
    c = minimal_concave_majorant(np.column_stack([t, np.sqrt(t)]))
    assert c.majorant_bound_violations() == []


def test_constant_data_gives_constant_point_barrier():
    ball = make_domain("ball", 2)
    phi = lookup("const", value=0.7)
    omega = boundary_modulus(ball, phi)
    assert np.all(omega.hull_w == 0)
    xi = np.array([1.0, 0, 0, 0])
    bar = point_barrier(ball, phi, xi, omega, 0.7)
    x = np.random.default_rng(0).uniform(-0.7, 0.7, (100, 4))
    assert np.allclose(bar(x), 0.7)


def test_point_barrier_for_linear_data():
    ball = make_domain("ball", 2)
    phi = lookup("re_z1")
    omega = boundary_modulus(ball, phi)
    xi = np.array([1.0, 0, 0, 0])
    bar = point_barrier(ball, phi, xi, omega, -1.0)
    assert bar(xi[None])[0] == pytest.approx(1.0)
    pts = boundary_sample(ball, 1000, 4)
    assert np.all(bar(pts) <= phi(pts) + 1e-9)


def test_point_barrier_modulus_constant():
    ball = make_domain("ball", 2)
    phi = lookup("re_z1")
    omega = boundary_modulus(ball, phi)
    xi = np.array([1.0, 0, 0, 0])
    bar = point_barrier(ball, phi, xi, omega, -1.0)
    C = bar.modulus_constant(ball.lipschitz_bound)
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (4000, 4))
    x = x[(x**2).sum(1) < 1]
    y = x + rng.normal(scale=0.05, size=x.shape)
    keep = (y**2).sum(1) < 1
    x, y = x[keep], y[keep]
    t = np.linalg.norm(x - y, axis=1)
    # the inner branch h_xi carries the modulus C omega_phi(t^{1/2}); phi = Re z1 has omega(t) = t
    lhs = np.abs(bar.h(x) - bar.h(y))
    assert np.all(lhs <= C * omega.majorant(np.sqrt(t)) + 1e-9)


def test_zero_data_barriers_vanish():
    p = coarse_problem("zero", "zero")
    sub, consts = sub_barrier(p, xi_count=40)
    sup, _ = super_barrier(p, xi_count=40)
    idx = p.grid.interior
    assert consts["is_subsolution"]
    assert np.all(sub.flat[idx] <= 1e-12) and np.all(sup.flat[idx] >= -1e-12)


@pytest.fixture(scope="module")
def linear_bundle():
    p = coarse_problem("re_z1", "zero")
    u, rep = solve(p)
    return p, u, rep, barrier_bundle(p, xi_count=60)


def test_sub_barrier_is_a_discrete_subsolution(linear_bundle):
    _, _, _, b = linear_bundle
    assert b.constants["sub"]["is_subsolution"]


def test_sandwich_for_linear_data(linear_bundle):
    p, u, rep, b = linear_bundle
    s = b.sandwich(u, rep.tol)
    assert s["pass"], s
    idx = p.grid.interior
    assert np.all(b.super.flat[idx] >= p.grid.points(idx)[:, 0] - 1e-12)


def test_barrier_report_is_json(linear_bundle):
    import json

    rep = json.loads(linear_bundle[3].report())
    assert rep["provenance"] == "point-barrier"


def test_composite_barrier_for_quadratic():
    p = coarse_problem("const", "const", phi_params={"value": 1.0}, f_params={"value": 1.0})
    b = composite_barrier_lp(p, [4.0, 16.0], xi_count=40)
    g = p.grid
    idx = g.interior
    exact = (g.points(idx) ** 2).sum(1)
    u, rep = solve(p)
    assert np.all(b.sub.flat[idx] <= u.flat[idx] + rep.tol)
    assert np.all(u.flat[idx] <= b.super.flat[idx] + rep.tol)
    # h1 + h2 equals phi on the boundary up to interpolation
    assert np.max(b.sub.flat[idx] - exact) < 0.05


def test_composite_barrier_zero_density_is_the_solution():
    p = coarse_problem("re_z1", "zero")
    b = composite_barrier_lp(p, [4.0])
    u, rep = solve(p)
    idx = p.grid.interior
    assert np.max(np.abs(b.sub.flat[idx] - u.flat[idx])) <= 10 * rep.tol
