from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmadir.domain import build_grid, make_domain, sample_field
from cmadir.hermitian import (NotPSHError, build_direction_set, delta_H_exact, discrete_delta_H, gaveau_inf,
                              realify)
from cmadir.suites import det_root, random_psd


def test_canonical_single_direction():
    D = build_direction_set(2, 1, [(1, 1)])
    assert len(D) == 1
    assert np.allclose(D.dir_lam[0], [0.5, 0.5])


def test_profile_rescaling():
    D = build_direction_set(2, 1, [(4, 1)])
    lam = D.dir_lam[D.dir_lam[:, 0] > D.dir_lam[:, 1]][0]
    assert np.allclose(lam, [1.0, 0.25])


def test_one_dimensional_case_is_the_identity():
    D = build_direction_set(1, 1, [(1,)])
    assert len(D) == 1 and D.dir_lam[0, 0] == 1.0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_direction_invariants(n):
    D = build_direction_set(n, 8)
    assert np.allclose(np.prod(D.dir_lam, axis=1), float(n) ** (-n), rtol=1e-12, atol=0)
    for V in D.frames:
        assert np.max(np.abs(V.conj().T @ V - np.eye(n))) <= 1e-12
    for d in D:
        H = d.matrix
        assert np.allclose(H, H.conj().T)
        assert np.linalg.eigvalsh(H).min() > 0
    # canonical member present
    assert any(np.allclose(d.matrix, np.eye(n) / n) for d in D)


def test_direction_set_is_deterministic(tmp_path):
    a, b = build_direction_set(2, 16, seed=3), build_direction_set(2, 16, seed=3)
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gaveau_identity_and_diagonal():
    D = build_direction_set(2, 8)
    assert gaveau_inf(np.eye(2), D) == pytest.approx(1.0, abs=1e-14)
    assert gaveau_inf(np.diag([4.0, 1.0]), D) == pytest.approx(2.0, abs=1e-12)


def test_gaveau_rejects_indefinite_hessian():
    with pytest.raises(NotPSHError):
        gaveau_inf(np.diag([1.0, -1.0]), build_direction_set(2, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_gaveau_is_one_sided_and_monotone_in_the_family(seed, n):
    Q = random_psd(n, np.random.default_rng(seed))
    small = build_direction_set(n, 4)
    big = build_direction_set(n, 16)
    exact = det_root(Q)
    assert gaveau_inf(Q, small) >= exact - 1e-10
    # the first 4 frames of the big set are the small set's frames
    assert gaveau_inf(Q, big) <= gaveau_inf(Q, small) + 1e-14


def test_det_root_matches_numpy():
    rng = np.random.default_rng(5)
    for _ in range(20):
        Q = random_psd(3, rng)
        assert det_root(Q) == pytest.approx(np.linalg.det(Q).real ** (1 / 3), rel=1e-12)


def _poly_field(h, fn):
    g = build_grid(make_domain("ball", 2), h)
    return g, sample_field(g, fn)


def test_stencil_exact_on_quadratics():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    A = A + A.T
    b = rng.standard_normal(4)

    def fn(x):
        return np.einsum("ij,jk,ik->i", x, A, x) / 2 + x @ b

    # complex Hessian of x^T A x / 2
    Q = 0.25 * ((A[0::2, 0::2] + A[1::2, 1::2]) + 1j * (A[0::2, 1::2] - A[1::2, 0::2]))
    D = build_direction_set(2, 4)
    z = np.array([0.1, -0.2, 0.05, 0.15])
    for d in D:
        val = discrete_delta_H(fn, z, d, arm_length=0.3)
        assert val == pytest.approx(delta_H_exact(Q, d), abs=1e-10)


def test_grid_stencil_exact_on_linears_and_abs_square():
    g, lin = _poly_field(0.1, lambda x: x[:, 0])
    _, sq = _poly_field(0.1, lambda x: (x**2).sum(1))
    D = build_direction_set(2, 4)
    z = g.index_of([0.2, 0.1, -0.3, 0.0])
    for d in D:
        assert discrete_delta_H(lin, z, d) == pytest.approx(0.0, abs=1e-12)
        # multilinear interpolation adds O(h^2) on quadratics, bounded by the cell size
        assert discrete_delta_H(sq, z, d) == pytest.approx(d.trace, abs=d.trace * 0.5)
        assert d.trace >= 1.0 - 1e-12


def test_boundary_arms_use_boundary_values():
    g, lin = _poly_field(0.1, lambda x: x[:, 0])
    ball = make_domain("ball", 2)
    D = build_direction_set(2, 4)
    z = g.index_of([0.9, 0.0, 0.0, 0.0])
    for d in D:
        val = discrete_delta_H(lin, z, d, boundary_values=lambda x: x[:, 0], domain=ball)
        assert val == pytest.approx(0.0, abs=1e-9)


def test_abs_z1_fourth_power_value():
    D = build_direction_set(2, 1, [(1, 1)])
    H = D.directions[0]
    z = np.array([1.0, 0, 0, 0])
    fn = lambda x: (x[:, 0] ** 2 + x[:, 1] ** 2) ** 2  # noqa: E731
    errs = [abs(discrete_delta_H(fn, z, H, arm_length=dl) - 2.0) for dl in (0.1, 0.05)]
    assert errs[1] < errs[0] < 0.1


def test_second_order_consistency():
    fn = lambda x: np.exp(x[:, 0]) * np.cos(x[:, 3])  # noqa: E731
    z = np.array([0.1, 0.2, -0.1, 0.3])
    H = build_direction_set(2, 3, [(4, 1)]).directions[-1]
    # complex Hessian by hand: u = e^{x1} cos(y2)
    e, c, s = np.exp(z[0]), np.cos(z[3]), np.sin(z[3])
    A = np.zeros((4, 4))
    A[0, 0] = e * c
    A[3, 3] = -e * c
    A[0, 3] = A[3, 0] = -e * s
    Q = 0.25 * ((A[0::2, 0::2] + A[1::2, 1::2]) + 1j * (A[0::2, 1::2] - A[1::2, 0::2]))
    exact = delta_H_exact(Q, H)
    e1 = abs(discrete_delta_H(fn, z, H, arm_length=0.1) - exact)
    e2 = abs(discrete_delta_H(fn, z, H, arm_length=0.05) - exact)
    assert 3.5 <= e1 / e2 <= 4.5


def test_realify_layout():
    assert np.array_equal(realify(np.array([1 + 2j, 3 - 1j])), [1, 2, 3, -1])


def test_defining_function_is_strongly_psh_along_directions():
    ball = make_domain("ball", 2)
    D = build_direction_set(2, 8)
    rng = np.random.default_rng(2)
    for z in rng.uniform(-0.4, 0.4, (20, 4)):
        for d in D:
            assert discrete_delta_H(ball.rho, z, d, arm_length=0.05) >= ball.c * d.trace - 1e-9
