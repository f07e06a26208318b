"""Solving on the unit ball of C^2 and comparing against exact solutions.

Three Dirichlet problems with known solutions:

* phi = 1, f = 1: U = |z|^2 (smooth, strictly psh);
* phi = Re z1, f = 0: U = Re z1 (pluriharmonic, reproduced exactly);
* phi = -sqrt((1 + Re z1) / 2), f = 0: U is the same formula, which is only
  1/2-Hoelder at the boundary point z = (-1, 0).

For the last one the measured modulus of continuity is fitted by a power
law, which recovers the exponent 1/2.

    python demos/exact_solutions.py [h]
"""

from __future__ import annotations

import sys

import numpy as np

from cmadir.analysis import empirical_modulus, fit_exponent
from cmadir.catalog import example47_exact, lookup
from cmadir.domain import make_domain
from cmadir.hermitian import build_direction_set
from cmadir.solver import ProblemSpec, solve


def solve_and_compare(name, phi, f, exact, h, frames=8):
    problem = ProblemSpec(make_domain("ball", 2), phi, f, build_direction_set(2, frames), h)
    u, rep = solve(problem)
    idx = problem.grid.interior
    err = np.max(np.abs(u.flat[idx] - exact(problem.grid.points(idx))))
    print(f"{name:28s} sup error {err:.3e}  sweeps {rep.iterations:4d}  {rep.wall_time:6.1f} s")
    return u


def main() -> None:
    h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.1
    one = lookup("const", value=1.0)
    solve_and_compare("|z|^2 (phi = 1, f = 1)", one, one, lambda x: np.einsum("ij,ij->i", x, x), h)
    solve_and_compare("Re z1 (f = 0)", lookup("re_z1"), lookup("zero"), lambda x: x[:, 0], h)
    u = solve_and_compare("-sqrt((1 + Re z1)/2)", lookup("example47_linear"), lookup("zero"),
                          example47_exact("linear"), h)
    lo, hi = 2 * h, 0.5
    curve = empirical_modulus(u, np.geomspace(lo, hi, 24))
    fit = fit_exponent(curve, (lo, hi))
    print(f"fitted Hoelder exponent of the last solution on [{lo:g}, {hi:g}]: {fit.slope:.3f} (exact 0.5)")


if __name__ == "__main__":
    main()
