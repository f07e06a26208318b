from __future__ import annotations

import pytest

from cmadir.catalog import lookup
from cmadir.domain import make_domain
from cmadir.hermitian import build_direction_set
from cmadir.solver import ProblemSpec


def coarse_problem(phi="re_z1", f="zero", h=0.25, frames=4, phi_params=None, f_params=None, **kw):
    """Small ball problem in C^2 that solves in a second or two."""
    return ProblemSpec(make_domain("ball", 2), lookup(phi, **(phi_params or {})), lookup(f, **(f_params or {})),
                       build_direction_set(2, frames), h, **kw)


@pytest.fixture(scope="session")
def ball2():
    return make_domain("ball", 2)


# ------------------------------------------------------------ acceptance summary

_CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    """``record(number, check, passed, detail)`` for the per-criterion summary."""

    def record(number: int, check: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA.setdefault(number, []).append((check, bool(passed), detail))
        print(f"criterion {number} / {check}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        ok = all(p for _, p, _ in checks)
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}")
        for check, passed, detail in checks:
            tr.write_line(f"    {'pass' if passed else 'FAIL'}  {check}  {detail}")
