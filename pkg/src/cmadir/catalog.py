"""Named boundary data and densities.

Every entry is a vectorised function of interleaved real coordinates
``(Re z1, Im z1, Re z2, ...)`` with shape ``(N, 2n)``. Entries are looked up by
name with keyword parameters, which is how configuration files select them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True, eq=False)
class CatalogFunction:
    """A named, parameterised function of points in ``C^n``.

    ``singular`` (optional) flags points where the function is infinite or
    undefined; densities in ``L^p`` use it to place truncation levels.
    """

    name: str
    params: dict
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    singular: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    lipschitz: float | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.fn(x), dtype=float)

    def describe(self) -> str:
        if not self.params:
            return self.name
        return self.name + "(" + ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items())) + ")"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ";".join(_fmt(x) for x in v) + "]"
    return str(v)


def _zero(**_):
    return CatalogFunction("zero", {}, lambda x: np.zeros(x.shape[0]), lipschitz=0.0)


def _const(value: float = 1.0):
    value = float(value)
    return CatalogFunction("const", {"value": value}, lambda x: np.full(x.shape[0], value), lipschitz=0.0)


def _re_z1(scale: float = 1.0, shift: float = 0.0):
    scale, shift = float(scale), float(shift)
    return CatalogFunction("re_z1", {"scale": scale, "shift": shift},
                           lambda x: scale * x[:, 0] + shift, lipschitz=abs(scale))


def _abs_sq(scale: float = 1.0, shift: float = 0.0):
    scale, shift = float(scale), float(shift)
    return CatalogFunction("abs_sq", {"scale": scale, "shift": shift},
                           lambda x: scale * np.einsum("ij,ij->i", x, x) + shift)


def _example47(psi: str):
    # phi(z) = -psi(sqrt((1 + Re z1) / 2)), extended by clipping at 0 outside the ball
    if psi == "linear":
        def fn(x):
            return -np.sqrt(np.clip((1.0 + x[:, 0]) / 2.0, 0.0, None))
    else:
        def fn(x):
            return -np.clip((1.0 + x[:, 0]) / 2.0, 0.0, None) ** 0.25
    return CatalogFunction(f"example47_{psi}", {}, fn)


def _inv_abs_z1(power: float = 1.0):
    power = float(power)

    def fn(x):
        r = np.hypot(x[:, 0], x[:, 1])
        with np.errstate(divide="ignore"):
            return np.where(r > 0, r ** (-power), np.inf)

    def singular(x):
        return np.hypot(x[:, 0], x[:, 1]) == 0.0

    return CatalogFunction("inv_abs_z1", {"power": power}, fn, singular=singular)


def _poly(terms=((1.0,),)):
    """Polynomial in the real coordinates.

    ``terms`` is a sequence of ``(coefficient, e_1, ..., e_{2n})``; missing
    exponents are zero. A bare ``(c,)`` is the constant ``c``.
    """
    parsed = []
    for t in terms:
        t = tuple(float(v) for v in t)
        if not t:
            raise ValueError("empty polynomial term")
        exps = tuple(int(e) for e in t[1:])
        if any(e < 0 or e != v for e, v in zip(exps, t[1:])):
            raise ValueError("polynomial exponents must be nonnegative integers")
        parsed.append((t[0], exps))

    def fn(x):
        out = np.zeros(x.shape[0])
        for c, exps in parsed:
            if len(exps) > x.shape[1]:
                raise ValueError("polynomial term has more exponents than coordinates")
            term = np.full(x.shape[0], c)
            for k, e in enumerate(exps):
                if e:
                    term = term * x[:, k] ** e
            out += term
        return out

    return CatalogFunction("poly", {"terms": [list((c,) + e) for c, e in parsed]}, fn)


def parse_terms(text: str) -> list[tuple]:
    """``"1.0:2,0,0,0; -0.5:0,0,1"`` -> ``[(1.0, 2, 0, 0, 0), (-0.5, 0, 0, 1)]``."""
    terms = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        coef, _, exps = chunk.partition(":")
        row = [float(coef)]
        if exps.strip():
            row += [int(e) for e in exps.split(",")]
        terms.append(tuple(row))
    if not terms:
        raise ValueError("polynomial needs at least one term")
    return terms


_BUILDERS = {
    "zero": _zero,
    "const": _const,
    "re_z1": _re_z1,
    "abs_sq": _abs_sq,
    "example47_linear": lambda: _example47("linear"),
    "example47_sqrt": lambda: _example47("sqrt"),
    "inv_abs_z1": _inv_abs_z1,
    "poly": _poly,
}

NAMES = tuple(_BUILDERS)


def lookup(name: str, **params) -> CatalogFunction:
    """Build the catalog entry ``name`` with numeric parameters."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown catalog function {name!r}; known: {', '.join(NAMES)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name!r}: {exc}") from None


def negate(fn: CatalogFunction) -> CatalogFunction:
    return CatalogFunction("neg_" + fn.name, dict(fn.params), lambda x: -fn(x), lipschitz=fn.lipschitz)


def example47_exact(psi: str = "linear") -> CatalogFunction:
    """Closed-form solution on the unit ball with ``f = 0``; it equals the data."""
    return _example47(psi)
