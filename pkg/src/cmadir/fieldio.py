"""CSV formats for fields, moduli and reports.

A field file starts with ``#``-prefixed ``key = value`` header lines that pin
down the grid and the run, followed by one row per interior or band node:
the ``2n`` coordinates, the value and a one-letter tag. Floats are written
with ``repr``, the shortest decimal that parses back to the same double, so a
write/read round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .domain import EXTERIOR, INTERIOR, TAGS, Grid, ScalarField

FORMAT = "cmadir-field-1"
_TAG_CODES = {v: k for k, v in TAGS.items()}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field(path, u: ScalarField, meta: dict | None = None) -> Path:
    """Write ``u`` at all non-exterior nodes, lexicographic order."""
    g = u.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    klass = g.klass.reshape(-1)
    used = np.flatnonzero(klass != EXTERIOR)
    pts = g.points(used)
    vals = u.flat[used]
    head = {"format": FORMAT, "n": g.n, "h": _fmt(g.h), "start": list(g.start), "shape": list(g.shape),
            "reach": g.reach, "domain": _domain_json(g), "metadata": u.metadata}
    head.update(meta or {})
    lines = [f"# {k} = {json.dumps(v, sort_keys=True, default=str)}" for k, v in head.items()]
    cols = [f"x{k}" for k in range(2 * g.n)] + ["value", "tag"]
    lines.append(",".join(cols))
    tags = [TAGS[int(t)] for t in klass[used]]
    for p, v, t in zip(pts.tolist(), vals.tolist(), tags):
        lines.append(",".join(map(repr, p)) + "," + repr(v) + "," + t)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _domain_json(g: Grid) -> dict:
    d = g.domain
    if d is None:
        return {}
    return {"kind": d.kind, "n": d.n, "params": json.loads(json.dumps(d.params, default=_complexify)),
            "describe": d.describe()}


def _complexify(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def read_header(path) -> dict:
    head = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].partition("=")
            head[key.strip()] = json.loads(val.strip())
    return head


def read_field(path, grid: Grid | None = None) -> ScalarField:
    """Read a field file.

    Without ``grid`` a bare grid is rebuilt from the header (tags from the
    file, no domain attached); with ``grid`` the header must match it.
    """
    head = read_header(path)
    if head.get("format") != FORMAT:
        raise ValueError(f"{path}: not a field file")
    n = int(head["n"])
    h = float(head["h"])
    start = tuple(int(s) for s in head["start"])
    shape = tuple(int(s) for s in head["shape"])
    rows = [r for r in Path(path).read_text(encoding="utf-8").splitlines() if r and not r.startswith("#")][1:]
    dim = 2 * n
    coords = np.empty((len(rows), dim))
    vals = np.empty(len(rows))
    tags = np.empty(len(rows), dtype=np.int8)
    for i, r in enumerate(rows):
        parts = r.split(",")
        coords[i] = [float(x) for x in parts[:dim]]
        vals[i] = float(parts[dim])
        tags[i] = _TAG_CODES[parts[dim + 1]]
    ijk = np.rint(coords / h).astype(np.int64) - np.asarray(start)
    flat = np.ravel_multi_index(tuple(ijk.T), shape)
    if grid is None:
        klass = np.full(int(np.prod(shape)), EXTERIOR, dtype=np.int8)
        klass[flat] = tags
        grid = Grid(n, h, start, shape, int(head["reach"]), klass.reshape(shape), None)
    elif grid.shape != shape or tuple(grid.start) != start or grid.h != h:
        raise ValueError(f"{path}: header does not match the given grid")
    values = np.full(int(np.prod(shape)), np.nan)
    values[flat] = vals
    return ScalarField(grid, values, head.get("metadata", ""))


def write_modulus(path, t, omega, omega_bar, meta: dict | None = None) -> Path:
    """Rows ``t, omega_hat, omega_bar``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {k} = {json.dumps(v, sort_keys=True, default=str)}" for k, v in (meta or {}).items()]
    lines.append("t,omega,omega_bar")
    for a, b, c in zip(np.asarray(t).tolist(), np.asarray(omega).tolist(), np.asarray(omega_bar).tolist()):
        lines.append(f"{a!r},{b!r},{c!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_modulus(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = [r for r in Path(path).read_text(encoding="utf-8").splitlines() if r and not r.startswith("#")][1:]
    data = np.array([[float(x) for x in r.split(",")] for r in rows]).reshape(-1, 3)
    return data[:, 0], data[:, 1], data[:, 2]


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    return path


def interior_only(u: ScalarField) -> np.ndarray:
    return u.flat[u.grid.klass.reshape(-1) == INTERIOR]
