from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cmadir.domain import EXTERIOR, build_grid, make_domain, sample_field
from cmadir.fieldio import read_field, read_header, read_modulus, write_field, write_modulus


def test_field_round_trip_is_bit_exact(tmp_path):
    g = build_grid(make_domain("ball", 2), 0.25)
    rng = np.random.default_rng(0)
    u = sample_field(g, lambda x: rng.standard_normal(x.shape[0]) * 1e3 + x[:, 0] / 3)
    write_field(tmp_path / "u.csv", u, {"seed": 7})
    back = read_field(tmp_path / "u.csv", g)
    used = g.klass.reshape(-1) != EXTERIOR
    assert np.array_equal(back.flat[used], u.flat[used])
    assert np.all(np.isnan(back.flat[~used]))
    assert read_header(tmp_path / "u.csv")["seed"] == 7


def test_round_trip_without_grid(tmp_path):
    g = build_grid(make_domain("l1_ball", 2), 0.25)
    u = sample_field(g, lambda x: np.cos(x).sum(1))
    write_field(tmp_path / "u.csv", u)
    back = read_field(tmp_path / "u.csv")
    assert back.grid.shape == g.shape
    assert np.array_equal(back.grid.klass, g.klass)
    used = g.klass.reshape(-1) != EXTERIOR
    assert np.array_equal(back.flat[used], u.flat[used])


def test_writing_twice_gives_identical_bytes(tmp_path):
    g = build_grid(make_domain("ball", 2), 0.25)
    u = sample_field(g, lambda x: x[:, 1] ** 3)
    write_field(tmp_path / "a.csv", u, {"k": 1})
    write_field(tmp_path / "b.csv", u, {"k": 1})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=3, max_size=30))
def test_modulus_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("m") / "m.csv"
    t = np.arange(1, len(values) + 1, dtype=float) / 7
    w = np.asarray(values)
    write_modulus(path, t, w, w * 3, {"x": 1})
    a, b, c = read_modulus(path)
    assert np.array_equal(a, t) and np.array_equal(b, w) and np.array_equal(c, w * 3)
