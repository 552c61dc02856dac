import numpy as np
import pytest

from targetmeta.design import (
    Interaction,
    Intercept,
    Main,
    ModelSpec,
    Power,
    build_design,
    intercept_plus_mains,
)
from targetmeta.errors import IndexOutOfRangeError, ParseError


def test_intercept_and_main():
    dm = build_design(np.array([[2.0]]), ModelSpec.parse("1 + x0"))
    assert np.array_equal(dm.values, [[1.0, 2.0]])


def test_power_term():
    dm = build_design(np.array([[3.0]]), ModelSpec.parse("1 + x0 + x0^2"))
    assert np.array_equal(dm.values, [[1.0, 3.0, 9.0]])


def test_interaction_term():
    dm = build_design(np.array([[2.0, 5.0]]), ModelSpec.parse("1 + x0 + x1 + x0:x1"))
    assert np.array_equal(dm.values, [[1.0, 2.0, 5.0, 10.0]])


def test_row_order_preserved():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3))
    spec = ModelSpec.parse("1 + x0 + x2 + x0^2 + x1:x2")
    base = build_design(x, spec).values
    perm = rng.permutation(50)
    assert np.array_equal(build_design(x[perm], spec).values, base[perm])


def test_intercept_plus_mains_is_one_concat_x():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 4))
    dm = build_design(x, intercept_plus_mains(4))
    assert np.array_equal(dm.values, np.column_stack([np.ones(20), x]))


def test_parse_format_round_trip():
    text = "1 + x0 + x1 + x0^2 + x0:x1"
    spec = ModelSpec.parse(text)
    assert str(spec) == text
    assert spec.q == 5
    assert spec.terms[0] == Intercept()
    assert spec.terms[1] == Main(0)
    assert spec.terms[3] == Power(0, 2)
    assert spec.terms[4] == Interaction(0, 1)


def test_parse_errors():
    with pytest.raises(ParseError):
        ModelSpec.parse("x0 + x1")  # no intercept
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + x0 + x0")  # duplicate
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + x0 + 1")  # two intercepts
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + banana")
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + x0^1")  # powers start at 2
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + x0:x0")  # self-interaction
    with pytest.raises(ParseError):
        ModelSpec.parse("1 + x0:x1 + x1:x0")  # same interaction twice


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRangeError):
        build_design(np.zeros((3, 2)), ModelSpec.parse("1 + x2"))


def test_design_matrix_invariants():
    rng = np.random.default_rng(2)
    dm = build_design(rng.normal(size=(10, 2)), ModelSpec.parse("1 + x0 + x1"))
    assert (dm.values[:, 0] == 1.0).all()
    assert np.isfinite(dm.values).all()
    assert (dm.n, dm.q) == (10, 3)
