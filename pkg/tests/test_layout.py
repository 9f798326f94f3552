import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvnma.layout import (
    ANGLE,
    CORR,
    POSITIVE,
    REAL,
    Block,
    ParameterLayout,
    forward_scalar,
    log_jacobian_scalar,
)


@pytest.fixture
def layout():
    return ParameterLayout([
        Block("m", ("m1", "m2"), REAL),
        Block("s", ("s1",), POSITIVE, 2.0),
        Block("r", ("r1",), CORR),
        Block("a", ("a1", "a2"), ANGLE),
    ])


def test_blocks_cover_vector(layout):
    covered = np.zeros(layout.size, dtype=int)
    for sl in layout.slices.values():
        covered[sl] += 1
    assert np.all(covered == 1)
    assert layout.names == ("m1", "m2", "s1", "r1", "a1", "a2")
    assert layout.index("r1") == 3


def test_duplicate_names_rejected():
    with pytest.raises(ValueError):
        ParameterLayout([Block("a", ("x",), REAL), Block("b", ("x",), REAL)])


def test_bounds(layout):
    ok = np.array([0.0, -3.0, 1.0, 0.5, 1.0, 3.0])
    assert layout.in_bounds(ok).all()
    for i, bad in [(2, 2.0), (2, -0.1), (3, 1.0), (4, 0.0), (5, math.pi), (0, np.inf)]:
        t = ok.copy()
        t[i] = bad
        assert not layout.in_bounds(t)[i]


z_st = st.lists(st.floats(-8, 8), min_size=6, max_size=6)


@given(z_st)
def test_round_trip(z):
    L = ParameterLayout([Block("m", ("m1", "m2"), REAL), Block("s", ("s1",), POSITIVE),
                         Block("r", ("r1",), CORR), Block("a", ("a1", "a2"), ANGLE)])
    z = np.array(z)
    th = L.from_unconstrained(z)
    np.testing.assert_allclose(L.to_unconstrained(th), z, atol=1e-6)
    for i in range(6):
        assert forward_scalar(z[i], L.codes[i]) == pytest.approx(th[i], rel=1e-12, abs=1e-300)


@given(st.floats(-6, 6), st.sampled_from([0, 1, 2, 3]))
def test_log_jacobian_matches_finite_difference(z, code):
    h = 1e-6
    codes = np.array([code])
    fp = ParameterLayout.forward(np.array([z + h]), codes)[0]
    fm = ParameterLayout.forward(np.array([z - h]), codes)[0]
    expected = math.log(abs(fp - fm) / (2 * h))
    assert ParameterLayout.log_jacobian(np.array([z]), codes)[0] == pytest.approx(expected,
                                                                                abs=1e-5)
    assert log_jacobian_scalar(z, code) == pytest.approx(expected, abs=1e-5)
