import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pocbf.errors import DimensionMismatchError, InvalidParameterError
from pocbf.gains import GainFn
from pocbf.regions import BoxRegion, RegionSpec, inflate_unsafe, product_regions

gains = st.builds(GainFn, st.floats(1e-3, 1e3), st.floats(0.25, 4.0))


@given(gains, st.floats(1e-6, 1e6))
def test_gain_inverse(g, s):
    assert g.inverse()(g(s)) == pytest.approx(s, rel=1e-12)


@given(gains, gains, st.floats(1e-3, 1e3))
def test_gain_composition(g1, g2, s):
    c = g1 @ g2
    assert c.coef == pytest.approx(g1.coef * g2.coef**g1.power, rel=1e-12)
    assert c.power == pytest.approx(g1.power * g2.power, rel=1e-15)
    assert c(s) == pytest.approx(g1(g2(s)), rel=1e-9)


def test_gain_basics():
    assert GainFn.zero()(5.0) == 0
    assert (GainFn(2) @ GainFn.zero()).is_zero
    assert str(GainFn(1e-5)) == "1e-05*s" and str(GainFn(0.3, 2)) == "0.3*s^2"
    assert GainFn.from_value({"coef": 0.3, "power": 2}) == GainFn(0.3, 2)
    assert GainFn.from_value(0) == GainFn.zero()
    with pytest.raises(InvalidParameterError):
        GainFn(-1.0)
    with pytest.raises(InvalidParameterError):
        GainFn.zero().inverse()


def test_box_and_region():
    b = BoxRegion.from_intervals([[0, 1], [2, 3]])
    assert b.contains([0.5, 2]) and not b.contains([1.5, 2])
    assert len(b.corners()) == 4
    with pytest.raises(InvalidParameterError):
        BoxRegion((1.0,), (0.0,))
    with pytest.raises(DimensionMismatchError):
        RegionSpec.from_list([[[0, 1]], [[0, 1], [0, 1]]])
    r = RegionSpec.from_list([[[0, 1]], [[2, 3]]])
    assert RegionSpec.from_list(r.to_list()) == r
    p = product_regions([r, RegionSpec.box([[5, 6]])])
    assert p.dim == 2 and len(p.boxes) == 2


def test_inflate_examples():
    unit = RegionSpec.box([[0, 1], [0, 1]])
    assert inflate_unsafe(unit, 0.0) == unit
    got = inflate_unsafe(unit, 0.1, RegionSpec.box([[-1, 2], [-1, 2]]))
    np.testing.assert_allclose(got.to_list(), [[[-0.1, 1.1], [-0.1, 1.1]]])
    xb = RegionSpec.from_list([[[0, 0.5], [-2, -1.5]], [[3, 3.5], [2.5, 3]]])
    got = inflate_unsafe(xb, 0.01, RegionSpec.box([[0, 3.5], [-2, 3]]))
    np.testing.assert_allclose(got.to_list(), [[[0, 0.51], [-2, -1.49]], [[2.99, 3.5], [2.49, 3]]])
    with pytest.raises(InvalidParameterError):
        inflate_unsafe(unit, -0.1)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(-2, 3), st.floats(-2, 3))
def test_inflation_is_monotone(e1, e2, px, py):
    """Exit-set monotonicity: a point unsafe at radius e is unsafe at any larger radius."""
    xb = RegionSpec.from_list([[[0, 0.5], [-2, -1.5]], [[3, 3.5], [2.5, 3]]])
    dom = RegionSpec.box([[0, 3.5], [-2, 3]])
    lo, hi = sorted((e1, e2))
    small, big = inflate_unsafe(xb, lo, dom), inflate_unsafe(xb, hi, dom)
    assert small.is_subset_of(big)
    if small.contains([px, py]):
        assert big.contains([px, py])
