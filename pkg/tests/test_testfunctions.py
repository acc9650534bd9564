import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srlab import testfunctions as T


def test_endpoints_are_pinned_to_zero():
    f = T.TestFunction(np.ones(9))
    assert f.values[0] == f.values[-1] == 0.0
    assert f.N == 8 and f.h == 0.125


def test_sine_norms_closed_form():
    f = T.sine(4096, 3)
    assert f.norm(2) == pytest.approx(np.sqrt(0.5), rel=1e-6)
    assert f.derivative_norm(2) == pytest.approx(3 * np.pi * np.sqrt(0.5), rel=1e-5)


def test_from_spec():
    assert T.from_spec("hat", 16).values.max() == pytest.approx(1.0)
    np.testing.assert_array_equal(T.from_spec("sine-2", 16).values, T.sine(16, 2).values)
    with pytest.raises(ValueError):
        T.from_spec("triangle", 16)


@given(st.integers(0, 10_000))
def test_random_family_is_grid_independent(seed):
    coarse, fine = T.random_smooth(16, seed), T.random_smooth(64, seed)
    np.testing.assert_allclose(fine.values[::4], coarse.values, atol=1e-12)


@given(st.integers(0, 10_000))
def test_derivative_telescopes(seed):
    f = T.random_smooth(32, seed)
    assert f.h * f.derivative.sum() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(T.TestFunction.from_interior(f.interior).values, f.values)
