import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srlab import acceptance, geodesics, srgeom, variation as V
from srlab.errors import InsufficientDataError


@pytest.fixture(scope="module")
def engel_geodesic():
    return srgeom.engel(), acceptance.solved("engel", acceptance.ENGEL_NORMAL, 128)


@pytest.fixture(scope="module")
def martinet_line():
    return srgeom.martinet(), acceptance.solved("martinet", acceptance.MART_ABNORMAL, 128)


def test_first_order_constant_closed_form():
    assert V.first_order_constant(2, 0.0, 1.0) == 1.0
    assert V.first_order_constant(1, 1.0, 1.0) == pytest.approx(math.e ** 2 * (1 + math.e) ** 2, rel=1e-14)
    assert V.first_order_constant(2, 0.1, 1.0) == 1.0  # every branch below 1 for small a


def test_default_component_prefers_constant_fields():
    assert V.default_component(srgeom.martinet()) == 1
    assert V.default_component(srgeom.engel()) == 0
    assert V.default_component(srgeom.heisenberg()) == 0


def test_zero_variation_is_the_identity(engel_geodesic):
    s, t = engel_geodesic
    y = V.vary(s, t, V.hat(t.N), 0.0)
    np.testing.assert_array_equal(y.states, t.states)
    assert y.length_l == pytest.approx(t.length_l, rel=1e-14)


def test_projection_cancels_the_first_order_term_on_engel(engel_geodesic):
    s, t = engel_geodesic
    phi = V.random_smooth(t.N, 3)
    p = V.project_to_H(phi, t, structure=s)
    assert p.residual <= 1e-12 and not p.degenerate
    assert V.endpoint_order(s, t, phi).slope == pytest.approx(1.0, abs=0.05)
    assert V.endpoint_order(s, t, p.phi).slope == pytest.approx(2.0, abs=0.05)


def test_flow_moments_give_the_same_order(engel_geodesic):
    # continuous bracket form differs from the exact moments by O(h)
    s, t = engel_geodesic
    p = V.project_to_H(V.random_smooth(t.N, 3), t, structure=s, moments="flow")
    assert V.endpoint_order(s, t, p.phi).slope >= 1.85


def test_abnormal_line_has_vanishing_moments(martinet_line):
    s, t = martinet_line
    p = V.project_to_H(V.hat(t.N), t, structure=s)
    assert p.degenerate and p.flag == "constraints degenerate"
    # the first variation vanishes, so even the raw perturbation is second order
    assert V.endpoint_order(s, t, V.random_smooth(t.N, 4)).slope == pytest.approx(2.0, abs=0.05)


def test_linear_endpoint_gives_flat_projected_deviation():
    # on the Heisenberg group the endpoint is affine in lambda, so projection removes everything
    s = srgeom.heisenberg()
    t = acceptance.solved("heisenberg", acceptance.HEIS_NORMAL, 64)
    p = V.project_to_H(V.random_smooth(64, 1), t, structure=s)
    with pytest.raises(InsufficientDataError):
        V.endpoint_order(s, t, p.phi)
    assert V.endpoint_order(s, t, V.random_smooth(64, 1)).slope == pytest.approx(1.0, abs=1e-6)


def test_first_order_bound_holds(engel_geodesic):
    s, t = engel_geodesic
    tab = V.first_order_check(s, t, V.sine(t.N, 2), [1e-3, 1e-2, 1e-1])
    assert tab.violations == 0
    assert tab.flow_norm_max <= tab.flow_norm_bound


@given(st.integers(0, 1000), st.floats(0.1, 5.0))
def test_projection_is_idempotent_and_nonexpansive(seed, scale):
    s = srgeom.engel()
    t = acceptance.solved("engel", acceptance.ENGEL_NORMAL, 128)
    phi = V.random_smooth(128, seed).scaled(scale)
    p1 = V.project_to_H(phi, t, structure=s).phi
    p2 = V.project_to_H(p1, t, structure=s).phi
    np.testing.assert_allclose(p2.values, p1.values, atol=1e-12 * scale)
    assert np.linalg.norm(p1.interior) <= np.linalg.norm(phi.interior) * (1 + 1e-12)
