"""Small hand-checkable cases, one or two per public routine."""
import time
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg

from srlab import acceptance, geodesics, interpdual as I, oracles, regularity as R, spectral as F, srgeom
from srlab import variation as V
from srlab.errors import DegenerateInputError, InsufficientDataError
from srlab.polyfield import PolyField
from srlab.regularity import SampledControl
from srlab.testfunctions import TestFunction, hat, sine

ORIGIN = np.zeros(3)


def left(f, N):
    return SampledControl.from_function(f, N, where="left")


def step(N=4096):
    return left(lambda t: np.where(t < 0.5, -1.0, 1.0), N)


# frames and brackets -------------------------------------------------------------------

def test_frame_columns_at_reference_points():
    H = srgeom.heisenberg()
    np.testing.assert_array_equal(srgeom.eval_frame(H, ORIGIN), [[1, 0], [0, 1], [0, 0]])
    np.testing.assert_array_equal(srgeom.eval_frame(H, [0.0, 1.0, 0.0]), [[1, 0], [0, 1], [-0.5, 0]])
    M = srgeom.martinet()
    np.testing.assert_array_equal(srgeom.eval_frame(M, [0.0, 1.0, 0.0]), [[1, 0], [0, 1], [0.5, 0]])


def test_orthonormality_residual_detects_a_skewed_frame():
    skew = srgeom.SRStructure("skew", (PolyField.from_strings(["1", "0", "0"]),
                                       PolyField.from_strings(["1", "1", "x1"])), 2,
                              np.tile([-2.0, 2.0], (3, 1)), metric=np.eye(3))
    assert srgeom.orthonormality_residual(skew, [ORIGIN]) == pytest.approx(1.0)
    assert srgeom.orthonormality_residual(skew, []) == 0.0


# integration, flow, reparametrization ----------------------------------------------------

@pytest.mark.parametrize("name", ["heisenberg", "martinet"])
def test_unit_horizontal_control_reaches_unit_point(name):
    S = srgeom.catalogue(name)
    u = np.vstack([np.ones(64), np.zeros(64)])
    traj = geodesics.integrate(S, ORIGIN, u)
    np.testing.assert_allclose(traj.states[-1], [1.0, 0.0, 0.0], atol=1e-10)
    assert traj.length_l == pytest.approx(1.0, abs=1e-14)


def test_zero_control_gives_a_constant_trajectory():
    x0 = np.array([0.1, -0.2, 0.3])
    traj = geodesics.integrate(srgeom.heisenberg(), x0, np.zeros((2, 32)))
    assert np.all(traj.states == x0)
    assert traj.length_l == 0.0


def test_martinet_horizontal_segment_length():
    traj = geodesics.solve_shortest(srgeom.martinet(), ORIGIN, [1.0, 0.0, 0.0], N=64)
    assert traj.length_l == pytest.approx(1.0, abs=1e-3)


def test_flow_along_vertical_line_is_a_matrix_exponential():
    H = srgeom.heisenberg()
    traj = geodesics.integrate(H, ORIGIN, np.vstack([np.zeros(64), np.ones(64)]))
    # varying component 0 leaves u2 Df2 = const * E_{3,1}
    J = np.zeros((3, 3))
    J[2, 0] = 0.5
    fl = geodesics.variational_flow(H, traj, varied=0)
    np.testing.assert_allclose(fl.matrices[-1], scipy.linalg.expm(J), atol=1e-12)


def test_flow_is_identity_without_other_components():
    H = srgeom.heisenberg()
    traj = geodesics.integrate(H, ORIGIN, np.vstack([np.ones(64), np.zeros(64)]))
    fl = geodesics.variational_flow(H, traj, varied=0)
    np.testing.assert_allclose(fl.matrices, np.broadcast_to(np.eye(3), fl.matrices.shape), atol=1e-15)
    flat = srgeom.SRStructure("flat", (PolyField.from_strings(["1", "0", "0"]),
                                       PolyField.from_strings(["0", "1", "0"])), 2, np.tile([-2.0, 2.0], (3, 1)))
    ft = geodesics.integrate(flat, ORIGIN, np.vstack([np.ones(16), np.ones(16)]))
    fl = geodesics.variational_flow(flat, ft, varied=0)
    np.testing.assert_allclose(fl.matrices[-1], np.eye(3), atol=1e-15)


def test_reparam_undoes_a_linear_time_warp():
    H = srgeom.heisenberg()
    N, c = 256, 0.7
    t = (np.arange(N) + 0.5) / N
    warped = geodesics.integrate(H, ORIGIN, np.vstack([2 * t * c, np.zeros(N)]))
    out = geodesics.reparam_constant_speed(warped)
    np.testing.assert_allclose(out.controls[0], c, rtol=1e-12)
    np.testing.assert_allclose(out.states[-1], warped.states[-1], atol=1e-12)


def test_reparam_leaves_constant_speed_input_alone():
    H = srgeom.heisenberg()
    u = np.vstack([np.cos(np.linspace(0, 2, 64)), np.sin(np.linspace(0, 2, 64))]) * 0.4
    traj = geodesics.integrate(H, ORIGIN, u)
    out = geodesics.reparam_constant_speed(traj)
    np.testing.assert_allclose(out.controls, traj.controls, atol=1e-14)


def test_reparam_rejects_zero_control():
    traj = geodesics.integrate(srgeom.heisenberg(), ORIGIN, np.zeros((2, 16)))
    with pytest.raises(DegenerateInputError):
        geodesics.reparam_constant_speed(traj)


@pytest.mark.slow
def test_martinet_vertical_exponent_is_between_horizontal_and_step_three():
    rep = geodesics.ballbox_probe(srgeom.martinet(), ORIGIN, [0, 0, 1], [0.01, 0.02, 0.04], N=64, restarts=3)
    assert 1 / 3 - 0.05 <= rep.exponent <= 1.0 + 0.05


# regularity --------------------------------------------------------------------------------

def test_step_above_one_half_sits_at_the_grid_floor():
    assert R.holder_constant(step(), 2.0, 0.6).at_grid_floor
    assert not R.holder_constant(step(), 2.0, 0.5).at_grid_floor


def test_step_besov_norm():
    assert R.besov_norm(step(), 2.0, 0.5) == pytest.approx(3.0, rel=0.02)
    c = left(lambda t: -1.7 + 0 * t, 1024)
    assert R.besov_norm(c, 2.0, 0.5) == pytest.approx(1.7, rel=1e-14)
    assert R.besov_norm(left(lambda t: 0 * t, 1024), 2.0, 0.5) == 0.0


def test_step_poincare_ratio():
    assert R.poincare_ratio(step(), 2.0, 0.5).ratio == pytest.approx(2.0, rel=0.02)


def test_smooth_control_is_lipschitz_in_l2():
    u = SampledControl.from_function(lambda t: np.sin(2 * np.pi * t), 4096)
    assert R.fit_exponent(u, 2.0).alpha == pytest.approx(1.0, abs=0.05)


def test_mollifier_rate_flags_divergence_below_one_half():
    eps = [0.4, 0.2, 0.1, 0.05, 0.025]
    assert R.smooth_approx_rate(step(), 0.5, eps).diverging
    assert not R.smooth_approx_rate(step(), 2.0, eps).diverging


# interpolation and duality ------------------------------------------------------------------

def test_sqrt_lemma_hand_values():
    ones = np.ones(16)
    assert I.sqrt_lemma_check(ones, 0 * ones, 1.0, 2.0) == 0.0
    assert I.sqrt_lemma_check(ones, ones, 1.0, 2.0) == pytest.approx(4.0, abs=1e-14)


def test_exponent_reference_values():
    e = I.exponents(2.0, 0.5, "G")
    assert (e.theta, e.kappa) == pytest.approx((1 / 3, 1.0), abs=1e-14)
    assert I.admissible_ranges(3, 4, "W").alpha_upper == Fraction(1, 4)
    assert I.admissible_ranges(3, 3, "G").kappa_upper(Fraction(1, 10)) == Fraction(9, 10)


def test_zero_budget_and_constant_controls_give_zero():
    u = np.where(np.arange(8) < 4, -1.0, 1.0)
    assert I.solve_S(u, 0.0).value == pytest.approx(0.0, abs=1e-12)
    assert I.solve_K(u, 0.0).value == pytest.approx(0.0, abs=1e-12)
    c = np.full(8, 0.3)
    assert I.solve_S(c, 2.0).value == pytest.approx(0.0, abs=1e-12)
    assert I.duality_gap(c, 2.0).gap == pytest.approx(0.0, abs=1e-10)
    assert I.duality_gap(u, 0.0).gap == pytest.approx(0.0, abs=1e-10)


def test_K_solver_agrees_with_coordinate_descent():
    u = np.where(np.arange(8) < 4, -1.0, 1.0)
    assert I.solve_K(u, 1.0).value == pytest.approx(oracles.K_coordinate_descent(u, 1.0), abs=1e-3)


def test_interpolation_ratio_vanishes_for_orthogonal_derivative():
    N = 256
    u1 = np.sin(2 * np.pi * (np.arange(N) + 0.5) / N)
    rep = I.verify_interpolation_bound(u1, 1.0, I.exponents(2.0, 0.5, "G"), [sine(N, 2)])
    assert abs(rep.max_ratio) <= 1e-12
    rep = I.verify_interpolation_bound(np.ones(N), 1.0, I.exponents(2.0, 0.5, "G"), [hat(N), sine(N, 1)])
    assert np.all(np.abs(rep.ratios) <= 1e-12)


# variation -----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def martinet_line():
    return srgeom.martinet(), acceptance.solved("martinet", acceptance.MART_ABNORMAL, 128)


def test_zero_test_function_leaves_the_curve_unchanged(martinet_line):
    S, traj = martinet_line
    zero = TestFunction.from_interior(np.zeros(traj.N - 1))
    y = V.vary(S, traj, zero, 0.3)
    np.testing.assert_array_equal(y.states, traj.states)
    tab = V.first_order_check(S, traj, zero, [0.0, 0.01])
    assert np.all(tab.deviation == 0.0) and np.all(tab.bound == 0.0)
    with pytest.raises(InsufficientDataError):
        V.endpoint_order(S, traj, zero)


def test_first_order_bound_on_the_abnormal_line(martinet_line):
    S, traj = martinet_line
    assert V.first_order_check(S, traj, sine(traj.N, 1), [0.01]).violations == 0


def test_first_order_bound_on_a_heisenberg_geodesic():
    H = srgeom.heisenberg()
    traj = acceptance.solved("heisenberg", [0.3, 0.4, 0.2], 128)
    assert V.first_order_check(H, traj, hat(traj.N), [1e-3, 1e-2, 1e-1]).violations == 0


# spectral ------------------------------------------------------------------------------------

def test_constant_and_cosine_coefficients():
    tab = F.fourier_coeffs(left(lambda t: 2.5 + 0 * t, 64), 8)
    assert tab.coeff(0)[0] == pytest.approx(2.5, abs=1e-15)
    assert np.max(np.abs(np.delete(tab.coefficients[0], 8))) <= 1e-15
    cos = F.fourier_coeffs(left(lambda t: np.cos(2 * np.pi * t), 64), 8)
    assert cos.coeff(1)[0] == pytest.approx(0.5, abs=1e-15)
    assert cos.coeff(-1)[0] == pytest.approx(0.5, abs=1e-15)


def test_constant_control_series_values():
    tab = F.fourier_coeffs(left(lambda t: -3.0 + 0 * t, 256), 64)
    assert F.weighted_sum(tab, 0.7).value == 0.0
    assert F.ell_gamma_norm(tab, 1.0).value == pytest.approx(3.0, abs=1e-14)


def test_ell_gamma_of_the_step():
    tab = F.fourier_coeffs(step(16384), 2048)
    assert F.ell_gamma_norm(tab, 2.0).converging
    assert not F.ell_gamma_norm(tab, 1.0).converging


def test_trig_polynomial_partial_sums_are_exact():
    u = left(lambda t: np.cos(2 * np.pi * 3 * t) - np.sin(2 * np.pi * 2 * t), 256)
    errs = F.partial_sum_error(u, [3, 8, 16])
    assert np.all(errs.errors <= 1e-13)


# acceptance budget ---------------------------------------------------------------------------

def test_smoke_suite_runs_in_under_a_minute():
    t0 = time.perf_counter()
    acceptance.run_suite("smoke")
    assert time.perf_counter() - t0 < 60.0
