from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srlab import interpdual as I
from srlab import oracles
from srlab.errors import DomainError
from srlab.testfunctions import random_smooth

STEP8 = np.where(np.arange(8) < 4, -1.0, 1.0)
RAND8 = np.array([0.0012301533574825742, 0.2987455375084699, -0.2741378553622176, -0.8905918387572742,
                  -0.45467078517172255, -0.9916465549964624, 0.060143602597438485, 1.3402152455545335])


# exponent arithmetic ------------------------------------------------------------------

def test_theta_kappa_reference_values():
    e = I.exponents(2, 2 / 3, "W")
    assert e.theta == pytest.approx(0.5, abs=1e-12)
    assert e.kappa == pytest.approx(1.25, abs=1e-12)
    assert (e.r, e.q_star, e.r_star) == (2.0, 2.0, 2.0)


@given(st.floats(0.01, 0.99))
def test_q_one_is_degenerate(zeta):
    t, k = I.theta_kappa(1.0, zeta)
    assert abs(t) <= 1e-12 and abs(k - 1) <= 1e-12


def test_case_w_at_step_two_has_theta_one():
    with pytest.raises(DomainError):
        I.exponents_for_step(2, 2.0, "W")
    assert I.exponents_for_step(2, 2.0, "G").theta == pytest.approx(1 / 3)


def test_admissible_ranges_are_exact_fractions():
    w = I.admissible_ranges(3, 2, "W")
    assert w.alpha_upper == Fraction(1, 2) and w.alpha_attained
    assert w.contains_alpha(Fraction(1, 2)) and not w.contains_alpha(Fraction(3, 5))
    g = I.admissible_ranges(3, 3, "G")
    assert g.beta_upper == Fraction(1, 6)
    assert g.kappa_upper(Fraction(1, 12)) == Fraction(11, 12)
    with pytest.raises(DomainError):
        I.admissible_ranges(3, 2, "G")


# sqrt lemma -----------------------------------------------------------------------------

@given(st.floats(1.0, 2.0), st.floats(0.1, 10.0), st.floats(-1, 1), st.floats(-50, 50))
def test_sqrt_lemma_pointwise(q, l, a, s):
    # one cell carries the whole integral, so this is the pointwise inequality
    assert I.sqrt_lemma_check(np.array([a * l]), np.array([s * l]), l, q) >= -1e-9 * (1 + abs(s * l) ** q)


def test_sqrt_lemma_rejects_fast_controls():
    with pytest.raises(DomainError):
        I.sqrt_lemma_check(np.array([2.0]), np.array([0.1]), 1.0, 1.5)


# primitives -------------------------------------------------------------------------

vecs = st.lists(st.floats(-10, 10), min_size=1, max_size=12).map(np.array)


@given(vecs, st.floats(0.01, 5))
def test_l1_projection_feasible_and_idempotent(v, r):
    p = I.project_l1_ball(v, r)
    assert np.sum(np.abs(p)) <= r * (1 + 1e-9)
    np.testing.assert_allclose(I.project_l1_ball(p, r), p, atol=1e-9)


@given(vecs, st.floats(0.01, 5), st.sampled_from([1.0, 2.0, np.inf]))
def test_ball_projection_is_nonexpansive(v, r, p):
    w = v[::-1].copy()
    assert np.linalg.norm(I.project_ball(v, p, r) - I.project_ball(w, p, r)) <= np.linalg.norm(v - w) + 1e-9


# primal / dual -------------------------------------------------------------------------

@pytest.mark.parametrize("u", [STEP8, RAND8], ids=["step", "random"])
@pytest.mark.parametrize("M", [0.3, 1.0, 4.0])
def test_both_sides_match_independent_oracles(u, M):
    s_ref = oracles.S_multiplier_oracle(u, M)
    k_ref = oracles.K_path_oracle(u, M)
    assert s_ref == pytest.approx(-k_ref, abs=1e-9)
    assert I.solve_S(u, M).value == pytest.approx(s_ref, abs=1e-6)
    assert I.solve_K(u, M).value == pytest.approx(k_ref, abs=1e-6)


def test_frozen_oracle_values():
    assert oracles.K_path_oracle(STEP8, 4.0) == pytest.approx(3.8465418546716483, rel=1e-12)
    assert oracles.K_path_oracle(RAND8, 2.0) == pytest.approx(1.3863195357866327, rel=1e-12)
    assert oracles.S_multiplier_oracle(RAND8, 0.3) == pytest.approx(-0.20794793036799797, rel=1e-10)


@pytest.mark.parametrize("M", [0.1, 0.5])
def test_small_M_regime_is_the_mean_deviation(M):
    # below the kink the constant w = mean(u) is optimal, so K = M ||u - mean||_2
    u = STEP8
    assert I.solve_K(u, M).value == pytest.approx(M * np.sqrt(np.mean((u - u.mean()) ** 2)), rel=1e-6)


def test_coordinate_descent_is_an_upper_bound():
    for M in (0.3, 2.0):
        assert oracles.K_coordinate_descent(RAND8, M) >= oracles.K_path_oracle(RAND8, M) - 1e-12


def test_duality_gap_random_instance():
    rng = np.random.default_rng(5)
    pair = I.duality_gap(rng.normal(size=64), 3.0)
    assert pair.relative_gap <= 1e-4
    rec = pair.to_record()
    assert rec["S"] <= 0 <= rec["K"]


@given(st.integers(0, 10_000), st.floats(0.2, 5.0), st.floats(0.1, 4.0))
def test_S_is_positively_homogeneous_in_u(seed, M, c):
    u = np.random.default_rng(seed).normal(size=8)
    assert oracles.S_multiplier_oracle(c * u, M) == pytest.approx(c * oracles.S_multiplier_oracle(u, M), rel=1e-6, abs=1e-9)


@given(st.integers(0, 10_000), st.floats(0.1, 5.0), st.floats(1.0, 3.0))
def test_minus_S_grows_with_M(seed, M, f):
    u = np.random.default_rng(seed).normal(size=8)
    assert -oracles.S_multiplier_oracle(u, f * M) >= -oracles.S_multiplier_oracle(u, M) - 1e-9


def test_constant_control_gives_zero():
    assert I.solve_S(np.ones(16), 2.0).value == 0.0
    assert I.solve_K(np.ones(16), 2.0).value == 0.0


def test_interpolation_ratio_and_m_sweep():
    e = I.exponents_for_step(3, 2.0, "G")
    u = np.sin(2 * np.pi * (np.arange(64) + 0.5) / 64)
    rep = I.verify_interpolation_bound(u, 1.0, e, [random_smooth(64, i) for i in range(10)], [0.5, 2.0, 8.0])
    assert np.isfinite(rep.max_ratio) and rep.skipped == 0
    assert np.all(np.isfinite(rep.m_surrogate)) and np.all(rep.m_surrogate >= 0)
