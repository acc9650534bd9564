import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srlab import geodesics, srgeom
from srlab.errors import DomainError, EscapeError
from srlab.geodesics import SolverOptions


@pytest.fixture(scope="module")
def heis():
    return srgeom.heisenberg()


def test_horizontal_segment_has_euclidean_length(heis):
    t = geodesics.solve_shortest(heis, np.zeros(3), np.array([1.0, 0, 0]), 64)
    assert t.length_l == pytest.approx(1.0, abs=1e-9)
    assert t.info["certified"]
    assert t.info["label"] == "candidate local minimizer"


@pytest.mark.parametrize("z", [0.02, 0.1, 0.5])
def test_vertical_distance_matches_isoperimetric_oracle(heis, z):
    # a circle of perimeter L encloses area L^2 / (4 pi) = z
    t = geodesics.solve_shortest(heis, np.zeros(3), np.array([0, 0, z]), 128)
    assert t.info["certified"]
    assert t.length_l == pytest.approx(math.sqrt(4 * math.pi * z), rel=2e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_small_vertical_targets_do_not_collapse(heis, seed):
    t = geodesics.solve_shortest(heis, np.zeros(3), np.array([0, 0, 0.05]), 64, SolverOptions(seed=seed))
    assert t.info["certified"] and t.info["stationarity"] < 1e-4


def test_solution_is_constant_speed_and_deterministic():
    s = srgeom.martinet()
    a = geodesics.solve_shortest(s, np.zeros(3), np.array([0.2, 0.3, 0.1]), 64, SolverOptions(seed=3))
    b = geodesics.solve_shortest(s, np.zeros(3), np.array([0.2, 0.3, 0.1]), 64, SolverOptions(seed=3))
    assert np.max(np.abs(a.speeds - a.length_l)) <= 1e-12
    np.testing.assert_array_equal(a.controls, b.controls)


def test_coincident_endpoints(heis):
    t = geodesics.solve_shortest(heis, np.zeros(3), np.zeros(3), 16)
    assert t.length_l == 0.0 and t.info["certified"]


def test_integrate_reports_escape_time(heis):
    with pytest.raises(EscapeError) as info:
        geodesics.integrate(heis, np.zeros(3), np.vstack([np.full(100, 4.0), np.zeros(100)]))
    assert info.value.exit_time == pytest.approx(0.51, abs=0.011)


def test_endpoint_sensitivity_matches_finite_differences():
    s = srgeom.engel()
    rng = np.random.default_rng(0)
    U = 0.3 * rng.normal(size=(2, 24))
    X, S = geodesics.endpoint_sensitivity(s, np.zeros(4), U)
    eps = 1e-6
    for i, j in [(0, 0), (7, 1), (23, 1)]:
        Up, Um = U.copy(), U.copy()
        Up[j, i] += eps
        Um[j, i] -= eps
        fd = (geodesics.integrate(s, np.zeros(4), Up).states[-1] - geodesics.integrate(s, np.zeros(4), Um).states[-1]) / (2 * eps)
        np.testing.assert_allclose(S[i, :, j], fd, atol=1e-8)


def test_variational_flow_starts_at_identity(heis):
    t = geodesics.integrate(heis, np.zeros(3), 0.5 * np.ones((2, 32)))
    fl = geodesics.variational_flow(heis, t, 0)
    np.testing.assert_allclose(fl.matrices[0], np.eye(3))
    np.testing.assert_allclose(np.einsum("tij,tjk->tik", fl.matrices, fl.inverses), np.broadcast_to(np.eye(3), fl.matrices.shape), atol=1e-12)


def test_reparam_keeps_endpoint_and_length(heis):
    t = geodesics.integrate(heis, np.zeros(3), np.vstack([np.linspace(0.1, 1.0, 200), np.linspace(0.5, 0.2, 200)]))
    r = geodesics.reparam_constant_speed(t)
    assert np.ptp(r.speeds) <= 1e-12
    assert r.length_l == pytest.approx(t.length_l, rel=1e-12)
    np.testing.assert_allclose(r.states[-1], t.states[-1], atol=5e-3)


def test_serialization_round_trips_exactly(heis, tmp_path):
    t = geodesics.solve_shortest(heis, np.zeros(3), np.array([0.3, 0.4, 0.2]), 32)
    back = geodesics.from_json(geodesics.to_json(t))
    np.testing.assert_array_equal(back.controls, t.controls)
    assert back.info == t.info
    geodesics.save_text(t, tmp_path / "t.txt")
    txt = geodesics.load_text(tmp_path / "t.txt")
    np.testing.assert_array_equal(txt.states, t.states)
    assert txt.structure.name == "heisenberg"


def test_ballbox_rejects_probe_outside_box(heis):
    with pytest.raises(DomainError):
        geodesics.ballbox_probe(heis, np.zeros(3), [0, 0, 1], [1.0, 3.0])


@given(st.floats(0.2, 3.0), st.floats(0.01, 10.0))
def test_fit_loglog_recovers_power_laws(p, c):
    x = np.logspace(-2, 0, 6)
    slope, icpt, res = geodesics.fit_loglog(x, c * x ** p)
    assert slope == pytest.approx(p, abs=1e-10)
    assert math.exp(icpt) == pytest.approx(c, rel=1e-9)
    assert res < 1e-10
