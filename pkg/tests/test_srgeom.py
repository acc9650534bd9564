import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srlab import srgeom
from srlab.errors import DomainError, HormanderViolation
from srlab.polyfield import PolyField

coord = st.floats(-1.5, 1.5, allow_nan=False)
points3 = st.tuples(coord, coord, coord).map(np.array)


def test_heisenberg_bracket_is_vertical_unit():
    h = srgeom.heisenberg()
    x = np.array([0.3, -0.7, 0.2])
    np.testing.assert_allclose(srgeom.lie_bracket(h, 0, 1, x), [0, 0, 1], atol=1e-14)


def test_martinet_bracket_closed_form():
    # [f1, f2] = (0, 0, -x2) with [X, Y] = (DY) X - (DX) Y
    m = srgeom.martinet()
    x = np.array([0.1, -0.7, 0.4])
    np.testing.assert_allclose(srgeom.lie_bracket(m, 0, 1, x), [0, 0, 0.7], atol=1e-14)


@pytest.mark.parametrize("name", ["heisenberg", "martinet", "engel"])
def test_analytic_and_fd_brackets_agree(name):
    s = srgeom.catalogue(name)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.uniform(-1, 1, s.dim_n)
        a = srgeom.lie_bracket(s, 0, 1, x, method="analytic")
        f = srgeom.lie_bracket(s, 0, 1, x, method="fd")
        np.testing.assert_allclose(a, f, atol=1e-7)


@pytest.mark.parametrize("name,x,step", [
    ("heisenberg", [0, 0, 0], 2),
    ("martinet", [0, 0, 0], 3),
    ("martinet", [0, 1, 0], 2),
    ("engel", [0, 0, 0, 0], 3),
])
def test_step(name, x, step):
    assert srgeom.step_at(srgeom.catalogue(name), np.asarray(x, float)) == step


def test_field_bounds_frozen():
    # sup of |f_j| over the sampled default box [-2, 2]^n
    assert srgeom.heisenberg().field_bound == pytest.approx(np.sqrt(2))
    assert srgeom.martinet().field_bound == pytest.approx(np.sqrt(5))
    assert srgeom.engel().field_bound == pytest.approx(3.0)


def test_constant_fields():
    assert srgeom.heisenberg().constant_fields() == []
    assert srgeom.martinet().constant_fields() == [1]
    assert srgeom.engel().constant_fields() == [0]


def test_domain_and_lookup_errors():
    with pytest.raises(DomainError):
        srgeom.heisenberg().check_point([5.0, 0, 0])
    with pytest.raises(KeyError):
        srgeom.catalogue("nope")
    with pytest.raises(IndexError):
        srgeom.lie_bracket(srgeom.heisenberg(), 0, 2, np.zeros(3))


def test_non_bracket_generating_structure_is_reported():
    flat = srgeom.SRStructure("flat", (PolyField.from_strings(["1", "0", "0"]),
                                       PolyField.from_strings(["0", "1", "0"])), 2, np.tile([-2.0, 2.0], (3, 1)))
    with pytest.raises(HormanderViolation):
        srgeom.step_at(flat, np.zeros(3))


def test_toml_round_trip(tmp_path):
    s = srgeom.engel()
    p = tmp_path / "engel.toml"
    srgeom.dump_structure(s, p)
    t = srgeom.load_structure(p)
    x = np.array([0.2, -0.3, 0.5, 0.1])
    np.testing.assert_allclose(t.F(x), s.F(x))
    assert t.declared_step == 3
    assert srgeom.resolve_structure(str(p)).dim_n == 4


@given(points3)
def test_bracket_antisymmetry(x):
    for s in (srgeom.heisenberg(), srgeom.martinet()):
        np.testing.assert_allclose(srgeom.lie_bracket(s, 0, 1, x), -srgeom.lie_bracket(s, 1, 0, x), atol=1e-12)


@given(points3)
def test_jacobi_identity(x):
    f1, f2 = srgeom.martinet().frame
    f3 = f1.bracket(f2)
    total = f1.bracket(f2.bracket(f3)) + f2.bracket(f3.bracket(f1)) + f3.bracket(f1.bracket(f2))
    np.testing.assert_allclose(total(x), 0.0, atol=1e-12)


@given(points3)
def test_orthonormal_frame_residual_zero(x):
    assert srgeom.orthonormality_residual(srgeom.heisenberg(), [x]) == 0.0
