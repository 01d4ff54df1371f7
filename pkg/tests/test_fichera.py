from math import factorial

import mpmath
import numpy as np
import pytest

from avem3d.fichera import fichera_problem, grad_norm_sq, kuhn_tets, _uniform_bisection
from avem3d.mesh import MeshForest
from avem3d.quadrature import QUAD_BARY, QUAD_WEIGHTS, h1_error, integrate_singular, integrate_tets


def exact_grad_norm_sq(alpha):
    """``int |grad r^alpha|^2`` over seven unit cubes.

    Each cube splits into three pyramids with apex at the origin; in
    scaled coordinates the radial integral is elementary, leaving a
    smooth integral over the unit square.
    """
    I2 = mpmath.quad(lambda s, t: (1 + s * s + t * t) ** (alpha - 1), [0, 1], [0, 1])
    return float(7 * alpha * alpha * 3 * I2 / (2 * alpha + 1))


def test_source_value():
    p = fichera_problem(0.5)
    assert p.f(np.array([[1.0, 0.0, 0.0]]))[0] == pytest.approx(0.25, abs=1e-15)
    assert p.u_exact(np.array([[0.0, 3.0, 4.0]]))[0] == pytest.approx(np.sqrt(5.0))


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_pde_by_finite_differences(alpha):
    p = fichera_problem(alpha)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.3, 0.9, (10, 3)) * rng.choice([-1, 1], (10, 3))
    h = 1e-4
    E = np.eye(3) * h
    lap = sum(p.u_exact(x + E[a]) - 2 * p.u_exact(x) + p.u_exact(x - E[a]) for a in range(3)) / h ** 2
    assert np.allclose(-lap + p.u_exact(x), p.f(x), rtol=1e-5, atol=1e-5)
    grad = np.column_stack([(p.u_exact(x + E[a]) - p.u_exact(x - E[a])) / (2 * h) for a in range(3)])
    assert np.allclose(grad, p.grad_exact(x), rtol=1e-7)


def test_singular_point_raises():
    p = fichera_problem(0.5)
    with pytest.raises(ValueError):
        p.f(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        p.grad_exact(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        fichera_problem(1.0)


def test_problem_data():
    p = fichera_problem(0.5)
    assert len(p.cubes) == 7
    assert p.K is None and p.c == 1.0
    m = MeshForest.from_cubes(p.cubes)
    assert len(m.coords) == 26 and len(m.leaves) == 42


@pytest.mark.parametrize("alpha, rel", [(0.5, 1e-4), (0.25, 1e-3), (0.75, 1e-4)])
def test_grad_norm_against_closed_form(alpha, rel):
    assert grad_norm_sq(alpha) == pytest.approx(exact_grad_norm_sq(alpha), rel=rel)


def test_quadrature_rule_exact_for_degree_five():
    assert QUAD_WEIGHTS.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(QUAD_BARY.sum(axis=1), 1.0)
    # int over the unit simplex of x^a y^b z^c = a! b! c! / (a+b+c+3)!
    P = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]], dtype=float)
    for a, b, c in [(5, 0, 0), (2, 2, 1), (1, 1, 3), (0, 4, 1), (2, 1, 1)]:
        got = integrate_tets(P, lambda x: x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c)[0]
        want = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
        assert got == pytest.approx(want, rel=1e-12)


def test_singular_integration_of_inverse_radius():
    # int_{[0,1]^3} 1/r via the pyramid reduction
    want = float(1.5 * mpmath.quad(lambda s, t: (1 + s * s + t * t) ** -0.5, [0, 1], [0, 1]))
    P = _uniform_bisection(kuhn_tets([(0, 0, 0)]), 3)
    got = integrate_singular(P, lambda x: 1.0 / np.linalg.norm(x, axis=1), levels=4).sum()
    assert got == pytest.approx(want, rel=2e-3)


def test_uniform_bisection_preserves_volume():
    P = kuhn_tets([(0, 0, 0), (1, 0, 0)])
    Q = _uniform_bisection(P, 4)
    assert len(Q) == 12 * 16
    vol = np.abs(np.linalg.det(Q[:, 1:] - Q[:, :1])).sum() / 6
    assert vol == pytest.approx(2.0, rel=1e-14)


def test_zero_discrete_solution_has_unit_error():
    p = fichera_problem(0.5)
    snap = MeshForest.from_cubes(p.cubes).snapshot()
    assert h1_error(snap, np.zeros((snap.n_elements, 3)), p) == pytest.approx(1.0, abs=1e-3)
