import numpy as np
import pytest

from conftest import dense_laplacian, random_graph
from graphvortex.cartan import make_vortex, preset
from graphvortex.errors import GraphError, NonzeroMean
from graphvortex.graph import WeightedGraph, gradient_form, integrate, laplacian
from graphvortex.poisson import background, dirac, solve_zero_mean


def test_dirac_unit_measure(K2):
    np.testing.assert_array_equal(dirac(K2, "a"), [1.0, 0.0])


def test_dirac_weighted_measure():
    g = WeightedGraph(["a", "b", "c"], [("a", "b", 1.0), ("b", "c", 1.0)], [2.0, 1.0, 3.0])
    np.testing.assert_array_equal(dirac(g, "a"), [0.5, 0.0, 0.0])
    for p in g.vertices:
        assert integrate(g, dirac(g, p)) == 1.0


def test_dirac_unknown_vertex(K2):
    with pytest.raises(GraphError):
        dirac(K2, "q")


def test_solve_K2(K2):
    np.testing.assert_allclose(solve_zero_mean(K2, [1.0, -1.0]), [-0.5, 0.5], atol=1e-15)


def test_solve_zero_rhs(C3):
    np.testing.assert_array_equal(solve_zero_mean(C3, [0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])


def test_solve_C3(C3):
    # by hand: u = (-2/3, 1/3, 1/3) has Delta u(v1) = 2 * (1/3 + 2/3) = 2
    u = solve_zero_mean(C3, [2.0, -1.0, -1.0])
    np.testing.assert_allclose(u, [-2 / 3, 1 / 3, 1 / 3], atol=1e-14)


def test_nonzero_mean_rejected(K2):
    with pytest.raises(NonzeroMean):
        solve_zero_mean(K2, [1.0, 0.0])


def test_random_against_pseudoinverse(rng):
    # oracle: minimum-norm solution in the mu-weighted inner product via lstsq
    for _ in range(20):
        g = random_graph(rng)
        f = rng.normal(size=g.n_vertices)
        f -= integrate(g, f) / g.volume
        u = solve_zero_mean(g, f)
        assert np.abs(laplacian(g, u) - f).max() <= 1e-10 * np.abs(f).max()
        assert abs(integrate(g, u)) <= 1e-12 * g.volume * max(1.0, np.abs(u).max())
        D = dense_laplacian(g)
        aug = np.vstack([D, g.mu])
        ref = np.linalg.lstsq(aug, np.append(f, 0.0), rcond=None)[0]
        np.testing.assert_allclose(u, ref, atol=1e-9)


def test_linearity(rng):
    g = random_graph(rng)
    f1, f2 = rng.normal(size=(2, g.n_vertices))
    f1 -= integrate(g, f1) / g.volume
    f2 -= integrate(g, f2) / g.volume
    lhs = solve_zero_mean(g, 2.5 * f1 - 1.5 * f2)
    rhs = 2.5 * solve_zero_mean(g, f1) - 1.5 * solve_zero_mean(g, f2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_stacked_rows(rng):
    g = random_graph(rng)
    F = rng.normal(size=(3, g.n_vertices))
    F -= (integrate(g, F) / g.volume)[:, None]
    U = solve_zero_mean(g, F)
    for k in range(3):
        np.testing.assert_allclose(U[k], solve_zero_mean(g, F[k]), atol=1e-14)


def test_background_K2(K2):
    bg = background(K2, make_vortex(preset("A1"), points=[["a"]], graph=K2))
    np.testing.assert_allclose(bg.u0, [[-np.pi, np.pi]], atol=1e-14)
    np.testing.assert_allclose(bg.grad_energy, [4 * np.pi**2], rtol=1e-14)


def test_background_no_vortices(C3):
    bg = background(C3, make_vortex(preset("A2"), points=[[], []], graph=C3))
    np.testing.assert_array_equal(bg.u0, np.zeros((2, 3)))


def test_background_random_placements(rng):
    for _ in range(20):
        g = random_graph(rng)
        pts = [list(rng.choice(g.vertices, size=rng.integers(0, 4))) for _ in range(2)]
        vort = make_vortex(preset("G2"), points=pts, graph=g)
        bg = background(g, vort)
        for i, comp in enumerate(pts):
            rhs = sum((4 * np.pi * g.dirac(p) for p in comp), np.zeros(g.n_vertices))
            rhs -= 4 * np.pi * len(comp) / g.volume
            assert np.abs(laplacian(g, bg.u0[i]) - rhs).max() <= 1e-10
            assert abs(integrate(g, bg.u0[i])) <= 1e-10
            energy = integrate(g, gradient_form(g, bg.u0[i], bg.u0[i]))
            assert bg.grad_energy[i] == pytest.approx(energy, rel=1e-9, abs=1e-12)
