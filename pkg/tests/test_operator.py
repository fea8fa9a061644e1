import numpy as np
import pytest

from magtunnel.errors import GaugeUnsupported
from magtunnel.model import ModelParams, QuarticShell
from magtunnel.spectral.eigen import lowest_eigenpairs
from magtunnel.spectral.grid import GridSpec
from magtunnel.spectral.operator import (LinearVectorPotential, assemble_operator,
                                         assemble_physical_operator, gauge_potential,
                                         gauge_transform_phase)


def _hermiticity(op, rng, pairs=20):
    worst = 0.0
    n = op.n_unknowns
    for _ in range(pairs):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        d = abs(np.vdot(op.matvec(u), v) - np.vdot(u, op.matvec(v)))
        worst = max(worst, d / (op.norm_estimate() * np.linalg.norm(u) * np.linalg.norm(v)))
    return worst


def test_grid_layout():
    g = GridSpec(((-1.0, 1.0),), (9,))
    assert g.spacing[0] == pytest.approx(0.2)
    assert np.allclose(g.axis(0), np.linspace(-0.8, 0.8, 9))
    p = GridSpec(((-1.0, 1.0),), (8,), periodic=True)
    assert np.allclose(p.axis(0), np.linspace(-1, 0.75, 8))
    assert g.refined().spacing[0] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        GridSpec(((-1.0, 1.0),), (4,))


def test_oscillator_levels():
    # second-order stencil: raw levels carry O(spacing**2) error, Richardson removes it
    exact = np.array([0.1, 0.3, 0.5, 0.7])
    ev = []
    for n in (256, 513):
        g = GridSpec(((-6.0, 6.0),), (n,))
        op = assemble_operator(g, None, lambda y: y**2, "none", h=0.1)
        ev.append(lowest_eigenpairs(op, 4, dense_threshold=2000).eigenvalues)
    assert np.max(np.abs(ev[0] - exact)) <= 5e-3
    ratio = (ev[0] - exact) / (ev[1] - exact)
    assert np.allclose(ratio, 4.0, rtol=0.01)
    rich = (4 * ev[1] - ev[0]) / 3
    assert np.max(np.abs(rich[:2] - exact[:2])) <= 1e-6


@pytest.mark.parametrize("gauge", ["symmetric", "landau", "none"])
def test_hermitian(gauge, separable, rng):
    g = GridSpec.cube(2.0, 10, 3)
    op = assemble_operator(g, None, separable, gauge, h=0.2, omega_prime=0.3)
    assert _hermiticity(op, rng) <= 1e-12
    A = op.to_sparse()
    assert abs(A - A.conj().T).max() <= 1e-14
    u = rng.standard_normal(op.n_unknowns)
    assert np.allclose(A @ u, op.matvec(u), atol=1e-12)


def test_hermitian_halfspace(separable, rng):
    g = GridSpec.cube(2.0, 10, 3)
    op = assemble_operator(g, None, separable, "symmetric", "dirichlet-halfspace-plus",
                           h=0.2, omega_prime=0.3, halfspace_offset=0.5)
    assert op.n_unknowns < g.size
    assert _hermiticity(op, rng) <= 1e-12


def test_physical_operator_hermitian(rng):
    mp = ModelParams(1.0, 0.1, 0.2)
    g = GridSpec.cube(1.5, 10, 3)
    op = assemble_physical_operator(g, mp, QuarticShell())
    assert _hermiticity(op, rng) <= 1e-12


def test_gauge_conjugation_exact(rng):
    # landau = symmetric + grad(chi) with chi = -omega' y1 y2
    wp, h = 0.4, 0.15
    g = GridSpec.cube(2.0, 16, 2)
    W = lambda y1, y2: 0.5 * (y1**2 + y2**2)
    sym = assemble_operator(g, None, W, "symmetric", h=h, omega_prime=wp)
    lan = assemble_operator(g, None, W, "landau", h=h, omega_prime=wp)
    ph = gauge_transform_phase(g, lambda y1, y2: -wp * y1 * y2, h)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    lhs = lan.apply(u)
    rhs = ph * sym.apply(np.conj(ph) * u)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * lan.norm_estimate() * np.max(np.abs(u))


def test_linear_phase_shift_spectrum():
    c = np.array([0.3, -0.7])
    g = GridSpec.cube(2.0, 20, 2)
    W = lambda y1, y2: y1**2 + 2 * y2**2
    base = assemble_operator(g, None, W, "symmetric", h=0.2, omega_prime=0.25)
    a = gauge_potential("symmetric", 2, 0.25)
    shifted = assemble_operator(g, None, W, "custom-linear", h=0.2,
                                vector_potential=LinearVectorPotential(a.matrix, a.offset + c))
    e0 = lowest_eigenpairs(base, 4, keep_vectors=False).eigenvalues
    e1 = lowest_eigenpairs(shifted, 4, keep_vectors=False).eigenvalues
    assert np.max(np.abs(e0 - e1)) <= 1e-10


def test_vector_potential_field():
    assert gauge_potential("symmetric", 3, 0.5).field[2] == pytest.approx(1.0)
    assert gauge_potential("landau", 2, 0.5).field == pytest.approx(1.0)
    assert gauge_potential("none", 3).is_zero


def test_nonlinear_gauge_rejected():
    g = GridSpec.cube(1.0, 8, 2)
    with pytest.raises(GaugeUnsupported):
        assemble_operator(g, None, np.zeros(g.shape), "custom-linear", h=0.1,
                          vector_potential=lambda y: np.array([y[1] ** 2, 0.0]))
    with pytest.raises(GaugeUnsupported):
        assemble_operator(g, None, np.zeros(g.shape), "coulomb", h=0.1)


def test_affine_callable_accepted():
    g = GridSpec.cube(1.0, 8, 2)
    op = assemble_operator(g, None, np.zeros(g.shape), "custom-linear", h=0.1,
                           vector_potential=lambda y: np.array([-y[1], y[0]]) + 0.5)
    assert np.allclose(op.vector_potential.matrix, [[0, -1], [1, 0]])
    assert np.allclose(op.vector_potential.offset, 0.5)


def test_reflection_commutator(separable, twisted):
    g = GridSpec(((-1.5, 1.5), (-1.5, 1.5), (-2.0, 2.0)), (10, 10, 12))
    for pot in (separable, twisted):
        op = assemble_operator(g, None, pot, "symmetric", h=0.2, omega_prime=0.05)
        assert op.commutator_defect() <= 1e-12
    skew = GridSpec(((-1.5, 1.5), (-1.5, 1.5), (-2.0, 2.5)), (10, 10, 12))
    op = assemble_operator(skew, None, separable, "none", h=0.2)
    assert op.commutator_defect() == np.inf
