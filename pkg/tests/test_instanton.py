import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from magtunnel.errors import DegenerateMetric
from magtunnel.instanton import (InstantonOptions, InstantonPath, agmon_length, bowed_path, compute_wkb,
                                 cumulative_agmon, leading_amplitude, magnetic_corrections,
                                 minimize_instanton, profile_rows, straight_path,
                                 wkb_phase_along)
from magtunnel.potentials import ScalarPotential, SeparableDoubleWell

QUARTIC = SeparableDoubleWell(0.0)
TWISTED_S = 1.3881031737714136


class FlatWell(ScalarPotential):
    """Constant W = c**2 with wells far off the test segment."""

    def __init__(self, c):
        self.c = c

    @property
    def wells(self):
        return (np.array([0.0, 0.0, -10.0]), np.array([0.0, 0.0, 10.0]))

    def value(self, y):
        return np.full(np.shape(y)[:-1], self.c**2)

    def hessian(self, y):
        return np.zeros(np.shape(y) + (3,))


def _axis_path(pot, n=201):
    ym, yp = pot.wells
    nodes = straight_path(ym, yp, n)
    return InstantonPath(nodes, np.linspace(0, 1, n), 0.0, 0.0, 0.0, True, 0.0, 0)


def test_agmon_length_quartic_segment():
    nodes = straight_path([0, 0, -1], [0, 0, 1], 101)
    assert agmon_length(nodes, 0.0, QUARTIC) == pytest.approx(4 / 3, abs=1e-4)
    assert agmon_length(nodes[:1], 0.0, QUARTIC) == 0.0


def test_agmon_length_second_order():
    errs = [agmon_length(straight_path([0, 0, -1], [0, 0, 1], n), 0.0, QUARTIC) - 4 / 3
            for n in (51, 101, 201)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


def test_separable_minimizer_is_axis(separable):
    p = minimize_instanton(None, separable, init=bowed_path(*separable.wells, 101, 0.4))
    assert p.converged
    assert abs(p.action - 4 / 3) <= 1e-6
    assert np.max(np.abs(p.nodes[:, :2])) <= 1e-6
    assert np.allclose(p.nodes[0], separable.wells[0], atol=1e-10)
    assert np.allclose(p.nodes[-1], separable.wells[1], atol=1e-10)


def test_optimal_init_is_fixed_point(separable):
    p = minimize_instanton(None, separable)
    q = minimize_instanton(None, separable, init=p.nodes)
    assert q.iterations <= 2
    assert abs(q.action - p.action) <= 1e-10


def test_mirrored_seeds_mirror(separable):
    # W is even in y1: seeds bowed to +y1 and -y1 relax to mirror images
    a = minimize_instanton(None, separable, init=bowed_path(*separable.wells, 101, 0.3, (1, 0, 0)))
    b = minimize_instanton(None, separable,
                           init=bowed_path(*separable.wells, 101, -0.3, (1, 0, 0)))
    assert np.allclose(a.nodes * [-1, 1, 1], b.nodes, atol=1e-8)
    assert abs(a.action - b.action) <= 1e-10


def test_p0_path_degenerates(p0):
    mp, V = p0
    with pytest.raises(DegenerateMetric):
        minimize_instanton(mp, V)


def test_twisted_fixture(twisted_instanton):
    best = twisted_instanton.best
    assert best.action == pytest.approx(TWISTED_S, abs=1e-9)
    assert twisted_instanton.multiplicity == 1
    assert all(p.action >= best.action for p in twisted_instanton.paths)


def test_agmon_equal_spacing(twisted, twisted_instanton):
    inc = np.diff(cumulative_agmon(twisted_instanton.best.nodes, 0.0, twisted))
    assert np.max(np.abs(inc / inc.mean() - 1)) <= 0.01


def test_mirror_property(twisted, twisted_instanton):
    nodes = twisted_instanton.best.nodes
    mirrored = nodes[::-1] * [1, 1, -1]
    assert np.max(np.abs(mirrored - nodes)) <= 1e-6
    assert abs(agmon_length(mirrored, 0.0, twisted) - agmon_length(nodes, 0.0, twisted)) <= 1e-10


def test_reparametrization_invariance(twisted):
    # Euclidean node spacing keeps the midpoint rule in its asymptotic regime
    p = minimize_instanton(None, twisted, opts=InstantonOptions(n_nodes=201, spacing="euclidean"))
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p.nodes, axis=0), axis=1))])
    spline = CubicSpline(s / s[-1], p.nodes)
    quad0 = p.action_raw - p.action
    for n in (151, 301, 601):
        err = agmon_length(spline(np.linspace(0, 1, n)), 0.0, twisted) - p.action
        assert abs(err) <= 1.2 * abs(quad0) * (201 / n) ** 2


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_minimality(k, a1, a2):
    from magtunnel.potentials import TwistedValleyWell

    pot = TwistedValleyWell()
    nodes = _TWISTED_NODES(pot)
    t = np.linspace(0, 1, len(nodes))[:, None]
    bump = np.sin(k * np.pi * t) * np.array([a1, a2, 0.5 * a1])
    assert agmon_length(nodes + bump, 0.0, pot) >= agmon_length(nodes, 0.0, pot) - 1e-9


_cache = {}


def _TWISTED_NODES(pot):
    if "nodes" not in _cache:
        _cache["nodes"] = minimize_instanton(None, pot, opts=None).nodes
    return _cache["nodes"]


def test_phase_along_quartic():
    p = minimize_instanton(None, QUARTIC)
    phi = wkb_phase_along(p, QUARTIC)
    z = p.nodes[:, 2]
    assert phi[0] == 0.0
    assert phi[-1] == pytest.approx(p.action, abs=1e-14)
    assert np.all(np.diff(phi) >= 0)
    assert np.max(np.abs(phi - (z - z**3 / 3 + 2 / 3))) <= 1e-5


def test_eikonal_along_path(twisted, twisted_instanton):
    p = twisted_instanton.best
    phi = cumulative_agmon(p.nodes, 0.0, twisted)
    ds = np.linalg.norm(np.diff(p.nodes, axis=0), axis=1)
    mid = 0.5 * (p.nodes[1:] + p.nodes[:-1])
    assert np.allclose((np.diff(phi) / ds) ** 2, twisted.value(mid), rtol=1e-12, atol=1e-14)


def test_corrections_vanish_without_field(twisted, twisted_instanton):
    p = twisted_instanton.best
    psi0, psi1, _ = magnetic_corrections(p, wkb_phase_along(p, twisted), 0.0, twisted)
    assert not np.any(psi0) and not np.any(psi1)


def test_rotationally_symmetric_metric(separable):
    p = minimize_instanton(None, separable)
    psi0, psi1, dphi = magnetic_corrections(p, wkb_phase_along(p, separable), 0.02, separable)
    assert np.max(np.abs(dphi)) <= 1e-8
    assert np.max(np.abs(psi0)) <= 1e-8
    assert np.all(np.diff(psi1) <= 1e-15)


def test_corrections_independent_of_field(twisted, twisted_instanton):
    p = twisted_instanton.best
    phi = wkb_phase_along(p, twisted)
    a = magnetic_corrections(p, phi, 0.02, twisted)
    b = magnetic_corrections(p, phi, 0.04, twisted)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.max(np.abs(a[0])) > 1e-3
    assert np.all(np.diff(a[1]) <= 1e-15)
    w2, w4 = compute_wkb(p, twisted, 0.02), compute_wkb(p, twisted, 0.04)
    first2, first4 = 0.02 * w2.psi0, 0.04 * w4.psi0
    assert np.allclose(first4, 2 * first2, rtol=0, atol=1e-15)


def test_flat_amplitude():
    c = 0.7
    pot = FlatWell(c)
    nodes = straight_path([0, 0, -5], [0, 0, 5], 101)
    path = InstantonPath(nodes, np.linspace(0, 1, 101), 0.0, 0.0, 0.0, True, 0.0, 0)
    amp = leading_amplitude(path, pot)
    assert amp[-1] / amp[0] == pytest.approx(np.exp(-10.0 / (2 * c)), rel=1e-12)


def test_quartic_amplitude_matches_wkb():
    path = _axis_path(QUARTIC, 2001)
    amp = leading_amplitude(path, QUARTIC)
    z = path.nodes[:, 2]
    sel = np.abs(z) <= 0.8
    exact = ((1 - z[sel]) / (1 + z[sel])) ** 0.25
    got = amp[sel] / amp[sel][0] * exact[0]
    assert np.max(np.abs(got / exact - 1)) <= 1e-5
    assert np.all(amp > 0)
    assert np.all(np.diff(amp) <= 0)


def test_profile_rows(twisted, twisted_instanton):
    p = twisted_instanton.best
    rows = profile_rows(p, twisted, compute_wkb(p, twisted, 0.04))
    assert len(rows) == p.n_nodes and len(rows[0]) == 9
    assert rows[-1][5] == pytest.approx(p.action)
