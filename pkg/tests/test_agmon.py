import warnings

import numpy as np
import pytest

from magtunnel.errors import OverflowRisk
from magtunnel.gap import default_offset
from magtunnel.instanton import wkb_phase_along
from magtunnel.spectral.agmon import (agmon_identity_residual, agmon_terms, decay_certificate,
                                      weight_from_profile)
from magtunnel.spectral.eigen import dirichlet_ground_state
from magtunnel.spectral.grid import GridSpec
from magtunnel.spectral.operator import assemble_operator

BOX3 = ((-1.6, 1.6), (-1.6, 1.6), (-2.2, 2.2))


@pytest.fixture(scope="module")
def setup(twisted, twisted_instanton):
    g = GridSpec(BOX3, (20, 20, 28))
    op = assemble_operator(g, None, twisted, "symmetric", h=0.3, omega_prime=0.04)
    off = default_offset(twisted)
    lam, u = dirichlet_ground_state(op, "plus", off)
    sub = op.restricted("dirichlet-halfspace-plus", off)
    p = twisted_instanton.best
    Phi = weight_from_profile(g, p.nodes[:, 2], wkb_phase_along(p, twisted), p.action, 0.5)
    return sub, lam, u, Phi


def test_zero_weight_identity(setup, rng):
    sub, lam, u, _ = setup
    assert agmon_identity_residual(sub, u, 0.0, 0.0) <= 1e-10
    v = rng.standard_normal(sub.grid.shape) + 1j * rng.standard_normal(sub.grid.shape)
    assert agmon_identity_residual(sub, v, 0.0, 0.1) <= 1e-10


def test_constant_weight_scales(setup):
    sub, _, u, _ = setup
    a = agmon_terms(sub, u, 0.0, 0.0)
    b = agmon_terms(sub, u, np.full(sub.grid.shape, 0.05), 0.0)
    f = np.exp(2 * 0.05 / sub.h)
    assert b.lhs / (f * a.lhs) == pytest.approx(1.0, abs=1e-12)
    # both residuals are normalized by the weighted norm and sit at rounding level
    assert a.residual <= 1e-12 and b.residual <= 1e-12


def test_link_form_exact(setup):
    sub, _, u, Phi = setup
    assert agmon_identity_residual(sub, u, Phi, 0.0, form="link") <= 1e-10


def test_continuum_form_small(setup):
    sub, _, u, Phi = setup
    assert agmon_identity_residual(sub, u, Phi, 0.0) <= 5e-3


def test_decay_certificate(setup):
    sub, lam, u, Phi = setup
    holds, slack = decay_certificate(sub, u, Phi, 0.0, lam)
    assert holds and slack >= 0


def test_overflow_warning(setup):
    sub, _, u, Phi = setup
    base = agmon_identity_residual(sub, u, Phi, 0.0, form="link")
    big = Phi + 200.0
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        r = agmon_identity_residual(sub, u, big, 0.0, form="link")
    assert any(issubclass(w.category, OverflowRisk) for w in rec)
    assert np.isfinite(r) and r <= max(10 * base, 1e-10)


def test_weight_profile_sides():
    g = GridSpec(((-1.5, 1.5),), (29,))
    z = np.linspace(-1, 1, 11)
    phi = (z + 1) / 2 * 3.0
    plus = weight_from_profile(g, z, phi, 3.0, 0.0, "plus")
    minus = weight_from_profile(g, z, phi, 3.0, 0.0, "minus")
    assert np.allclose(plus + minus, 3.0)
    y = g.axis(0)
    assert plus[np.argmin(np.abs(y - 1))] == pytest.approx(0.0, abs=0.2)
