import numpy as np
import pytest

from magtunnel.errors import SectionOutOfRange
from magtunnel.phasespace import (analytic_constant, calibration, concentration_report,
                                  fbi_transform, well_centres)
from magtunnel.spectral.eigen import lowest_eigenpairs
from magtunnel.spectral.grid import GridSpec
from magtunnel.spectral.operator import assemble_operator

G1 = GridSpec(((-3.0, 3.0),), (301,))
H = 0.1


def _normalized(u, g):
    return u / np.sqrt(np.sum(np.abs(u) ** 2) * g.cell_volume)


def _coherent(g, y0, eta0, h):
    y = g.axis(0)
    return _normalized(np.exp(-((y - y0) ** 2) / (2 * h) + 1j * eta0 * y / h), g)


def test_calibration_close_to_analytic():
    c = calibration(G1, H)
    assert c / analytic_constant(1, H) == pytest.approx(1.0, abs=1e-3)


def test_coherent_state_centre_and_mass():
    f = fbi_transform(_coherent(G1, 0.7, 0.5, H), G1, H)
    assert f.mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(f.values >= 0)
    i, j = np.unravel_index(np.argmax(f.values), f.values.shape)
    assert abs(f.x_axes[0][i] - 0.7) <= G1.spacing[0]
    assert abs(f.xi_axes[0][j] - 0.5) <= f.xi_axes[0][1] - f.xi_axes[0][0]
    X, K = np.meshgrid(f.x_axes[0], f.xi_axes[0], indexing="ij")
    w = f.values / f.values.sum()
    assert np.sum(w * X) == pytest.approx(0.7, abs=1e-6)
    assert np.sum(w * K) == pytest.approx(0.5, abs=1e-6)
    # state width h/2 plus window width h/2
    assert np.sum(w * (X - 0.7) ** 2) == pytest.approx(H, rel=1e-3)


def test_isometry_random_band_limited(rng):
    y = G1.axis(0)
    k = np.fft.fftfreq(len(y), G1.spacing[0]) * 2 * np.pi
    spec = (rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))) * np.exp(
        -(k * H) ** 2 / 0.5)
    u = np.fft.ifft(spec) * np.exp(-y**2)
    f = fbi_transform(_normalized(u, G1), G1, H)
    assert f.mass == pytest.approx(1.0, abs=1e-6)


def test_isometry_2d(rng):
    g = GridSpec(((-3.0, 3.0), (-3.0, 3.0)), (41, 41))
    y1, y2 = g.mesh()
    u = np.exp(-(y1**2 + 2 * y2**2)) * (1 + 0.3 * y1 + 0.2j * y2)
    f = fbi_transform(_normalized(u, g), g, 0.2)
    assert f.mass == pytest.approx(1.0, abs=1e-6)
    assert f.values.shape == (41, 41, 41, 41)


def test_linearity():
    u = _coherent(G1, 0.0, 0.0, H)
    f1 = fbi_transform(u, G1, H)
    f3 = fbi_transform((2 - 1j) * u, G1, H)
    assert np.allclose(f3.values, 5 * f1.values, rtol=1e-12, atol=1e-12 * f3.values.max())


def test_reflection_covariance(rng):
    u = _coherent(G1, 0.6, -0.4, H) + 0.5 * _coherent(G1, -0.3, 0.8, H)
    f = fbi_transform(u, G1, H)
    fr = fbi_transform(u[::-1], G1, H)
    assert np.allclose(fr.values, f.values[::-1, ::-1], rtol=1e-9, atol=1e-12 * f.values.max())


def test_translation_covariance():
    u = _coherent(G1, 0.2, 0.3, H)
    f = fbi_transform(u, G1, H)
    fs = fbi_transform(np.roll(u, 1), G1, H)
    assert np.allclose(fs.values[1:], f.values[:-1], rtol=1e-9, atol=1e-12 * f.values.max())


def test_section_guards():
    g = GridSpec(((-1.0, 1.0),) * 3, (9, 9, 9))
    u = np.ones(g.shape)
    with pytest.raises(ValueError):
        fbi_transform(u, g, 0.1)
    with pytest.raises(SectionOutOfRange):
        fbi_transform(u, g, 0.1, section={"axis": 2, "x": (0, 0), "xi": (10.0, 0.0)})
    with pytest.raises(SectionOutOfRange):
        fbi_transform(np.ones(G1.shape), G1, H, xi_max=100.0)


def test_section_matches_full_on_product_state():
    # for a product state the 3D section is the 1D field scaled by the fixed factors
    g = GridSpec(((-2.0, 2.0),) * 3, (21, 21, 25))
    y1, y2, y3 = g.mesh()
    h = 0.2
    u = np.exp(-(y1**2 + y2**2 + (y3 - 0.3) ** 2) / (2 * h))
    f = fbi_transform(_normalized(u, g), g, h, section={"axis": 2, "x": (0, 0), "xi": (0, 0)})
    i, j = np.unravel_index(np.argmax(f.values), f.values.shape)
    assert abs(f.x_axes[0][i] - 0.3) <= g.spacing[2]
    assert f.section["axis"] == 2
    assert f.raster().shape == (f.values.size, 3)


def _ground(h):
    from magtunnel.potentials import SeparableDoubleWell

    pot = SeparableDoubleWell()
    g = GridSpec(((-2.5, 2.5),), (801,))
    op = assemble_operator(g, None, pot, "none", h=h)
    u = lowest_eigenpairs(op, k=1, sector="even").eigenvectors[0]
    u = _normalized(np.asarray(u).reshape(g.shape), g)
    return pot, fbi_transform(u, g, h, stride=2)


def test_double_well_concentration():
    reps = []
    for h in (0.1, 0.05):
        pot, f = _ground(h)
        assert f.mass == pytest.approx(1.0, abs=1e-3)
        reps.append(concentration_report(f, pot.wells, radius=0.5))
    for r in reps:
        assert r.imbalance <= 1e-3
        assert np.allclose(np.abs(r.means[:, 0]), 1.0, atol=0.1)
    assert reps[1].outside_fraction < reps[0].outside_fraction
    ratio = reps[1].width_over_sqrt_h / reps[0].width_over_sqrt_h
    assert np.all(np.abs(ratio - 1) <= 0.10)


def test_well_centres_layout(separable):
    _, f = _ground(0.1)
    c = well_centres(f, separable.wells)
    assert np.allclose(c, [[-1.0, 0.0], [1.0, 0.0]])
