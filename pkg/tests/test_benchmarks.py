import numpy as np
import pytest

from magtunnel.spectral.benchmarks import da_equivalence, da_potentials, landau_exact


def test_landau_exact_levels():
    assert np.allclose(landau_exact(0.1, 0.5, 3), [0.1, 0.3, 0.5])


def test_da_potentials_related_by_rescaling():
    mag, free = da_potentials(1.3, 0.7, lambda y: y**4)
    # at x2 = 0 the partner carries the magnetic shift b**2 x1**2
    assert free(0.5, 0.0) == pytest.approx(1.3**2 * 0.25 + 0.0625)
    assert mag(0.5, 2.0) == pytest.approx(0.0625 + 0.49 * 4.0)


def test_da_small_grid():
    res = da_equivalence((24, 48), h=0.2, k=3)
    assert res.relative_difference(-1) < res.relative_difference(0)
    assert res.relative_difference(-1) < 2e-2
