"""Scalar potentials W(y) on rescaled space, including synthetic test wells.

Every potential exposes ``value``, ``gradient`` and ``hessian`` on arrays of
shape (..., 3) and the two well positions ``wells = (y_minus, y_plus)``.
The synthetic wells are symmetric under y3 -> -y3 with W = 0 exactly at the
wells, so they can stand in for the physical W in the instanton, spectral
and gap modules.
"""
from __future__ import annotations

import numpy as np


class ScalarPotential:
    """Interface of a rescaled potential W with two symmetric wells."""

    energy_min = 0.0

    @property
    def wells(self):
        raise NotImplementedError

    def value(self, y):
        raise NotImplementedError

    def gradient(self, y, step=1e-6):
        y = np.asarray(y, dtype=float)
        g = np.empty_like(y)
        for a in range(3):
            e = np.zeros(3)
            e[a] = step
            g[..., a] = (self.value(y + e) - self.value(y - e)) / (2 * step)
        return g

    def hessian(self, y, step=1e-5):
        y = np.asarray(y, dtype=float)
        H = np.empty(y.shape + (3,))
        for a in range(3):
            e = np.zeros(3)
            e[a] = step
            H[..., a, :] = (self.gradient(y + e) - self.gradient(y - e)) / (2 * step)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def __call__(self, y):
        return self.value(y)

    def on_grid(self, *coords):
        """Evaluate on a meshgrid given per-axis 1D coordinate arrays."""
        pts = _mesh_points(coords)
        return self.value(pts)

    def describe(self):
        return {"family": type(self).__name__}


def _mesh_points(coords):
    coords = [np.asarray(c, dtype=float) for c in coords]
    d = len(coords)
    mesh = np.meshgrid(*coords, indexing="ij")
    # lower-dimensional grids live in the last axes: 1D is y3, 2D is (y2, y3)
    full = [np.zeros_like(mesh[0])] * (3 - d) + mesh
    return np.stack(full, axis=-1)


class SeparableDoubleWell(ScalarPotential):
    """W = t (y1**2 + y2**2) + (y3**2 - 1)**2.

    With ``transverse = 0`` this is the quartic double well embedded along
    the y3 axis.
    """

    def __init__(self, transverse=1.0):
        self.transverse = float(transverse)

    @property
    def wells(self):
        return (np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 1.0]))

    def value(self, y):
        y = np.asarray(y, dtype=float)
        t = self.transverse
        return t * (y[..., 0] ** 2 + y[..., 1] ** 2) + (y[..., 2] ** 2 - 1.0) ** 2

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        t = self.transverse
        return np.stack(
            [2 * t * y[..., 0], 2 * t * y[..., 1], 4 * y[..., 2] * (y[..., 2] ** 2 - 1.0)],
            axis=-1,
        )

    def hessian(self, y):
        y = np.asarray(y, dtype=float)
        H = np.zeros(y.shape + (3,))
        H[..., 0, 0] = H[..., 1, 1] = 2 * self.transverse
        H[..., 2, 2] = 12 * y[..., 2] ** 2 - 4.0
        return H

    def describe(self):
        return {"family": "separable", "transverse": self.transverse}


class TwistedValleyWell(ScalarPotential):
    """Non-separable double well whose valley floor bows and twists.

    W = (y3**2 - 1)**2 + k |y_perp - c(y3)|**2 with
    c(y3) = b (1 - y3**2) (cos(q y3**2), sin(q y3**2)).

    The valley is even in y3, so the y3 reflection is a symmetry, and the
    azimuthal drift of the valley gives the instanton a nonzero angular
    velocity about the y3 axis.
    """

    def __init__(self, stiffness=1.0, bow=0.5, twist=1.0):
        self.stiffness = float(stiffness)
        self.bow = float(bow)
        self.twist = float(twist)

    @property
    def wells(self):
        return (np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 1.0]))

    def _center(self, z):
        a = self.twist * z * z
        amp = self.bow * (1.0 - z * z)
        return amp * np.cos(a), amp * np.sin(a)

    def _center_d(self, z):
        a = self.twist * z * z
        amp = self.bow * (1.0 - z * z)
        damp = -2.0 * self.bow * z
        da = 2.0 * self.twist * z
        return (damp * np.cos(a) - amp * np.sin(a) * da,
                damp * np.sin(a) + amp * np.cos(a) * da)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        z = y[..., 2]
        c1, c2 = self._center(z)
        return (z * z - 1.0) ** 2 + self.stiffness * ((y[..., 0] - c1) ** 2 + (y[..., 1] - c2) ** 2)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        z = y[..., 2]
        k = self.stiffness
        c1, c2 = self._center(z)
        d1, d2 = self._center_d(z)
        u1 = y[..., 0] - c1
        u2 = y[..., 1] - c2
        gz = 4.0 * z * (z * z - 1.0) - 2.0 * k * (u1 * d1 + u2 * d2)
        return np.stack([2 * k * u1, 2 * k * u2, gz], axis=-1)

    def describe(self):
        return {"family": "twisted", "stiffness": self.stiffness, "bow": self.bow,
                "twist": self.twist}


def quartic_double_well_1d(y):
    """(y**2 - 1)**2 on a 1D coordinate array."""
    y = np.asarray(y, dtype=float)
    return (y * y - 1.0) ** 2
