"""Rectangular grids for finite-difference and Fourier discretizations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid on a box.

    Dirichlet grids hold interior nodes only: node i sits at
    ``lo + (i + 1) * spacing`` with ``spacing = (hi - lo) / (n + 1)``.
    Periodic grids hold ``n`` nodes ``lo + i * spacing`` with
    ``spacing = (hi - lo) / n``.
    """

    box: tuple
    n: tuple
    periodic: bool = False
    spacing: tuple = field(init=False)

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        n = tuple(int(k) for k in self.n)
        if len(box) != len(n) or not 1 <= len(n) <= 3:
            raise ValueError("box and n must describe 1 to 3 axes")
        for (a, b), k in zip(box, n):
            if not b > a:
                raise ValueError(f"empty axis [{a}, {b}]")
            if k < 8:
                raise ValueError(f"need at least 8 points per axis, got {k}")
        sp = tuple((b - a) / (k if self.periodic else k + 1) for (a, b), k in zip(box, n))
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "spacing", sp)

    @classmethod
    def cube(cls, half_width, n, dimension=3, periodic=False):
        return cls(((-half_width, half_width),) * dimension, (n,) * dimension, periodic)

    @property
    def dimension(self):
        return len(self.n)

    @property
    def shape(self):
        return self.n

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis(self, a):
        lo, _ = self.box[a]
        k = self.n[a]
        off = 0 if self.periodic else 1
        return lo + (np.arange(k) + off) * self.spacing[a]

    @property
    def coords(self):
        return [self.axis(a) for a in range(self.dimension)]

    def mesh(self):
        return np.meshgrid(*self.coords, indexing="ij")

    def points(self):
        """Node coordinates embedded in 3-space, shape n + (3,).

        A 1D grid is the y3 axis; a 2D grid is the (y1, y2) plane.
        """
        m = self.mesh()
        z = np.zeros(self.shape)
        if self.dimension == 1:
            full = [z, z, m[0]]
        elif self.dimension == 2:
            full = [m[0], m[1], z]
        else:
            full = m
        return np.stack(full, axis=-1)

    def symmetric_last_axis(self, tol=1e-12):
        lo, hi = self.box[-1]
        return abs(lo + hi) <= tol * max(1.0, abs(hi))

    def refined(self, factor=2):
        """Grid with spacing divided by ``factor`` on every axis."""
        if self.periodic:
            n = tuple(k * factor for k in self.n)
        else:
            n = tuple((k + 1) * factor - 1 for k in self.n)
        return GridSpec(self.box, n, self.periodic)

    def describe(self):
        return {"box": [list(b) for b in self.box], "n": list(self.n),
                "periodic": self.periodic}
