"""Closed-form and equivalence benchmarks for the magnetic discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import inverse_iteration, lowest_eigenpairs
from .grid import GridSpec
from .operator import assemble_operator


@dataclass
class LandauResult:
    levels: np.ndarray
    exact: np.ndarray
    residuals: np.ndarray
    spacing: float

    @property
    def relative_errors(self):
        return np.abs(self.levels - self.exact) / self.exact

    @property
    def gap(self):
        return float(self.levels[1] - self.levels[0])

    @property
    def exact_gap(self):
        return float(self.exact[1] - self.exact[0])


def landau_exact(h, omega_prime, n_levels=2):
    """(2n + 1) h B with B = 2 omega'."""
    return (2 * np.arange(n_levels) + 1) * h * 2.0 * omega_prime


def landau_levels(h=0.1, omega_prime=0.5, half_width=12.0, n=383, n_levels=2, bulk_radius=None,
                  tol=1e-11):
    """Bulk Landau levels of (hD - omega' A)**2 in the symmetric gauge.

    Each level is infinitely degenerate and the Dirichlet box adds edge
    states in every gap, so level k is found by inverse iteration shifted
    just below (2k + 1) h B from a state localized on the magnetic length,
    with iterates windowed to the bulk disk.
    """
    g = GridSpec.cube(half_width, n, 2)
    op = assemble_operator(g, None, np.zeros(g.shape), "symmetric", h=h, omega_prime=omega_prime)
    X, Y = g.mesh()
    R = np.hypot(X, Y)
    l2 = h / (2.0 * omega_prime)
    if bulk_radius is None:
        bulk_radius = 2.0 * half_width / 3.0
    window = np.where(R < bulk_radius, 1.0, np.exp(-(R - bulk_radius) ** 2))
    # components on angular momenta -1, 0, 1, 2 so every low level is reached
    z = (X + 1j * Y) / np.sqrt(l2)
    u0 = np.exp(-R**2 / (4 * l2)) * (1 + z + np.conj(z) + z**2)
    exact = landau_exact(h, omega_prime, n_levels)
    vals, res = [], []
    hB = 2.0 * h * omega_prime
    for k in range(n_levels):
        sigma = exact[k] - 0.05 * hB if k else 0.0
        lam, _, r = inverse_iteration(op, sigma, u0, tol=tol, window=window)
        vals.append(lam)
        res.append(r)
    return LandauResult(np.array(vals), exact, np.array(res), g.spacing[0])


def da_potentials(b, omega, V1):
    """Scalar potentials of the magnetic model and its gauge-free partner.

    Magnetic: (hD1)**2 + (hD2 - b y1)**2 + V1(y1) + omega**2 y2**2.
    Partner:  (hD1)**2 + (hD2)**2 + (omega x2 - b x1)**2 + V1(x1).
    A partial Fourier transform in y2 followed by x2 = eta2/omega maps one
    onto the other.
    """
    mag = lambda y1, y2: V1(y1) + omega**2 * y2**2
    free = lambda x1, x2: (omega * x2 - b * x1) ** 2 + V1(x1)
    return mag, free


def da_pair(grid: GridSpec, h, b=1.0, omega=1.0, V1=None):
    if V1 is None:
        V1 = lambda y: 0.5 * (y**2 - 1.0) ** 2
    mag, free = da_potentials(b, omega, V1)
    a = (np.array([[0.0, 0.0], [b, 0.0]]), np.zeros(2))
    op_m = assemble_operator(grid, None, mag, "custom-linear", h=h, vector_potential=a)
    op_f = assemble_operator(grid, None, free, "none", h=h)
    return op_m, op_f


@dataclass
class DAComparison:
    n: list
    magnetic: list
    partner: list

    def relative_difference(self, i=-1):
        m, f = np.asarray(self.magnetic[i]), np.asarray(self.partner[i])
        return float(np.max(np.abs(m - f) / np.abs(f)))

    def observed_orders(self, which="magnetic"):
        """log2 of successive difference ratios; 2 means second order."""
        seq = [np.asarray(v) for v in getattr(self, which)]
        if len(seq) < 3:
            return np.array([])
        d1 = np.abs(seq[1] - seq[0])
        d2 = np.abs(seq[2] - seq[1])
        ratio = (self.n[2] + 1) / (self.n[1] + 1)
        return np.log(d1 / d2) / np.log(ratio)


def da_equivalence(n_list=(64, 128, 256), h=0.1, half_width=3.0, b=1.0, omega=1.0, V1=None, k=5):
    """Lowest ``k`` eigenvalues of both operators on each n x n grid."""
    out = DAComparison(list(n_list), [], [])
    for n in n_list:
        g = GridSpec.cube(half_width, n, 2)
        op_m, op_f = da_pair(g, h, b, omega, V1)
        out.magnetic.append(lowest_eigenpairs(op_m, k, keep_vectors=False).eigenvalues)
        out.partner.append(lowest_eigenpairs(op_f, k, keep_vectors=False).eigenvalues)
    return out
