"""FBI transform diagnostics of phase-space concentration.

    T u(x, xi) = c(h) int exp(i (x - y).xi / h - |x - y|**2 / (2h)) u(y) dy

maps L2(R^n) isometrically into L2(R^2n) for c(h) = 2^(-n/2) (pi h)^(-3n/4).
On a grid, xi runs over the FFT momenta h k, for which the discrete
Plancherel identity holds exactly; the x-sum of the squared window is a
Gaussian quadrature, and c(h) is recalibrated so that the discrete field is
isometric on a reference coherent state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import SectionOutOfRange
from .spectral.grid import GridSpec


def analytic_constant(n, h):
    return 2.0 ** (-n / 2) * (np.pi * h) ** (-0.75 * n)


@dataclass
class FBIField:
    x_axes: list
    xi_axes: list
    values: np.ndarray
    h: float
    c: float
    cell: float
    section: dict = field(default_factory=dict)

    @property
    def mass(self):
        return float(np.sum(self.values) * self.cell)

    def points(self):
        """(x..., xi...) coordinates of every sample, shape values.shape + (2d,)."""
        grids = np.meshgrid(*self.x_axes, *self.xi_axes, indexing="ij")
        return np.stack(grids, axis=-1)

    def raster(self):
        """Rows (x, xi, |Tu|**2) for one-dimensional sections."""
        if len(self.x_axes) != 1:
            raise ValueError("raster output is for 1D sections")
        X, K = np.meshgrid(self.x_axes[0], self.xi_axes[0], indexing="ij")
        return np.stack([X.ravel(), K.ravel(), self.values.ravel()], axis=1)


def _fbi_axis(u, y, h, x, axis):
    """Apply the 1D FBI kernel along ``axis``: y -> (x, xi) with xi = h k (centered order).

    Returns an array where ``axis`` is replaced by two axes (x, xi), without
    the constant c(h).
    """
    u = np.moveaxis(np.asarray(u, dtype=complex), axis, -1)
    dy = y[1] - y[0]
    n = len(y)
    k = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, dy))
    xi = h * k
    win = np.exp(-((x[:, None] - y[None, :]) ** 2) / (2 * h))       # (nx, ny)
    prod = u[..., None, :] * win                                      # (..., nx, ny)
    F = np.fft.fftshift(np.fft.fft(prod, axis=-1), axes=-1) * dy      # sum_j e^{-i k (y_j - y_0)}
    phase = np.exp(1j * (x[:, None] - y[0]) * k[None, :])            # e^{i (x - y_0) xi / h}
    out = F * phase
    return np.moveaxis(out, (-2, -1), (axis, axis + 1)) if axis >= 0 else out, xi


def _raw_field(u, axes_y, h, axes_x):
    out = np.asarray(u, dtype=complex)
    xis = []
    d = len(axes_y)
    # transform one axis at a time; after each step the new (x, xi) pair sits at 2a, 2a+1
    for a in range(d):
        out = np.moveaxis(out, 2 * a, -1)
        tmp, xi = _fbi_axis(out, axes_y[a], h, axes_x[a], -1)
        out = np.moveaxis(tmp, (-2, -1), (2 * a, 2 * a + 1))
        xis.append(xi)
    # reorder (x1, xi1, x2, xi2) -> (x1, x2, xi1, xi2)
    order = [2 * a for a in range(d)] + [2 * a + 1 for a in range(d)]
    return np.transpose(out, order), xis


def _cell(axes_x, xis):
    c = 1.0
    for ax in list(axes_x) + list(xis):
        c *= (ax[1] - ax[0]) if len(ax) > 1 else 1.0
    return c


@lru_cache(maxsize=64)
def _calibrated(box, n, h, stride):
    grid = GridSpec(box, n)
    axes = grid.coords
    mesh = grid.mesh()
    centre = [0.5 * (a + b) for a, b in grid.box]
    # coherent-state reference: width sqrt(h) keeps the edge truncation negligible
    g = np.exp(-sum((m - c) ** 2 for m, c in zip(mesh, centre)) / (2.0 * h))
    g = g / np.sqrt(np.sum(np.abs(g) ** 2) * grid.cell_volume)
    xs = [ax[::stride] for ax in axes]
    raw, xis = _raw_field(g, axes, h, xs)
    mass = np.sum(np.abs(raw) ** 2) * _cell(xs, xis)
    return float(1.0 / np.sqrt(mass))


def calibration(grid: GridSpec, h, stride=1):
    """c(h) making the discrete field isometric on a centred Gaussian of width sqrt(h)."""
    return _calibrated(tuple(map(tuple, grid.box)), tuple(grid.n), float(h), int(stride))


def fbi_transform(u, grid: GridSpec, h, section=None, stride=1, xi_max=None, calibrate=True):
    """FBI field of a grid function.

    Parameters
    ----------
    u : grid function on a (uniform, non-periodic) grid
    section : dict, optional
        For 3D grids: ``{"axis": 2, "x": (x1, x2), "xi": (xi1, xi2)}`` fixes
        the other position and momentum coordinates and materializes the
        (y_axis, eta_axis) plane. 1D and 2D fields are computed in full.
    stride : int
        Subsampling of the x samples (isometry needs stride 1).
    xi_max : float, optional
        Keep only |xi| <= xi_max per axis.
    calibrate : bool
        Use the numerically calibrated constant instead of the analytic one.

    Raises
    ------
    SectionOutOfRange
        If ``xi_max`` or a section momentum exceeds the Nyquist momentum pi h/spacing.
    """
    u = np.asarray(u).reshape(grid.shape)
    nyq = [np.pi * h / d for d in grid.spacing]
    d = grid.dimension
    if xi_max is not None and xi_max > min(nyq) * (1 + 1e-12):
        raise SectionOutOfRange(f"xi_max={xi_max} exceeds Nyquist momentum {min(nyq):.4g}")
    axes = grid.coords
    if d == 3 or section is not None:
        if section is None:
            raise ValueError("3D fields need a section")
        return _section(u, grid, h, section, stride, xi_max, calibrate, nyq)
    xs = [ax[::stride] for ax in axes]
    raw, xis = _raw_field(u, axes, h, xs)
    c = calibration(grid, h, stride) if calibrate else analytic_constant(d, h)
    vals = np.abs(c * raw) ** 2
    if xi_max is not None:
        for a, xi in enumerate(xis):
            keep = np.abs(xi) <= xi_max
            vals = np.compress(keep, vals, axis=d + a)
            xis[a] = xi[keep]
    return FBIField(xs, xis, vals, float(h), float(c), _cell(xs, xis))


def _section(u, grid, h, section, stride, xi_max, calibrate, nyq):
    axis = int(section.get("axis", grid.dimension - 1))
    others = [a for a in range(grid.dimension) if a != axis]
    xfix = section.get("x", (0.0,) * len(others))
    kfix = section.get("xi", (0.0,) * len(others))
    for a, k in zip(others, kfix):
        if abs(k) > nyq[a]:
            raise SectionOutOfRange(f"section momentum {k} exceeds Nyquist {nyq[a]:.4g}")
    v = np.asarray(u, dtype=complex)
    # contract the fixed coordinates with their 1D kernels, highest axis first
    for a, x0, k0 in sorted(zip(others, xfix, kfix), reverse=True):
        y = grid.axis(a)
        ker = np.exp(1j * (x0 - y) * k0 / h - (x0 - y) ** 2 / (2 * h)) * grid.spacing[a]
        v = np.tensordot(v, ker, axes=([a], [0]))
    y = grid.axis(axis)
    xs = y[::stride]
    raw, xi = _fbi_axis(v, y, h, xs, -1)
    n = grid.dimension
    c = analytic_constant(n, h)
    if calibrate:
        # ratio of calibrated to analytic 1D constants, raised to the dimension
        g1 = GridSpec((grid.box[axis],), (grid.n[axis],))
        c = (calibration(g1, h, stride) / analytic_constant(1, h)) ** n * c
    vals = np.abs(c * raw) ** 2
    if xi_max is not None:
        keep = np.abs(xi) <= xi_max
        vals = vals[:, keep]
        xi = xi[keep]
    return FBIField([xs], [xi], vals, float(h), float(c), _cell([xs], [xi]),
                    {"axis": axis, "x": tuple(xfix), "xi": tuple(kfix)})


@dataclass
class ConcentrationReport:
    centres: np.ndarray
    mass_fractions: np.ndarray
    outside_fraction: float
    means: np.ndarray
    widths: np.ndarray
    width_over_sqrt_h: np.ndarray
    radius: float
    h: float

    @property
    def imbalance(self):
        return float(abs(self.mass_fractions[0] - self.mass_fractions[-1]))

    def summary(self):
        return {
            "mass_fractions": self.mass_fractions.tolist(),
            "outside_fraction": self.outside_fraction,
            "imbalance": self.imbalance,
            "means": self.means.tolist(),
            "widths": self.widths.tolist(),
            "width_over_sqrt_h": self.width_over_sqrt_h.tolist(),
            "radius": self.radius,
            "h": self.h,
        }


def well_centres(field: FBIField, wells):
    """Phase-space centres (x, 0) of the wells in the coordinates of ``field``.

    ``wells`` holds position vectors (or CriticalPoint objects); for a
    section only the section axis is kept; a 1D field uses y3.
    """
    out = []
    nx = len(field.x_axes)
    for w in wells:
        p = np.asarray(getattr(w, "point", w), dtype=float)
        if field.section:
            pos = [p[field.section["axis"]]] if p.size > 1 else [p[0]]
        elif nx == 1:
            pos = [p[-1]]
        else:
            pos = list(p[:nx])
        out.append(np.array(pos + [0.0] * nx))
    return np.array(out)


def concentration_report(field: FBIField, wells, radius=0.5):
    """Mass near each well, moments and Gaussian widths.

    Samples are assigned to the nearest centre; widths are the root mean
    square distance per phase-space coordinate within each cell.
    """
    centres = well_centres(field, wells)
    pts = field.points().reshape(-1, centres.shape[1])
    rho = field.values.reshape(-1)
    total = float(np.sum(rho))
    dist = np.linalg.norm(pts[:, None, :] - centres[None, :, :], axis=2)
    frac = np.array([np.sum(rho[dist[:, j] <= radius]) / total for j in range(len(centres))])
    outside = float(np.sum(rho[np.all(dist > radius, axis=1)]) / total)
    owner = np.argmin(dist, axis=1)
    means, widths = [], []
    for j in range(len(centres)):
        sel = owner == j
        w = rho[sel]
        m = np.sum(pts[sel] * w[:, None], axis=0) / np.sum(w)
        var = np.sum((pts[sel] - m) ** 2 * w[:, None], axis=0) / np.sum(w)
        means.append(m)
        widths.append(np.sqrt(var))
    widths = np.array(widths)
    return ConcentrationReport(centres, frac, outside, np.array(means), widths,
                               widths / np.sqrt(field.h), float(radius), field.h)
