"""Herring-type interaction integral over the plane y3 = 0 versus the direct splitting.

For normalized quasi-modes u_+ (well at y3 > 0) and u_- = reflection of u_+,

    flux = h**2 sum_Gamma (conj(u_+) d3 u_- - u_- d3 conj(u_+)) dS
           + 2 i h sum_Gamma A_3 conj(u_+) u_- dS,

and the splitting is E1 - E0 ~ 2 |flux|. The second sum vanishes whenever
A_3 = 0; it is evaluated from the sampled potential rather than dropped.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import SupportMismatch
from .spectral.eigen import dirichlet_pair
from .spectral.grid import GridSpec
from .spectral.operator import assemble_operator
from .spectral.sweep import sector_splitting

log = logging.getLogger(__name__)

# Herring pairing: E1 - E0 = PAIRING * |w_{+-}|, fixed by the 1D oracle.
PAIRING = 2.0


@dataclass
class GapResult:
    w_plus_minus: float
    magnetic_term: float
    direct_splitting: float
    ratio: float
    h: float
    flux: complex = 0j
    plane: float = 0.0
    stencil: str = "central"
    halfspace_offset: float = float("nan")

    def row(self):
        return (self.h, self.w_plus_minus, self.magnetic_term, self.direct_splitting, self.ratio)


def _plane_slices(grid: GridSpec, plane):
    """Stencil description for the plane y_last = plane.

    Returns ("node", j) when a node lies on the plane, else ("mid", j) for
    the plane between nodes j and j + 1.
    """
    z = grid.axis(grid.dimension - 1)
    dz = grid.spacing[-1]
    j = int(np.argmin(np.abs(z - plane)))
    if abs(z[j] - plane) <= 1e-9 * dz:
        return "node", j
    j = int(np.searchsorted(z, plane) - 1)
    if j < 0 or j + 1 >= len(z) or abs(0.5 * (z[j] + z[j + 1]) - plane) > 1e-9 * dz:
        raise ValueError(f"plane y3={plane} is neither a grid plane nor a mid plane")
    return "mid", j


def _trace(u, kind, j, dz, stencil, side):
    """Value and y3-derivative of u on the plane."""
    if kind == "mid":
        return 0.5 * (u[..., j] + u[..., j + 1]), (u[..., j + 1] - u[..., j]) / dz
    val = u[..., j]
    if stencil == "central":
        return val, (u[..., j + 1] - u[..., j - 1]) / (2 * dz)
    if side > 0:
        return val, (-3 * u[..., j] + 4 * u[..., j + 1] - u[..., j + 2]) / (2 * dz)
    return val, (3 * u[..., j] - 4 * u[..., j - 1] + u[..., j - 2]) / (2 * dz)


def interaction_integral(u_plus, u_minus, grid: GridSpec, mp=None, h=None, *, omega_prime=None,
                         vector_potential=None, plane=0.0, stencil="central"):
    """Interaction flux of two quasi-modes across the plane y3 = ``plane``.

    Parameters
    ----------
    u_plus, u_minus : grid functions
        Normalized in the discrete l2 sense (sum |u|**2 = 1); they are
        rescaled to unit L2 norm internally.
    h : float
        Semiclassical parameter; defaults to ``mp.h``.
    vector_potential : LinearVectorPotential, optional
        Effective (omega'-scaled) potential for the magnetic term; by default
        the symmetric gauge with omega' from ``omega_prime`` or ``mp``.
    stencil : {"central", "one-sided"}
        One-sided differences use second-order stencils into y3 > plane for
        u_+ and y3 < plane for u_-.

    Returns
    -------
    GapResult
        Partial result; ``direct_splitting`` and ``ratio`` are nan.

    Raises
    ------
    SupportMismatch
        If either function vanishes identically on the stencil next to the plane.
    """
    from .spectral.operator import gauge_potential

    if h is None:
        h = mp.h
    if omega_prime is None:
        omega_prime = 0.0 if mp is None else mp.omega_prime
    if stencil not in ("central", "one-sided"):
        raise ValueError(stencil)
    shape = grid.shape
    up = np.asarray(u_plus).reshape(shape)
    um = np.asarray(u_minus).reshape(shape)
    vol = grid.cell_volume
    up = up / np.sqrt(vol)
    um = um / np.sqrt(vol)
    kind, j = _plane_slices(grid, plane)
    dz = grid.spacing[-1]
    if kind == "node" and stencil == "one-sided" and not (2 <= j < shape[-1] - 2):
        raise ValueError("plane too close to the box edge for one-sided stencils")
    lo = j - 2 if kind == "node" else j
    hi = j + 3 if kind == "node" else j + 2
    for name, u in (("u_plus", up), ("u_minus", um)):
        if not np.any(u[..., max(lo, 0):hi] != 0):
            raise SupportMismatch(f"{name} vanishes next to the plane y3={plane}")
    vp, dp = _trace(up, kind, j, dz, stencil, +1)
    vm, dm = _trace(um, kind, j, dz, stencil, -1)
    dS = vol / dz
    first = h**2 * np.sum(np.conj(vp) * dm - vm * np.conj(dp)) * dS
    if vector_potential is None:
        vector_potential = gauge_potential("symmetric", grid.dimension, omega_prime)
    pts = np.stack(grid.mesh(), axis=-1)
    if kind == "node":
        plane_pts = pts[..., j, :]
    else:
        plane_pts = 0.5 * (pts[..., j, :] + pts[..., j + 1, :])
    A_last = vector_potential(plane_pts)[..., -1]
    # the last grid axis is y3 in 3D and in 1D; a 2D grid has no transverse y3 term
    mag = 2j * h * np.sum(A_last * np.conj(vp) * vm) * dS if grid.dimension != 2 else 0.0
    flux = complex(first + mag)
    return GapResult(abs(flux), float(np.real(mag)), float("nan"), float("nan"), float(h),
                     flux, float(plane), stencil)


def default_offset(potential):
    """Dirichlet wall offset: half the distance from the plane to the wells."""
    return 0.5 * abs(float(potential.wells[1][-1]))


def gap_point(grid, potential, h, omega_prime=0.0, gauge="symmetric", halfspace_offset=None,
              plane=0.0, stencil="central", tol=1e-13):
    if halfspace_offset is None:
        halfspace_offset = default_offset(potential)
    op = assemble_operator(grid, None, potential, gauge, h=h, omega_prime=omega_prime)
    _, up, um = dirichlet_pair(op, halfspace_offset, tol=tol)
    E0, E1, _ = sector_splitting(op, tol=min(tol * 10, 1e-12))
    res = interaction_integral(up, um, grid, h=h, omega_prime=omega_prime,
                               vector_potential=op.vector_potential, plane=plane, stencil=stencil)
    res.direct_splitting = float(E1 - E0)
    res.ratio = PAIRING * res.w_plus_minus / res.direct_splitting
    res.halfspace_offset = float(halfspace_offset)
    return res


def gap_vs_direct(mp, potential, grid: GridSpec, h_list, *, omega_prime=None, gauge="symmetric",
                  halfspace_offset=None, plane=0.0, stencil="central", workers=1):
    """Interaction integral and direct splitting for each h.

    ``potential`` is a ScalarPotential in rescaled coordinates; ``omega_prime``
    defaults to ``mp.omega_prime`` (0 without ``mp``).
    """
    if omega_prime is None:
        omega_prime = 0.0 if mp is None else mp.omega_prime
    jobs = [(grid, potential, float(h), omega_prime, gauge, halfspace_offset, plane, stencil)
            for h in h_list]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_gap_job, jobs))
    else:
        out = [_gap_job(j) for j in jobs]
    for r in out:
        log.info("h=%g w=%.6e dE=%.6e ratio=%.4f", r.h, r.w_plus_minus, r.direct_splitting, r.ratio)
    return out


def _gap_job(args):
    grid, potential, h, wp, gauge, off, plane, stencil = args
    return gap_point(grid, potential, h, wp, gauge, off, plane, stencil)
