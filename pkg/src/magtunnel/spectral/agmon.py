"""Weighted energy identity for Agmon decay estimates.

For real Phi and u vanishing on the boundary, with v = exp(Phi/h) u,

    Re <exp(2 Phi/h) (P - E') u, u> = ||(hD - omega' A) v||**2
                                      + <(W - E' - |grad Phi|**2) v, v>.

On the grid the kinetic term is the link form of the operator. The
"continuum" variant uses |grad Phi|**2 from centered differences and holds
up to discretization error; the "link" variant replaces it by the exact
discrete weight h**2/dx**2 (2 cosh(dPhi/h) - 2) per link.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import OverflowRisk
from .operator import DiscreteOperator

MAX_EXPONENT = 300.0


@dataclass
class AgmonTerms:
    lhs: float
    kinetic: float
    potential: float
    gradient: float
    norm: float
    residual: float
    rescaled: bool

    @property
    def rhs(self):
        return self.kinetic + self.potential - self.gradient


def _weights(Phi, h):
    Phi = np.asarray(Phi, dtype=float)
    top = float(np.max(Phi)) / h if Phi.size else 0.0
    shift = 0.0
    if top > MAX_EXPONENT:
        warnings.warn(f"max Phi/h = {top:.1f} exceeds {MAX_EXPONENT:g}; weights rescaled by "
                      f"exp(-{top:.1f})", OverflowRisk, stacklevel=3)
        shift = float(np.max(Phi))
    return np.exp((Phi - shift) / h), shift != 0.0


def _link_gradient_term(op, v, Phi):
    total = 0.0
    g = op.grid
    for k, t in enumerate(op.hop):
        hi = [slice(None)] * v.ndim
        lo = [slice(None)] * v.ndim
        hi[k] = slice(1, None)
        lo[k] = slice(None, -1)
        dphi = (Phi[tuple(hi)] - Phi[tuple(lo)]) / op.h
        w = t * (2.0 * np.cosh(dphi) - 2.0)
        if op.magnetic:
            cross = np.conj(v[tuple(lo)]) * op._links[k][tuple(lo)] * v[tuple(hi)]
        else:
            cross = v[tuple(lo)] * v[tuple(hi)]
        total += float(np.sum(w * np.real(cross)))
    # links to the boundary carry v = 0 on one end and contribute nothing
    del g
    return total


def agmon_terms(op: DiscreteOperator, u, Phi, E_prime, form="continuum"):
    """All pieces of the weighted identity; see ``agmon_identity_residual``."""
    if form not in ("continuum", "link"):
        raise ValueError(f"unknown form {form!r}")
    shape = op.grid.shape
    u = np.asarray(u).reshape(shape)
    if op.mask is not None:
        u = np.where(op.mask, u, 0)
    Phi = np.broadcast_to(np.asarray(Phi, dtype=float), shape)
    w, rescaled = _weights(Phi, op.h)
    v = w * u
    Hu = op.apply(u) - E_prime * u
    lhs = float(np.real(np.vdot(w**2 * u, Hu)))
    kinetic = op.kinetic_form(v)
    wpot = op.potential if op.mask is None else np.where(op.mask, op.potential, 0.0)
    potential = float(np.sum((wpot - E_prime) * np.abs(v) ** 2))
    if form == "link":
        gradient = _link_gradient_term(op, v, Phi)
    else:
        grads = np.gradient(Phi, *op.grid.spacing) if Phi.ndim > 1 else [
            np.gradient(Phi, op.grid.spacing[0])]
        gsq = sum(gk**2 for gk in grads)
        gradient = float(np.sum(gsq * np.abs(v) ** 2))
    norm = float(np.sum(np.abs(v) ** 2))
    res = abs(lhs - (kinetic + potential - gradient)) / norm if norm > 0 else 0.0
    return AgmonTerms(lhs, kinetic, potential, gradient, norm, res, rescaled)


def agmon_identity_residual(op: DiscreteOperator, u, Phi, E_prime, form="continuum"):
    """|LHS - RHS| of the weighted identity normalized by ||exp(Phi/h) u||**2.

    Parameters
    ----------
    op : DiscreteOperator
        Dirichlet operator; a half-space mask is honoured.
    u : grid function vanishing outside the domain
    Phi : grid function, real
    form : {"continuum", "link"}
        ``link`` is exact for the discretization (rounding-level residual);
        ``continuum`` measures the discretization error of the identity.

    Warns
    -----
    OverflowRisk
        If max Phi/h > 300; weights are rescaled, which leaves the
        normalized residual unchanged.
    """
    return agmon_terms(op, u, Phi, E_prime, form).residual


def decay_certificate(op: DiscreteOperator, u, Phi, E_prime, eigenvalue, form="link"):
    """Check <(W - E' - |grad Phi|**2) v, v> <= (lambda - E') ||v||**2.

    For an eigenfunction the left side of the identity is
    (lambda - E') ||v||**2 and the kinetic term is nonnegative, so the
    inequality bounds the weighted norm in the region where
    W - E' - |grad Phi|**2 > 0. Returns ``(holds, slack)`` with ``slack``
    normalized by ||v||**2.
    """
    t = agmon_terms(op, u, Phi, E_prime, form)
    slack = ((eigenvalue - E_prime) * t.norm - (t.potential - t.gradient)) / t.norm
    return bool(slack >= -1e-10), float(slack)


def weight_from_profile(grid, y3_nodes, phi_nodes, action, delta=0.5, side="plus"):
    """(1 - delta) * Agmon distance to the chosen well, as a function of y3.

    The distance along the instanton, S - phi for the plus well and phi for
    the minus well, is interpolated in y3 (clamped beyond the path ends).
    """
    z = np.asarray(y3_nodes, dtype=float)
    phi = np.asarray(phi_nodes, dtype=float)
    order = np.argsort(z)
    dist = (action - phi) if side == "plus" else phi
    y3 = grid.mesh()[-1]
    return (1.0 - delta) * np.interp(y3, z[order], dist[order])
