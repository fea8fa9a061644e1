"""Hamiltonian symbol of the rotating-frame problem, its rescaling, and W.

The classical symbol is

    p_A(x, xi) = (xi_1 - nu/omega)**2 + xi_2**2 + xi_3**2 + V(|x|)
                 - omega * (x_1 xi_2 - x_2 xi_1)

and the affine change of variables x = s*y + (0, s, 0), eta = s*xi with
s = 2 nu / omega**2 turns it into

    p_A - nu**2/omega**2 = s**-2 * (|eta - omega' A(y)|**2 + W(y)),

with A(y) = (-y_2, y_1, 0) and omega' = 2 nu**2 / omega**3.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .potentials import ScalarPotential


@dataclass(frozen=True)
class ModelParams:
    """Field frequency, coupling and semiclassical parameter.

    Parameters
    ----------
    omega : float
        Angular frequency of the circularly polarized field.
    nu : float
        Coupling constant.
    h : float
        Semiclassical parameter.
    """

    omega: float
    nu: float
    h: float = 0.1
    omega_prime: float = field(init=False)
    period: float = field(init=False)
    scale: float = field(init=False)

    def __post_init__(self):
        for name in ("omega", "nu", "h"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive, got {val!r}")
        object.__setattr__(self, "omega_prime", 2.0 * self.nu**2 / self.omega**3)
        object.__setattr__(self, "period", 2.0 * np.pi / self.omega)
        object.__setattr__(self, "scale", 2.0 * self.nu / self.omega**2)

    @property
    def A0(self):
        """Static vector potential (1/omega, 0, 0) of the rotating frame."""
        return np.array([1.0 / self.omega, 0.0, 0.0])

    def admissibility_ratio(self, r0):
        return r0 * self.omega**2 / self.nu

    def is_admissible(self, r0, strict=False):
        q = self.admissibility_ratio(r0)
        return q > 2.0 if strict else q >= 2.0

    def with_h(self, h):
        return ModelParams(self.omega, self.nu, h)


class RadialPotential:
    """Radial potential V(r) with a nondegenerate global minimum at r0."""

    family = "abstract"
    r0 = 1.0

    def value(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def d1_over_r(self, r):
        """V'(r)/r, finite at r = 0."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.d1(r) / r

    @property
    def vmin(self):
        return float(self.value(self.r0))

    def coefficients(self):
        return {}


@dataclass(frozen=True)
class QuarticShell(RadialPotential):
    """V(r) = v4 * (r**2 - r0**2)**2."""

    v4: float = 1.0
    r0: float = 1.0
    family = "quartic"

    def __post_init__(self):
        if self.v4 <= 0 or self.r0 <= 0:
            raise ValueError("v4 and r0 must be positive")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return self.v4 * (r * r - self.r0**2) ** 2

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return 4.0 * self.v4 * r * (r * r - self.r0**2)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return self.v4 * (12.0 * r * r - 4.0 * self.r0**2)

    def d1_over_r(self, r):
        r = np.asarray(r, dtype=float)
        return 4.0 * self.v4 * (r * r - self.r0**2)

    def coefficients(self):
        return {"v4": self.v4, "r0": self.r0}


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(3)
        xi = np.array(self.xi, dtype=float).reshape(3)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("phase point must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    def as_vector(self):
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:])


class RegionLabel(enum.Enum):
    ALLOWED = "allowed"
    FORBIDDEN = "forbidden"
    BOUNDARY = "boundary"


def _split(x, xi):
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return x, xi


def eval_p_A(x, xi, mp: ModelParams, V: RadialPotential):
    """Evaluate the symbol p_A; broadcasts over leading axes of shape (..., 3)."""
    x, xi = _split(x, xi)
    r = np.linalg.norm(x, axis=-1)
    kin = (xi[..., 0] - mp.nu / mp.omega) ** 2 + xi[..., 1] ** 2 + xi[..., 2] ** 2
    lz = x[..., 0] * xi[..., 1] - x[..., 1] * xi[..., 0]
    return kin + V.value(r) - mp.omega * lz


def grad_p_A(x, xi, mp: ModelParams, V: RadialPotential):
    """Gradient of p_A in the variable order (x1, x2, x3, xi1, xi2, xi3)."""
    x, xi = _split(x, xi)
    r = np.linalg.norm(x, axis=-1)
    w = mp.omega
    gx = V.d1_over_r(r)[..., None] * x
    gx = gx + np.stack([-w * xi[..., 1], w * xi[..., 0], np.zeros_like(r)], axis=-1)
    gxi = np.stack(
        [
            2.0 * (xi[..., 0] - mp.nu / w) + w * x[..., 1],
            2.0 * xi[..., 1] - w * x[..., 0],
            2.0 * xi[..., 2],
        ],
        axis=-1,
    )
    return np.concatenate([gx, gxi], axis=-1)


def hess_p_A(x, xi, mp: ModelParams, V: RadialPotential):
    """Closed-form 6x6 Hessian of p_A at a single phase point."""
    x = np.asarray(x, dtype=float).reshape(3)
    r = float(np.linalg.norm(x))
    H = np.zeros((6, 6))
    d1r = float(V.d1_over_r(r))
    if r > 0:
        xh = x / r
        H[:3, :3] = float(V.d2(r)) * np.outer(xh, xh) + d1r * (np.eye(3) - np.outer(xh, xh))
    else:
        H[:3, :3] = float(V.d2(0.0)) * np.eye(3)
    H[3:, 3:] = 2.0 * np.eye(3)
    w = mp.omega
    # -omega*(x1 xi2 - x2 xi1) couples x1<->xi2 and x2<->xi1
    H[0, 4] = H[4, 0] = -w
    H[1, 3] = H[3, 1] = w
    return H


def to_rescaled(x, mp: ModelParams):
    x = np.asarray(x, dtype=float)
    s = mp.scale
    return (x - np.array([0.0, s, 0.0])) / s


def from_rescaled(y, mp: ModelParams):
    y = np.asarray(y, dtype=float)
    s = mp.scale
    return s * y + np.array([0.0, s, 0.0])


def momentum_to_rescaled(xi, mp: ModelParams):
    return mp.scale * np.asarray(xi, dtype=float)


def momentum_from_rescaled(eta, mp: ModelParams):
    return np.asarray(eta, dtype=float) / mp.scale


def symmetric_gauge(y):
    """A(y) = (-y2, y1, 0) on arrays of shape (..., 3)."""
    y = np.asarray(y, dtype=float)
    return np.stack([-y[..., 1], y[..., 0], np.zeros(y.shape[:-1])], axis=-1)


def eval_W(y, mp: ModelParams, V: RadialPotential):
    """Rescaled scalar potential W(y) = s**2 (V(|x(y)|) - (nu/omega)**2 (y1**2 + y2**2))."""
    y = np.asarray(y, dtype=float)
    x = from_rescaled(y, mp)
    r = np.linalg.norm(x, axis=-1)
    rho2 = y[..., 0] ** 2 + y[..., 1] ** 2
    return mp.scale**2 * (V.value(r) - (mp.nu / mp.omega) ** 2 * rho2)


def eval_p_A_rescaled(y, eta, mp: ModelParams, V: RadialPotential):
    """p'_A(y, eta) = |eta - omega' A(y)|**2 + W(y)."""
    eta = np.asarray(eta, dtype=float)
    kin = np.sum((eta - mp.omega_prime * symmetric_gauge(y)) ** 2, axis=-1)
    return kin + eval_W(y, mp, V)


def energy_reference(mp: ModelParams, V: RadialPotential):
    """Critical value E = V(r0) + nu**2/omega**2 of p_A."""
    return V.vmin + (mp.nu / mp.omega) ** 2


def rescaled_energy(E, mp: ModelParams):
    """E' = s**2 (E - nu**2/omega**2)."""
    return mp.scale**2 * (E - (mp.nu / mp.omega) ** 2)


def classify_region(y, E_prime, mp: ModelParams, V: RadialPotential, tol=1e-12):
    """Label a point by the sign of W(y) - E' (omega' = 0 level)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = float(eval_W(y, mp, V)) - E_prime
    if d > tol:
        return RegionLabel.FORBIDDEN
    if d < -tol:
        return RegionLabel.ALLOWED
    return RegionLabel.BOUNDARY


class ModelPotential(ScalarPotential):
    """W(y) of the physical model, exposed through the potential interface."""

    def __init__(self, mp: ModelParams, V: RadialPotential):
        self.mp = mp
        self.V = V
        s = mp.scale
        z = np.sqrt(max(V.r0**2 - s * s, 0.0)) / s
        self._wells = (np.array([0.0, 0.0, -z]), np.array([0.0, 0.0, z]))

    @property
    def wells(self):
        return self._wells

    def value(self, y):
        return eval_W(y, self.mp, self.V)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        mp, s = self.mp, self.mp.scale
        x = from_rescaled(y, mp)
        r = np.linalg.norm(x, axis=-1)
        g = s**3 * self.V.d1_over_r(r)[..., None] * x
        c = 2.0 * s**2 * (mp.nu / mp.omega) ** 2
        g[..., 0] -= c * y[..., 0]
        g[..., 1] -= c * y[..., 1]
        return g

    def hessian(self, y):
        y = np.asarray(y, dtype=float)
        mp, s = self.mp, self.mp.scale
        x = from_rescaled(y, mp)
        r = np.linalg.norm(x, axis=-1)
        d1r = self.V.d1_over_r(r)
        d2 = self.V.d2(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            xh = np.where(r[..., None] > 0, x / np.where(r > 0, r, 1.0)[..., None], 0.0)
        P = xh[..., :, None] * xh[..., None, :]
        H = s**4 * (d2[..., None, None] * P + d1r[..., None, None] * (np.eye(3) - P))
        c = 2.0 * s**2 * (mp.nu / mp.omega) ** 2
        H[..., 0, 0] -= c
        H[..., 1, 1] -= c
        return H
