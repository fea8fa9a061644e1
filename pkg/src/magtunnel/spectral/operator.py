"""Finite-difference magnetic Schrodinger operators (hD - a(y))**2 + W(y).

The kinetic part uses link variables: the hop from node i to i + e_k carries
the phase exp(-i theta_k(i)), theta_k(i) = (spacing_k / h) * a_k(midpoint).
For affine-linear a the midpoint rule integrates a along the link exactly,
so the stencil is exactly covariant under linear gauge changes
a -> a + grad(chi) with chi quadratic, and exactly Hermitian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from ..errors import GaugeUnsupported, SectorMismatch
from ..model import ModelParams, ModelPotential, RadialPotential
from ..potentials import ScalarPotential
from .grid import GridSpec

GAUGES = ("symmetric", "landau", "none", "custom-linear")
BOUNDARIES = ("dirichlet-box", "dirichlet-halfspace-plus", "dirichlet-halfspace-minus")


@dataclass(frozen=True)
class LinearVectorPotential:
    """a(y) = matrix @ y + offset on a d-dimensional grid."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return y @ np.asarray(self.matrix).T + np.asarray(self.offset)

    @property
    def is_zero(self):
        return not (np.any(self.matrix) or np.any(self.offset))

    @property
    def field(self):
        """Curl (2D: scalar, 3D: vector) of the constant magnetic field."""
        M = np.asarray(self.matrix)
        if M.shape[0] == 2:
            return M[1, 0] - M[0, 1]
        if M.shape[0] == 3:
            return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
        return 0.0


def gauge_potential(gauge, dimension, omega_prime=1.0, custom=None):
    """Vector potential omega' * A for the named gauge.

    ``symmetric`` is A = (-y2, y1[, 0]); ``landau`` is A = (-2 y2, 0[, 0]);
    both give the field 2 along the third axis. ``custom-linear`` takes
    ``custom`` as a (matrix, offset) pair or a callable, which must be affine.
    """
    d = dimension
    M = np.zeros((d, d))
    c = np.zeros(d)
    if gauge == "none" or d == 1:
        if gauge == "custom-linear" and custom is not None:
            return _as_linear(custom, d)
        return LinearVectorPotential(M, c)
    if gauge == "symmetric":
        M[0, 1] = -omega_prime
        M[1, 0] = omega_prime
    elif gauge == "landau":
        M[0, 1] = -2.0 * omega_prime
    elif gauge == "custom-linear":
        if custom is None:
            raise GaugeUnsupported("custom-linear gauge requires a vector potential")
        return _as_linear(custom, d)
    else:
        raise GaugeUnsupported(f"unknown gauge {gauge!r}")
    return LinearVectorPotential(M, c)


def _as_linear(custom, d, tol=1e-10):
    if isinstance(custom, LinearVectorPotential):
        return custom
    if isinstance(custom, tuple):
        M, c = custom
        return LinearVectorPotential(np.asarray(M, float).reshape(d, d),
                                     np.asarray(c, float).reshape(d))
    if callable(custom):
        c = np.asarray(custom(np.zeros(d)), float)
        M = np.stack([np.asarray(custom(np.eye(d)[k]), float) - c for k in range(d)], axis=1)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-3, 3, size=(16, d))
        vals = np.array([custom(p) for p in pts], float)
        if np.max(np.abs(vals - (pts @ M.T + c))) > tol * max(1.0, np.max(np.abs(vals))):
            raise GaugeUnsupported("vector potential is not affine-linear")
        return LinearVectorPotential(M, c)
    raise GaugeUnsupported(f"cannot interpret vector potential {custom!r}")


def sample_potential(grid: GridSpec, potential, mp=None):
    """Samples of W on the grid from an array, callable or potential object."""
    if isinstance(potential, RadialPotential):
        if mp is None:
            raise ValueError("radial potential needs ModelParams")
        potential = ModelPotential(mp, potential)
    if isinstance(potential, ScalarPotential):
        return np.asarray(potential.value(grid.points()), dtype=float)
    if callable(potential):
        return np.asarray(potential(*grid.mesh()), dtype=float)
    arr = np.asarray(potential, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"potential samples shape {arr.shape} != grid {grid.shape}")
    return arr


class DiscreteOperator:
    """Hermitian FD operator on a grid, optionally restricted to a half-space.

    Vectors handed to :meth:`matvec` live on the active nodes (all nodes for
    the box, the nodes of the half-space otherwise) in C order;
    :meth:`apply` works on full grid arrays with zeros outside the domain.
    """

    def __init__(self, grid: GridSpec, h, potential, vector_potential: LinearVectorPotential,
                 gauge="symmetric", omega_prime=0.0, boundary="dirichlet-box",
                 halfspace_offset=0.0):
        if grid.periodic:
            raise ValueError("finite-difference operator needs a Dirichlet grid")
        if boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {boundary!r}")
        self.grid = grid
        self.h = float(h)
        self.gauge = gauge
        self.omega_prime = float(omega_prime)
        self.boundary = boundary
        self.halfspace_offset = float(halfspace_offset)
        self.vector_potential = vector_potential
        self.potential = np.asarray(potential, dtype=float)
        self.hop = tuple(self.h**2 / d**2 for d in grid.spacing)
        self.magnetic = not vector_potential.is_zero
        self.dtype = np.complex128 if self.magnetic else np.float64
        self._links = self._link_factors() if self.magnetic else None
        z = grid.coords[-1]
        shape = [1] * grid.dimension
        shape[-1] = -1
        z = z.reshape(shape)
        if boundary == "dirichlet-halfspace-plus":
            self.mask = np.broadcast_to(z > -self.halfspace_offset, grid.shape).copy()
        elif boundary == "dirichlet-halfspace-minus":
            self.mask = np.broadcast_to(z < self.halfspace_offset, grid.shape).copy()
        else:
            self.mask = None
        self._diag = self.potential + 2.0 * sum(self.hop)

    def _link_factors(self):
        """exp(-i theta) for the link i -> i + e_k, one array per axis."""
        g = self.grid
        pts = np.stack(g.mesh(), axis=-1)
        out = []
        for k in range(g.dimension):
            mid = pts.copy()
            mid[..., k] += 0.5 * g.spacing[k]
            ak = self.vector_potential(mid)[..., k]
            out.append(np.exp(-1j * g.spacing[k] * ak / self.h))
        return out

    # shape bookkeeping -------------------------------------------------
    @property
    def n_unknowns(self):
        return self.grid.size if self.mask is None else int(self.mask.sum())

    def expand(self, w):
        if self.mask is None:
            return np.asarray(w).reshape(self.grid.shape)
        u = np.zeros(self.grid.shape, dtype=np.result_type(w, self.dtype))
        u[self.mask] = w
        return u

    def compress(self, u):
        u = np.asarray(u).reshape(self.grid.shape)
        return u.reshape(-1) if self.mask is None else u[self.mask]

    # operator action ---------------------------------------------------
    def apply(self, u):
        """H u for a full-grid array u (values outside the domain ignored)."""
        u = np.asarray(u).reshape(self.grid.shape)
        if self.magnetic and not np.iscomplexobj(u):
            u = u.astype(complex)
        if self.mask is not None:
            u = np.where(self.mask, u, 0)
        out = self._diag * u
        for k, t in enumerate(self.hop):
            fwd = [slice(None)] * u.ndim
            bwd = [slice(None)] * u.ndim
            fwd[k] = slice(1, None)
            bwd[k] = slice(None, -1)
            fwd, bwd = tuple(fwd), tuple(bwd)
            if self.magnetic:
                ph = self._links[k][bwd]
                out[bwd] -= t * ph * u[fwd]
                out[fwd] -= t * np.conj(ph) * u[bwd]
            else:
                out[bwd] -= t * u[fwd]
                out[fwd] -= t * u[bwd]
        if self.mask is not None:
            out = np.where(self.mask, out, 0)
        return out

    def matvec(self, w):
        return self.compress(self.apply(self.expand(w)))

    def as_linear_operator(self):
        n = self.n_unknowns
        return LinearOperator((n, n), matvec=self.matvec, dtype=self.dtype)

    def norm_estimate(self):
        """Gershgorin bound on the spectral norm."""
        return float(np.max(np.abs(self._diag)) + 2.0 * sum(self.hop))

    def to_sparse(self):
        """CSR matrix on the active nodes (same ordering as :meth:`matvec`)."""
        g = self.grid
        idx = np.arange(g.size).reshape(g.shape)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [self._diag.ravel().astype(self.dtype)]
        for k, t in enumerate(self.hop):
            fwd = [slice(None)] * g.dimension
            bwd = [slice(None)] * g.dimension
            fwd[k] = slice(1, None)
            bwd[k] = slice(None, -1)
            i = idx[tuple(bwd)].ravel()
            j = idx[tuple(fwd)].ravel()
            ph = self._links[k][tuple(bwd)].ravel() if self.magnetic else np.ones(i.size)
            rows += [i, j]
            cols += [j, i]
            vals += [(-t * ph).astype(self.dtype), (-t * np.conj(ph)).astype(self.dtype)]
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(g.size, g.size))
        if self.mask is not None:
            keep = np.flatnonzero(self.mask.ravel())
            A = A[keep][:, keep]
        return A.tocsr()

    # quadratic forms ---------------------------------------------------
    def kinetic_form(self, v):
        """Sum over links of hop * |exp(-i theta) v_j - v_i|**2 (v zero off-domain)."""
        v = np.asarray(v).reshape(self.grid.shape)
        if self.mask is not None:
            v = np.where(self.mask, v, 0)
        total = 0.0
        for k, t in enumerate(self.hop):
            pad = [(0, 0)] * v.ndim
            pad[k] = (1, 1)
            vp = np.pad(v, pad)
            hi = [slice(None)] * v.ndim
            lo = [slice(None)] * v.ndim
            hi[k] = slice(1, None)
            lo[k] = slice(None, -1)
            if self.magnetic:
                ph = np.pad(self._links[k], pad, constant_values=1.0)[tuple(lo)]
                d = ph * vp[tuple(hi)] - vp[tuple(lo)]
            else:
                d = vp[tuple(hi)] - vp[tuple(lo)]
            total += t * float(np.sum(np.abs(d) ** 2))
        return total

    def reflect(self, u):
        """y_last -> -y_last on full-grid arrays."""
        return np.flip(np.asarray(u).reshape(self.grid.shape), axis=-1)

    def commutator_defect(self, n_probe=3, seed=0):
        """max ||H R v - R H v|| / (||H|| ||v||) over random probes."""
        if self.mask is not None or not self.grid.symmetric_last_axis():
            return np.inf
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_probe):
            v = rng.standard_normal(self.grid.shape)
            if self.magnetic:
                v = v + 1j * rng.standard_normal(self.grid.shape)
            d = self.apply(self.reflect(v)) - self.reflect(self.apply(v))
            worst = max(worst, np.linalg.norm(d) / (self.norm_estimate() * np.linalg.norm(v)))
        return worst

    def check_reflection_symmetry(self, tol=1e-12):
        d = self.commutator_defect()
        if not d <= tol:
            raise SectorMismatch(f"operator does not commute with y3 reflection (defect {d:.3e})")
        return d

    def restricted(self, boundary, halfspace_offset=0.0):
        """Same operator data on another domain."""
        return DiscreteOperator(self.grid, self.h, self.potential, self.vector_potential,
                                self.gauge, self.omega_prime, boundary, halfspace_offset)


def assemble_operator(grid: GridSpec, mp, potential, gauge="symmetric",
                      boundary="dirichlet-box", *, h=None, omega_prime=None,
                      vector_potential=None, halfspace_offset=0.0):
    """Discretize (hD - omega' A)**2 + W on ``grid``.

    Parameters
    ----------
    mp : ModelParams or None
        Supplies h and omega' unless overridden.
    potential : array, callable, ScalarPotential or RadialPotential
        A radial potential is turned into the model W through ``mp``.
    gauge : str
        One of ``symmetric``, ``landau``, ``none``, ``custom-linear``.
    vector_potential : tuple or callable, optional
        Full (unscaled) vector potential for ``custom-linear``.
    """
    if h is None:
        if mp is None:
            raise ValueError("h required without ModelParams")
        h = mp.h
    if omega_prime is None:
        omega_prime = mp.omega_prime if isinstance(mp, ModelParams) else 0.0
    W = sample_potential(grid, potential, mp)
    a = gauge_potential(gauge, grid.dimension, omega_prime, vector_potential)
    return DiscreteOperator(grid, h, W, a, gauge, omega_prime, boundary, halfspace_offset)


def assemble_physical_operator(grid: GridSpec, mp: ModelParams, V: RadialPotential,
                               boundary="dirichlet-box", h=None):
    """P_A(x, hD_x) in original coordinates.

    Uses P_A = |hD - a(x)|**2 + V(|x|) - omega**2 (x1**2 + x2**2)/4 + nu x2
    with a(x) = (nu/omega - omega x2/2, omega x1/2, 0).
    """
    if grid.dimension != 3:
        raise ValueError("physical operator is three-dimensional")
    w, nu = mp.omega, mp.nu
    M = np.array([[0.0, -w / 2, 0.0], [w / 2, 0.0, 0.0], [0.0, 0.0, 0.0]])
    c = np.array([nu / w, 0.0, 0.0])
    x1, x2, x3 = grid.mesh()
    r = np.sqrt(x1**2 + x2**2 + x3**2)
    veff = V.value(r) - 0.25 * w**2 * (x1**2 + x2**2) + nu * x2
    a = LinearVectorPotential(M, c)
    return DiscreteOperator(grid, mp.h if h is None else h, veff, a, "custom-linear", 0.0,
                            boundary)


def gauge_transform_phase(grid: GridSpec, chi, h):
    """exp(i chi / h) on the grid for a callable chi(*mesh)."""
    return np.exp(1j * np.asarray(chi(*grid.mesh())) / h)
