"""Period propagator of the driven 2D Hamiltonian versus the stationary P_A.

Conventions. The drive is E_1(t) = (sin wt, -cos wt) with vector potential
A_2(t) = (cos wt, sin wt)/w, so E_1 = -dA_2/dt and A_2(0) = A_0 = (1/w, 0).

    velocity form  H_2(t) = (hD - nu A_2(t))**2 + V(|x|)
    length form    H_1(t) = (hD)**2 + V(|x|) - nu x.E_1(t)

related by u_2 = X(t) u_1 with X(t) = exp(i nu x.A_2(t)/h). Evolution is
i h du/dt = H(t) u. With (R(t) f)(x) = f(Rot(wt) x) = exp(i w t L_3/h) f,

    R(t) H_2(t) R(t)^-1 = (hD - nu A_0)**2 + V,
    U_2(s + T, s) = R(s)^-1 exp(-i T P_A/h) R(s),  P_A = (hD - nu A_0)**2 + V - w L_3,

so the eigenphases of the period map are -T E_k/h modulo 2 pi.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundaryLeak, SubspaceLeak
from .model import ModelParams, RadialPotential
from .spectral.grid import GridSpec
from .spectral.operator import DiscreteOperator, LinearVectorPotential

log = logging.getLogger(__name__)

# Yoshida coefficients for the fourth-order triple jump.
_Y1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_Y0 = 1.0 - 2.0 * _Y1


@dataclass(frozen=True)
class DrivenHamiltonianSpec:
    """Driven 2D Hamiltonian; nu = 0 (no drive) is allowed here."""

    omega: float
    nu: float
    V: RadialPotential
    gauge_form: str = "velocity"
    h: float = 0.1
    dimension: int = 2

    def __post_init__(self):
        if self.gauge_form not in ("velocity", "length"):
            raise ValueError(f"unknown gauge form {self.gauge_form!r}")
        if self.dimension != 2:
            raise ValueError("the driven model is implemented in 2D")
        if not self.omega > 0 or self.nu < 0 or not self.h > 0:
            raise ValueError("need omega > 0, nu >= 0, h > 0")

    @classmethod
    def from_params(cls, mp: ModelParams, V, gauge_form="velocity"):
        return cls(mp.omega, mp.nu, V, gauge_form, mp.h)

    @property
    def period(self):
        return 2.0 * np.pi / self.omega

    def E1(self, t):
        w = self.omega
        return np.array([np.sin(w * t), -np.cos(w * t)])

    def A2(self, t):
        w = self.omega
        return np.array([np.cos(w * t), np.sin(w * t)]) / w

    def with_form(self, form):
        return replace(self, gauge_form=form)


def _check_square(grid: GridSpec):
    if grid.dimension != 2:
        raise ValueError("2D grid required")
    (a0, b0), (a1, b1) = grid.box
    if grid.n[0] != grid.n[1] or abs(a0 - a1) > 1e-12 or abs(b0 - b1) > 1e-12:
        raise ValueError("grid must be square")
    if abs(a0 + b0) > 1e-12 * max(1.0, b0):
        raise ValueError("grid must be centered")


class FourierGrid:
    """Periodic square grid with FFT wavenumbers."""

    def __init__(self, grid: GridSpec):
        if not grid.periodic:
            raise ValueError("Fourier discretization needs a periodic grid")
        _check_square(grid)
        self.grid = grid
        self.n = grid.n[0]
        self.x1, self.x2 = grid.mesh()
        k = 2 * np.pi * np.fft.fftfreq(self.n, grid.spacing[0])
        self.k1, self.k2 = np.meshgrid(k, k, indexing="ij")
        kd = k.copy()
        if self.n % 2 == 0:
            kd[self.n // 2] = 0.0  # Nyquist mode of the first derivative
        self.d1, self.d2 = np.meshgrid(kd, kd, indexing="ij")
        self.r = np.hypot(self.x1, self.x2)

    def fft(self, u):
        return np.fft.fft2(u, axes=(-2, -1))

    def ifft(self, u):
        return np.fft.ifft2(u, axes=(-2, -1))

    def hd(self, u, h, axis):
        """h D_axis u with D = -i d/dx (Nyquist mode dropped)."""
        kk = self.d1 if axis == 0 else self.d2
        return h * self.ifft(kk * self.fft(u))

    def l3(self, u, h):
        """x1 hD2 - x2 hD1."""
        return self.x1 * self.hd(u, h, 1) - self.x2 * self.hd(u, h, 0)

    def inner(self, u, v):
        return np.vdot(u, v) * self.grid.cell_volume

    def rotate(self, u, angle):
        """g(x) = u(Rot(angle) x) by Fourier three-shear steps of at most pi/4."""
        steps = max(1, int(np.ceil(abs(angle) / (np.pi / 4))))
        th = angle / steps
        a = np.tan(th / 2)
        b = np.sin(th)
        x1, x2 = self.x1, self.x2
        k1, k2 = self.k1, self.k2
        out = np.asarray(u, dtype=complex)
        for _ in range(steps):
            # u(Rot(th) x) = u o Sx(-a) o Sy(b) o Sx(-a) with Rot(th) = Sx(-a) Sy(b) Sx(-a)
            out = _shear(out, k1, x2, -a, axis=-2)
            out = _shear(out, k2, x1, b, axis=-1)
            out = _shear(out, k1, x2, -a, axis=-2)
        return out


def _shear(u, k, coord, amount, axis):
    """f(x1 + amount*x2, x2) for axis=-2 or f(x1, x2 + amount*x1) for axis=-1."""
    U = np.fft.fft(u, axis=axis)
    U = U * np.exp(1j * k * amount * coord)
    return np.fft.ifft(U, axis=axis)


class FourierPA:
    """Pseudo-spectral P_A = (hD - nu A_0)**2 + V(|x|) - w L_3 on a periodic grid.

    Every term is Hermitian for the discrete l2 product: the kinetic and
    potential parts are diagonal in Fourier and physical space, and x1 hD2,
    x2 hD1 are products of commuting Hermitian factors.
    """

    def __init__(self, mp, V: RadialPotential, grid: GridSpec, h=None, rotating=True):
        # mp: anything with omega, nu and h (ModelParams or DrivenHamiltonianSpec)
        self.mp = mp
        self.V = V
        self.fg = FourierGrid(grid)
        self.grid = grid
        self.h = mp.h if h is None else float(h)
        self.rotating = rotating
        w, nu = mp.omega, mp.nu
        self.kinetic = (self.h * self.fg.k1 - nu / w) ** 2 + (self.h * self.fg.k2) ** 2
        self.potential = V.value(self.fg.r)
        self.magnetic = True
        self.dtype = np.complex128

    @property
    def n_unknowns(self):
        return self.grid.size

    def apply(self, u):
        u = np.asarray(u, dtype=complex).reshape(self.grid.shape)
        fg = self.fg
        out = fg.ifft(self.kinetic * fg.fft(u)) + self.potential * u
        if self.rotating:
            out = out - self.mp.omega * fg.l3(u, self.h)
        return out

    def matvec(self, w):
        return self.apply(w).reshape(-1)

    def to_dense(self):
        n = self.n_unknowns
        M = np.empty((n, n), dtype=complex)
        e = np.zeros(n, dtype=complex)
        for j in range(n):
            e[j] = 1.0
            M[:, j] = self.matvec(e)
            e[j] = 0.0
        return M

    def hermiticity_defect(self, n_probe=3, seed=0):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_probe):
            u = rng.standard_normal(self.n_unknowns) + 1j * rng.standard_normal(self.n_unknowns)
            v = rng.standard_normal(self.n_unknowns) + 1j * rng.standard_normal(self.n_unknowns)
            a = np.vdot(u, self.matvec(v))
            b = np.vdot(self.matvec(u), v)
            worst = max(worst, abs(a - b) / (np.linalg.norm(u) * np.linalg.norm(v)))
        return worst

    def rotation_commutator(self, states=None, n_probe=3, seed=0):
        """||[P, rotation by pi]|| / ||u||, on ``states`` or localized random packets.

        The periodic coordinate is a sawtooth at the box edge, so only
        functions vanishing there see an exact symmetry.
        """
        if states is None:
            states = smooth_test_states(self.fg, n_probe, seed)
        return rotation_commutator(self.apply, self.grid, states)

    def eigenpairs(self, k, dense_threshold=1200, tol=1e-12):
        """Lowest k eigenpairs, eigenvectors as grid arrays with unit L2 norm."""
        n = self.n_unknowns
        if n <= dense_threshold:
            import scipy.linalg as sla
            M = self.to_dense()
            M = 0.5 * (M + M.conj().T)
            vals, vecs = sla.eigh(M, subset_by_index=[0, k - 1])
        else:
            from scipy.sparse.linalg import LinearOperator, eigsh
            A = LinearOperator((n, n), matvec=self.matvec, dtype=complex)
            vals, vecs = eigsh(A, k=k, which="SA", tol=tol, v0=np.ones(n, complex) / np.sqrt(n))
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
        vol = self.grid.cell_volume
        states = [vecs[:, j].reshape(self.grid.shape) / np.sqrt(vol) for j in range(len(vals))]
        return np.asarray(vals), np.array(states)


def rot_pi(u, grid: GridSpec):
    """u(-x) on a centered grid (periodic: index i -> -i mod n)."""
    u = np.asarray(u)[..., ::-1, ::-1]
    return np.roll(u, 1, axis=(-2, -1)) if grid.periodic else u


def rotation_commutator(apply, grid: GridSpec, states):
    """max ||P R u - R P u|| / ||u|| for the rotation R by pi."""
    worst = 0.0
    for u in np.asarray(states):
        d = apply(rot_pi(u, grid)) - rot_pi(apply(u), grid)
        worst = max(worst, float(np.linalg.norm(d) / np.linalg.norm(u)))
    return worst


def build_P_A_2d(mp: ModelParams, V: RadialPotential, grid: GridSpec, h=None, method=None):
    """Stationary P_A in 2D.

    ``method`` is "fourier" (periodic grid) or "fd" (Dirichlet grid, link
    phases for a(x) = (nu/w - w x2/2, w x1/2) with the completed-square
    potential V - w**2 |x|**2/4 + nu x2). It defaults from ``grid.periodic``.
    """
    if method is None:
        method = "fourier" if grid.periodic else "fd"
    if method == "fourier":
        return FourierPA(mp, V, grid, h)
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    if grid.periodic:
        raise ValueError("finite differences use a Dirichlet grid")
    _check_square(grid)
    w, nu = mp.omega, mp.nu
    x1, x2 = grid.mesh()
    veff = V.value(np.hypot(x1, x2)) - 0.25 * w**2 * (x1**2 + x2**2) + nu * x2
    a = LinearVectorPotential(np.array([[0.0, -w / 2], [w / 2, 0.0]]), np.array([nu / w, 0.0]))
    return DiscreteOperator(grid, mp.h if h is None else h, veff, a, "custom-linear", 0.0,
                            "dirichlet-box")


@dataclass
class PropagationResult:
    states: np.ndarray
    unitarity_defect: float
    boundary_mass: float
    n_steps: int
    order: int


def boundary_mass(fg: FourierGrid, u, frame=0.1):
    """Largest fraction of |u|**2 within ``frame`` of the box edge."""
    L = fg.grid.box[0][1]
    edge = (np.abs(fg.x1) > (1 - frame) * L) | (np.abs(fg.x2) > (1 - frame) * L)
    u = np.asarray(u)
    tot = np.sum(np.abs(u) ** 2, axis=(-2, -1))
    part = np.sum(np.abs(u[..., edge]) ** 2, axis=-1)
    return float(np.max(part / tot))


class _Stepper:
    def __init__(self, spec: DrivenHamiltonianSpec, fg: FourierGrid, h):
        self.spec = spec
        self.fg = fg
        self.h = h
        self.Vx = spec.V.value(fg.r)
        self.hk1 = h * fg.k1
        self.hk2 = h * fg.k2

    def strang(self, u, t, dt):
        """One symmetric step over [t, t + dt] with coefficients at the midpoint."""
        h = self.h
        tm = t + 0.5 * dt
        nu = self.spec.nu
        if self.spec.gauge_form == "velocity":
            a = nu * self.spec.A2(tm)
            kin = (self.hk1 - a[0]) ** 2 + (self.hk2 - a[1]) ** 2
            pot = self.Vx
        else:
            e = self.spec.E1(tm)
            kin = self.hk1**2 + self.hk2**2
            pot = self.Vx - nu * (self.fg.x1 * e[0] + self.fg.x2 * e[1])
        half = np.exp(-0.5j * dt * pot / h)
        u = half * u
        u = self.fg.ifft(np.exp(-1j * dt * kin / h) * self.fg.fft(u))
        return half * u

    def step(self, u, t, dt, order):
        if order == 2:
            return self.strang(u, t, dt)
        u = self.strang(u, t, _Y1 * dt)
        u = self.strang(u, t + _Y1 * dt, _Y0 * dt)
        return self.strang(u, t + (_Y1 + _Y0) * dt, _Y1 * dt)


def propagate(spec: DrivenHamiltonianSpec, grid: GridSpec, h, states, t0, t1, n_steps,
              order=2, leak_tol=1e-6, checks=64):
    """Evolve ``states`` (array (..., n, n)) from t0 to t1."""
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    fg = FourierGrid(grid)
    st = _Stepper(spec, fg, h)
    u = np.array(states, dtype=complex)
    n0 = np.sqrt(np.sum(np.abs(u) ** 2, axis=(-2, -1)))
    dt = (t1 - t0) / n_steps
    every = max(1, n_steps // checks)
    worst = boundary_mass(fg, u)
    for j in range(n_steps):
        u = st.step(u, t0 + j * dt, dt, order)
        if (j + 1) % every == 0 or j + 1 == n_steps:
            worst = max(worst, boundary_mass(fg, u))
            if worst > leak_tol:
                raise BoundaryLeak(f"boundary mass {worst:.2e} > {leak_tol:g} at t={t0 + (j + 1) * dt:.4g}")
    n1 = np.sqrt(np.sum(np.abs(u) ** 2, axis=(-2, -1)))
    defect = float(np.max(np.abs(n1 / n0 - 1.0)))
    return PropagationResult(u, defect, worst, n_steps, order)


def propagate_period(spec: DrivenHamiltonianSpec, grid: GridSpec, h, n_steps=4096, s=0.0,
                     states=None, order=2, leak_tol=1e-6):
    """Action of U(s + T, s) on ``states`` by split-step Fourier evolution.

    Parameters
    ----------
    n_steps : int
        At least 500.
    order : {2, 4}
        Strang splitting or its fourth-order Yoshida composition.

    Raises
    ------
    BoundaryLeak
        If more than ``leak_tol`` of the mass reaches the outer 10% frame.
    """
    if n_steps < 500:
        raise ValueError("n_steps must be at least 500")
    if states is None:
        raise ValueError("states required")
    return propagate(spec, grid, h, states, s, s + spec.period, n_steps, order, leak_tol)


@dataclass
class MonodromyResult:
    eigenphases: np.ndarray
    reference_phases: np.ndarray
    energies: np.ndarray
    unitarity_defect: float
    compression_defect: float
    max_phase_error: float
    max_relative_error: float
    K: int
    s: float = 0.0
    gauge_form: str = "velocity"
    n_steps: int = 0
    order: int = 2
    boundary_mass: float = 0.0
    errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def summary(self):
        return {
            "K": self.K,
            "s": self.s,
            "gauge_form": self.gauge_form,
            "n_steps": self.n_steps,
            "order": self.order,
            "energies": self.energies.tolist(),
            "eigenphases": self.eigenphases.tolist(),
            "reference_phases": self.reference_phases.tolist(),
            "max_phase_error": self.max_phase_error,
            "max_relative_error": self.max_relative_error,
            "unitarity_defect": self.unitarity_defect,
            "compression_defect": self.compression_defect,
            "boundary_mass": self.boundary_mass,
        }


def wrap(phase):
    """Map to (-pi, pi]."""
    return -np.angle(np.exp(-1j * np.asarray(phase)))


def floquet_basis(spec: DrivenHamiltonianSpec, fg: FourierGrid, phi, s, h):
    """Eigenvectors of U(s + T, s) predicted from P_A eigenvectors ``phi``.

    Velocity form: R(s)^-1 phi; length form: X(s)^-1 R(s)^-1 phi.
    """
    w = spec.omega
    basis = fg.rotate(phi, -w * s) if s != 0.0 else np.asarray(phi, dtype=complex)
    if spec.gauge_form == "length":
        a = spec.nu * spec.A2(s)
        basis = np.exp(-1j * (fg.x1 * a[0] + fg.x2 * a[1]) / h) * basis
    return basis


def monodromy_vs_stationary(spec: DrivenHamiltonianSpec, grid: GridSpec, h=None, K=5,
                            n_steps=4096, s=0.0, order=2, leak_tol=1e-6, subspace_tol=1e-3):
    """Compress the period map to the K lowest P_A states and compare eigenphases.

    Eigenphases of the K x K compression are matched to states by the
    largest eigenvector component and compared with -T E_k/h modulo 2 pi,
    both absolutely and relative to the lowest state.

    Raises
    ------
    SubspaceLeak
        If the compression departs from unitary by more than ``subspace_tol``.
    """
    if not 1 <= K <= 12:
        raise ValueError("K must be between 1 and 12")
    h = spec.h if h is None else float(h)
    P = FourierPA(spec, spec.V, grid, h)
    E, phi = P.eigenpairs(K)
    fg = P.fg
    B = floquet_basis(spec, fg, phi, s, h)
    prop = propagate_period(spec, grid, h, n_steps, s, B, order, leak_tol)
    M = np.array([[fg.inner(B[j], prop.states[k]) for k in range(K)] for j in range(K)])
    cdef = float(np.linalg.norm(M.conj().T @ M - np.eye(K), 2))
    if cdef > subspace_tol:
        raise SubspaceLeak(f"compression unitarity defect {cdef:.2e} > {subspace_tol:g}")
    lam, vec = np.linalg.eig(M)
    owner = np.argmax(np.abs(vec), axis=0)
    phases = np.full(K, np.nan)
    for j, k in enumerate(owner):
        phases[k] = np.angle(lam[j])
    if np.any(np.isnan(phases)):
        raise SubspaceLeak("compression eigenvectors do not separate the K states")
    T = spec.period
    ref = wrap(-T * E / h)
    err = wrap(phases - ref)
    rel = wrap((phases - phases[0]) - (ref - ref[0]))
    return MonodromyResult(phases, ref, E, prop.unitarity_defect, cdef,
                           float(np.max(np.abs(err))), float(np.max(np.abs(rel))), K, float(s),
                           spec.gauge_form, n_steps, order, prop.boundary_mass, err)


def free_drift(spec: DrivenHamiltonianSpec, x0, p0, t):
    """Classical centre of the driven free particle (V = 0), p0 kinetic at t = 0.

    Hamilton's equations for |p - nu A_2|**2 - or p**2 - nu x.E_1: the
    kinetic momentum is p0 + nu (A_2(0) - A_2(t)) and x' = 2 * kinetic.
    """
    w, nu = spec.omega, spec.nu
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    # integral of A_2(0) - A_2(tau) over [0, t]
    intA = np.array([t - np.sin(w * t) / w, -(1.0 - np.cos(w * t)) / w]) / w
    return x0 + 2.0 * p0 * t + 2.0 * nu * intA


def stationary_frame_operator(spec: DrivenHamiltonianSpec, grid: GridSpec, h):
    """(hD - nu A_0)**2 + V without the rotation term."""
    return FourierPA(spec, spec.V, grid, h, rotating=False)


def _H2_apply(spec, fg, h, u, t):
    a = spec.nu * spec.A2(t)
    kin = (h * fg.k1 - a[0]) ** 2 + (h * fg.k2 - a[1]) ** 2
    return fg.ifft(kin * fg.fft(u)) + spec.V.value(fg.r) * u


def smooth_test_states(fg: FourierGrid, n_states=4, seed=0, width=(0.15, 0.25), spread=0.4):
    """Random Gaussian packets with random centres, widths and momenta.

    Widths and centres are in units of the half box, so the packets are
    negligible at the periodic edge.
    """
    L = fg.grid.box[0][1]
    width = (width[0] * L / 2.5, width[1] * L / 2.5)
    spread = spread * L / 2.5
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_states):
        c = rng.uniform(-spread, spread, 2)
        s = rng.uniform(*width)
        p = rng.uniform(-2.0, 2.0, 2)
        g = np.exp(-((fg.x1 - c[0]) ** 2 + (fg.x2 - c[1]) ** 2) / (2 * s * s)
                   + 1j * (p[0] * fg.x1 + p[1] * fg.x2))
        out.append(g / np.sqrt(np.real(fg.inner(g, g))))
    return np.array(out)


class GeneratorRotation:
    """R(t) = exp(i w t L_3/h) from a dense eigendecomposition of the discrete L_3."""

    def __init__(self, fg: FourierGrid, h, max_size=2304):
        n = fg.grid.size
        if n > max_size:
            raise ValueError(f"dense L_3 needs at most {max_size} unknowns, got {n}")
        M = np.empty((n, n), dtype=complex)
        e = np.zeros(fg.grid.shape, dtype=complex)
        for j in range(n):
            e.flat[j] = 1.0
            M[:, j] = fg.l3(e, h).reshape(-1)
            e.flat[j] = 0.0
        M = 0.5 * (M + M.conj().T)
        self.lam, self.Q = np.linalg.eigh(M)
        self.h = h
        self.shape = fg.grid.shape

    def __call__(self, u, angle):
        """exp(i angle L_3/h) u, i.e. u(Rot(angle) x) up to discretization."""
        c = self.Q.conj().T @ np.asarray(u).reshape(-1)
        return (self.Q @ (np.exp(1j * angle * self.lam / self.h) * c)).reshape(self.shape)


def rotating_frame_residual(spec: DrivenHamiltonianSpec, grid: GridSpec, h=None, t_samples=(0.0,),
                            n_states=4, seed=0, rotation="shear"):
    """max_t ||(R(t) H_2(t) R(t)^-1 - H_st) u|| / ||u|| over smooth test states.

    ``rotation`` selects R(t) f = f(Rot(wt) .) by Fourier shears ("shear") or
    the exponential of the discrete L_3 ("generator", small grids only).
    """
    h = spec.h if h is None else float(h)
    fg = FourierGrid(grid)
    Hst = stationary_frame_operator(spec, grid, h)
    U = smooth_test_states(fg, n_states, seed)
    w = spec.omega
    if rotation == "shear":
        rot = fg.rotate
    elif rotation == "generator":
        rot = GeneratorRotation(fg, h)
    else:
        raise ValueError(f"unknown rotation {rotation!r}")
    worst = 0.0
    for t in t_samples:
        for u in U:
            v = rot(u, -w * t)                # R(t)^-1 u
            v = _H2_apply(spec, fg, h, v, t)
            v = rot(v, w * t)                 # R(t) (...)
            d = v - Hst.apply(u)
            worst = max(worst, float(np.sqrt(np.real(fg.inner(d, d)))))
    return worst
