"""Magnetic wells rho_0^+-: location, fundamental matrix, Floquet exponents."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, NonConvergence, NotElliptic
from .model import (ModelParams, PhasePoint, QuarticShell, RadialPotential,
                    energy_reference, grad_p_A, hess_p_A, to_rescaled)

log = logging.getLogger(__name__)

PURITY_TOL = 1e-9
ORDER_MARGIN = 1e-8


@dataclass(frozen=True)
class CriticalPoint:
    point: PhasePoint
    sign: int
    y_position: np.ndarray
    gradient_norm: float
    degenerate: bool = False


@dataclass(frozen=True)
class FloquetSpectrum:
    """Spectrum of F = J Hess p at a critical point.

    ``mu`` holds the three positive frequencies in increasing order when the
    point is elliptic; otherwise it holds the moduli of the imaginary parts
    of the eigenvalues in the upper half plane, for reporting only.
    ``mu_prime_sq`` are the three roots of the characteristic polynomial in
    lambda**2.
    """

    fundamental_matrix: np.ndarray
    eigenvalues: np.ndarray
    mu: np.ndarray
    mu_prime_sq: np.ndarray
    trace_plus: float
    elliptic: bool
    reason: str = ""

    @property
    def margin(self):
        """Smallest of mu_1, mu_2 - mu_1, mu_3 - mu_2 (elliptic case)."""
        if not self.elliptic:
            return -np.inf
        m = self.mu
        return float(min(m[0], m[1] - m[0], m[2] - m[1]))


def symplectic_matrix(n=3):
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def closed_form_wells(mp: ModelParams, V: RadialPotential):
    """Closed-form positions x_0^- and x_0^+ (xi = 0)."""
    s = mp.scale
    z = np.sqrt(V.r0**2 - s * s)
    return np.array([0.0, s, -z]), np.array([0.0, s, z])


def newton_critical(mp, V, x0, xi0, tol=1e-13, max_iter=50):
    """Newton iteration on grad p_A = 0 from (x0, xi0)."""
    v = np.concatenate([np.asarray(x0, float), np.asarray(xi0, float)])
    for it in range(max_iter):
        g = grad_p_A(v[:3], v[3:], mp, V)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return v, gn, it
        H = hess_p_A(v[:3], v[3:], mp, V)
        v = v - np.linalg.solve(H, g)
    g = grad_p_A(v[:3], v[3:], mp, V)
    gn = float(np.linalg.norm(g))
    if gn <= tol:
        return v, gn, max_iter
    raise NonConvergence(f"Newton did not converge in {max_iter} iterations (|grad|={gn:.3e})",
                         partial=v)


def find_critical_points(mp: ModelParams, V: RadialPotential, strict=True, newton_tol=1e-13):
    """Return the two critical points [rho_0^-, rho_0^+] of p_A.

    Parameters
    ----------
    strict : bool
        At the admissibility boundary r0 omega**2/nu = 2 both points collapse
        onto (0, r0, 0). With ``strict`` this raises; otherwise a single
        degenerate point is returned.
    """
    q = mp.admissibility_ratio(V.r0)
    if q < 2.0 - 1e-14:
        raise AdmissibilityError(f"r0*omega^2/nu = {q:.6g} < 2: no real critical points")
    if abs(q - 2.0) <= 1e-14:
        if strict:
            raise AdmissibilityError("r0*omega^2/nu = 2: critical points degenerate")
        x = np.array([0.0, V.r0, 0.0])
        gn = float(np.linalg.norm(grad_p_A(x, np.zeros(3), mp, V)))
        return [CriticalPoint(PhasePoint(x, np.zeros(3)), 0, to_rescaled(x, mp), gn, True)]
    out = []
    for sign, x0 in zip((-1, 1), closed_form_wells(mp, V)):
        v, gn, _ = newton_critical(mp, V, x0, np.zeros(3), tol=newton_tol)
        if gn > 1e-10:
            raise NonConvergence(f"critical point residual {gn:.3e} above 1e-10", partial=v)
        pt = PhasePoint(v[:3], v[3:])
        out.append(CriticalPoint(pt, sign, to_rescaled(pt.x, mp), gn))
    return out


def fd_hessian(mp, V, point: PhasePoint, step=1e-5):
    """Central differences of the analytic gradient."""
    v = point.as_vector()
    H = np.empty((6, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = step
        gp = grad_p_A((v + e)[:3], (v + e)[3:], mp, V)
        gm = grad_p_A((v - e)[:3], (v - e)[3:], mp, V)
        H[:, j] = (gp - gm) / (2 * step)
    return H


def floquet_from_hessian(H, purity_tol=PURITY_TOL, order_margin=ORDER_MARGIN):
    """Fundamental matrix F = J H and the ellipticity analysis of its spectrum."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0] // 2
    F = symplectic_matrix(n) @ H
    lam = np.linalg.eigvals(F)
    scale = max(np.linalg.norm(F, 2), 1e-300)
    # characteristic polynomial of a Hamiltonian matrix is even in lambda
    coeffs = np.real(np.poly(F))
    mu_prime_sq = np.roots(coeffs[::2])
    mu_prime_sq = mu_prime_sq[np.lexsort((mu_prime_sq.imag, mu_prime_sq.real))]
    upper = lam[lam.imag > 0]
    mu_report = np.sort(np.abs(upper.imag)) if upper.size else np.zeros(0)
    reason = ""
    elliptic = True
    if np.max(np.abs(lam.real)) > purity_tol * scale:
        elliptic = False
        reason = f"eigenvalues not purely imaginary (max |Re| = {np.max(np.abs(lam.real)):.3e})"
    if elliptic:
        im = np.sort(np.abs(lam.imag))
        mu = 0.5 * (im[0::2] + im[1::2])
        if mu[0] <= order_margin or np.any(np.diff(mu) <= order_margin):
            elliptic = False
            reason = "frequencies not strictly ordered"
        mu_report = mu
    if mu_report.size != n:
        mu_report = np.resize(mu_report, n) if mu_report.size else np.zeros(n)
    tr = float(np.sum(mu_report)) if elliptic else float("nan")
    return FloquetSpectrum(F, lam, mu_report, np.real_if_close(mu_prime_sq), tr, elliptic, reason)


def fundamental_matrix(cp: CriticalPoint, mp: ModelParams, V: RadialPotential,
                       require_elliptic=True, check_fd=True):
    """Floquet analysis at a refined critical point.

    Raises
    ------
    NotElliptic
        If ``require_elliptic`` and the strict ordering fails; the spectrum is
        attached to the exception.
    """
    if cp.gradient_norm > 1e-10:
        raise ValueError("critical point not refined")
    H = hess_p_A(cp.point.x, cp.point.xi, mp, V)
    if check_fd:
        Hfd = fd_hessian(mp, V, cp.point)
        rel = np.linalg.norm(H - Hfd) / np.linalg.norm(H)
        if rel > 1e-6:
            raise RuntimeError(f"analytic Hessian disagrees with finite differences ({rel:.2e})")
    fs = floquet_from_hessian(H)
    if require_elliptic and not fs.elliptic:
        raise NotElliptic(f"rho_0 not elliptic: {fs.reason}", spectrum=fs)
    return fs


def harmonic_level(fs: FloquetSpectrum, E, h, normalization="trace"):
    """Leading ground-level prediction E + h Tr+.

    ``normalization="weyl"`` returns E + h Tr+/2, the ground level of the Weyl
    quantized normal form sum mu_j (x_j**2 + xi_j**2)/2.
    """
    if not fs.elliptic:
        raise NotElliptic("harmonic level requires an elliptic point", spectrum=fs)
    if normalization == "trace":
        return E + h * fs.trace_plus
    if normalization == "weyl":
        return E + 0.5 * h * fs.trace_plus
    raise ValueError(f"unknown normalization {normalization!r}")


@dataclass(frozen=True)
class ScanEntry:
    params: ModelParams
    potential: RadialPotential
    spectrum: FloquetSpectrum

    @property
    def margin(self):
        return self.spectrum.margin


class ScanResult(list):
    """Elliptic parameter tuples sorted by decreasing margin.

    An empty result is a valid outcome; ``rejected`` counts the tuples that
    failed admissibility or ellipticity.
    """

    def __init__(self, entries=(), rejected=None):
        super().__init__(entries)
        self.rejected = dict(rejected or {})

    @property
    def empty(self):
        return len(self) == 0

    def summary(self):
        if self.empty:
            return f"no elliptic tuple found (rejected: {self.rejected})"
        return f"{len(self)} elliptic tuples; best margin {self[0].margin:.6g}"


def _scan_one(args):
    omega, nu, v4, r0 = args
    mp = ModelParams(omega, nu)
    V = QuarticShell(v4, r0)
    try:
        cps = find_critical_points(mp, V, strict=True)
    except AdmissibilityError:
        return ("inadmissible", None)
    fs = fundamental_matrix(cps[1], mp, V, require_elliptic=False, check_fd=False)
    if not fs.elliptic:
        return ("not_elliptic", None)
    return ("ok", ScanEntry(mp, V, fs))


def parameter_scan(omegas, nus, v4s, r0s, workers=1):
    """Scan the quartic-shell family for admissible elliptic tuples."""
    grid = list(itertools.product(omegas, nus, v4s, r0s))
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_scan_one, grid))
    else:
        results = [_scan_one(g) for g in grid]
    rejected = {"inadmissible": 0, "not_elliptic": 0}
    entries = []
    for status, entry in results:
        if status == "ok":
            entries.append(entry)
        else:
            rejected[status] += 1
    # stable sort keeps input order among equal margins
    entries.sort(key=lambda e: -e.margin)
    res = ScanResult(entries, rejected)
    if res.empty:
        log.info(res.summary())
    return res


DEFAULT_SCAN = dict(
    omegas=(1.0, 2.0),
    nus=(0.1, 0.2, 0.3, 0.45),
    v4s=(1.0, 0.1, 0.03, 0.01),
    r0s=(1.0,),
)


def reference_energy(mp, V):
    return energy_reference(mp, V)


def rescaled_hessian(potential, omega_prime, well=+1):
    """Hessian of p'_A = |eta - omega' A(y)|**2 + W(y) at a well (symmetric gauge)."""
    y0 = potential.wells[1 if well > 0 else 0]
    L = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    H = np.zeros((6, 6))
    H[:3, :3] = np.asarray(potential.hessian(y0)) + 2.0 * omega_prime**2 * (L.T @ L)
    H[:3, 3:] = -2.0 * omega_prime * L.T
    H[3:, :3] = H[:3, 3:].T
    H[3:, 3:] = 2.0 * np.eye(3)
    return H


def rescaled_floquet(potential, omega_prime=0.0, well=+1):
    """Floquet analysis of the rescaled symbol at a minimum of W."""
    return floquet_from_hessian(rescaled_hessian(potential, omega_prime, well))
