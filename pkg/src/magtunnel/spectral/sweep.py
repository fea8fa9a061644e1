"""h-sweeps of the tunneling splitting and the exponential band check."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..critical import rescaled_floquet
from ..errors import UnderResolved
from ..potentials import ScalarPotential
from .eigen import lowest_eigenpairs
from .grid import GridSpec
from .operator import assemble_operator

log = logging.getLogger(__name__)

# Points per local oscillator length sqrt(h / mu_max) demanded of the grid.
POINTS_PER_LENGTH = 2.0


@dataclass
class SplittingReport:
    h: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    dE: np.ndarray
    minus_h_log_dE: np.ndarray
    slope: float
    intercept: float
    S_reference: float = float("nan")
    omega_prime: float = 0.0
    C: float = float("nan")
    epsilon: float = float("nan")
    bound_check: bool | None = None
    residuals: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)

    @property
    def s_star(self):
        return self.slope

    @property
    def band(self):
        S, C, e = self.S_reference, self.C, self.epsilon
        return (S - C * self.omega_prime - e, S + C * self.omega_prime + e)

    def rows(self):
        return [
            (float(h), float(a), float(b), float(d), float(m))
            for h, a, b, d, m in zip(self.h, self.E0, self.E1, self.dE, self.minus_h_log_dE)
        ]

    def summary(self):
        return {
            "fit_slope": self.slope,
            "fit_intercept": self.intercept,
            "S_reference": self.S_reference,
            "omega_prime": self.omega_prime,
            "C": self.C,
            "epsilon": self.epsilon,
            "band": list(self.band),
            "verdict": self.bound_check,
        }


def max_frequency(potential, omega_prime=0.0):
    """Largest harmonic frequency of the rescaled symbol at the wells."""
    fs = rescaled_floquet(potential, omega_prime)
    return float(np.max(np.abs(fs.eigenvalues.imag)))


def resolution_limit(h, mu_max, points_per_length=POINTS_PER_LENGTH):
    """Largest admissible spacing for semiclassical parameter h."""
    return np.sqrt(h / mu_max) / points_per_length


def check_resolution(grid: GridSpec, h, mu_max, points_per_length=POINTS_PER_LENGTH):
    lim = resolution_limit(h, mu_max, points_per_length)
    worst = max(grid.spacing)
    if worst > lim * (1 + 1e-12):
        raise UnderResolved(
            f"spacing {worst:.4g} exceeds {lim:.4g} = sqrt(h/mu)/{points_per_length:g} "
            f"at h={h:g} (mu_max={mu_max:.4g})")
    return lim


def fit_exponent(h, dE, weights=None):
    """Weighted least squares of log dE = a - s/h; returns (s, a).

    Default weights 1/h emphasize the smallest h.
    """
    h = np.asarray(h, dtype=float)
    y = np.log(np.asarray(dE, dtype=float))
    w = 1.0 / h if weights is None else np.asarray(weights, dtype=float)
    A = np.stack([np.ones_like(h), -1.0 / h], axis=1)
    sw = np.sqrt(w)
    sol, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    return float(sol[1]), float(sol[0])


def sector_splitting(op, tol=1e-12, maxiter=None):
    """(E0, E1, residuals) from the even and odd sector ground states."""
    res = lowest_eigenpairs(op, 1, "both", tol=tol, maxiter=maxiter, keep_vectors=False)
    return res.lowest("even"), res.lowest("odd"), list(res.residuals)


def _one(args):
    grid, potential, h, omega_prime, gauge, tol, maxiter = args
    op = assemble_operator(grid, None, potential, gauge, h=h, omega_prime=omega_prime)
    return sector_splitting(op, tol, maxiter)


def splitting_sweep(mp, potential, grid: GridSpec, h_list, *, omega_prime=None,
                    gauge="symmetric", S_reference=None, C=None, epsilon=None,
                    points_per_length=POINTS_PER_LENGTH, mu_max=None, tol=1e-12,
                    maxiter=None, workers=1):
    """Splitting E1 - E0 over a decreasing list of h.

    Parameters
    ----------
    mp : ModelParams or None
        Source of omega' when ``omega_prime`` is not given.
    potential : ScalarPotential or callable
        A callable needs ``mu_max`` for the resolution rule.
    C, epsilon : float, optional
        Band constant and discretization allowance; with both given (and
        ``S_reference``) the band check at the smallest h is evaluated.

    Raises
    ------
    UnderResolved
        If the grid is too coarse for any h in the list.
    """
    h_list = np.asarray(h_list, dtype=float)
    if np.any(np.diff(h_list) >= 0):
        raise ValueError("h_list must be strictly decreasing")
    if omega_prime is None:
        omega_prime = 0.0 if mp is None else mp.omega_prime
    if mu_max is None:
        if not isinstance(potential, ScalarPotential):
            raise ValueError("mu_max required for a plain callable potential")
        mu_max = max_frequency(potential, omega_prime if grid.dimension == 3 else 0.0)
    for h in h_list:
        check_resolution(grid, h, mu_max, points_per_length)
    jobs = [(grid, potential, float(h), omega_prime, gauge, tol, maxiter) for h in h_list]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_one, jobs))
    else:
        out = [_one(j) for j in jobs]
    E0 = np.array([o[0] for o in out])
    E1 = np.array([o[1] for o in out])
    dE = E1 - E0
    if np.any(dE <= 0):
        log.warning("non-positive splitting encountered: %s", dE)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = -h_list * np.log(dE)
    ok = dE > 0
    if ok.sum() >= 2:
        slope, icpt = fit_exponent(h_list[ok], dE[ok])
    else:
        slope, icpt = float("nan"), float("nan")
    rep = SplittingReport(h_list, E0, E1, dE, m, slope, icpt,
                          float("nan") if S_reference is None else float(S_reference),
                          float(omega_prime),
                          float("nan") if C is None else float(C),
                          float("nan") if epsilon is None else float(epsilon),
                          None, [o[2] for o in out], grid.describe())
    if S_reference is not None and C is not None and epsilon is not None:
        lo, hi = rep.band
        rep.bound_check = bool(lo <= m[-1] <= hi)
    return rep


@dataclass
class BandAnalysis:
    omega_primes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    S: float
    C: float
    epsilon: float
    in_band: np.ndarray
    slope_within: np.ndarray
    monotone: bool

    @property
    def passed(self):
        return bool(np.all(self.in_band) and np.all(self.slope_within) and self.monotone)


def band_analysis(reports, S, epsilon, measure="smallest_h"):
    """Fit C and check the exponential band across omega' values.

    ``reports`` must include omega' = 0. The constant C is the least-squares
    slope (through the origin) of m(omega') - m(0) against omega'. With
    ``measure="smallest_h"`` m is -h log dE at the smallest h; with
    ``measure="fit"`` m is the fitted exponent s*, which drops the h log
    prefactor term. ``epsilon`` is the discretization allowance.
    """
    if measure not in ("smallest_h", "fit"):
        raise ValueError(f"unknown measure {measure!r}")
    reps = sorted(reports, key=lambda r: r.omega_prime)
    wp = np.array([r.omega_prime for r in reps])
    if wp[0] != 0.0:
        raise ValueError("band analysis needs an omega' = 0 reference run")
    if measure == "fit":
        m = np.array([r.s_star for r in reps])
    else:
        m = np.array([r.minus_h_log_dE[-1] for r in reps])
    s = np.array([r.slope for r in reps])
    d = np.abs(m - m[0])
    pos = wp > 0
    C = float(np.sum(wp[pos] * d[pos]) / np.sum(wp[pos] ** 2)) if pos.any() else 0.0
    in_band = np.abs(m - S) <= C * wp + epsilon
    slope_within = np.abs(s - s[0]) <= 3.0 * C * wp + 1e-15
    ds = np.diff(s)
    monotone = bool(np.all(ds >= 0) or np.all(ds <= 0))
    for r, mk in zip(reps, m):
        r.C, r.epsilon, r.S_reference = C, float(epsilon), float(S)
        lo, hi = r.band
        r.bound_check = bool(lo <= mk <= hi)
    return BandAnalysis(wp, m, s, float(S), C, float(epsilon), in_band, slope_within, monotone)
