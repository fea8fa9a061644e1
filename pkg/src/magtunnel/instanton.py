"""Minimal Agmon geodesics between the wells and magnetic WKB data along them.

The Agmon metric is (W - E')_+ dy**2. Paths are polylines from y_0^- to
y_0^+ relaxed by a string method: preconditioned descent of the discrete
length with the tangential component removed, followed by reparametrization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateMetric, EndpointSingularity, NonConvergence
from .model import ModelParams, ModelPotential, RadialPotential, symmetric_gauge
from .potentials import ScalarPotential

log = logging.getLogger(__name__)


@dataclass
class InstantonOptions:
    """String-method settings.

    ``spacing`` sets the distribution of the reported nodes ("agmon" or
    "euclidean"); relaxation always runs on equal Euclidean spacing, which
    keeps the midpoint rule second order near the degenerate endpoints.
    """

    n_nodes: int = 101
    max_iter: int = 50_000
    tol: float = 1e-8
    step: float = 1.0
    spacing: str = "agmon"
    min_iter: int = 0
    cutoff_fraction: float = 0.05
    degenerate_tol: float = 1e-10
    dtheta: float = 1e-3
    richardson: bool = True


@dataclass
class InstantonPath:
    nodes: np.ndarray
    arc_params: np.ndarray
    energy: float
    action: float
    action_raw: float
    converged: bool
    gradient_norm: float
    iterations: int
    seed: str = "custom"
    wkb: "WKBData | None" = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    def arclength(self):
        seg = np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass
class WKBData:
    phi: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    amplitude: np.ndarray
    omega_prime: float
    heuristic_amplitude: bool = True
    cutoff: float = 0.0
    dphi_dtheta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def psi(self):
        """omega' psi0 + omega'**2 psi1."""
        return self.omega_prime * self.psi0 + self.omega_prime**2 * self.psi1


def as_potential(potential, mp=None):
    if isinstance(potential, RadialPotential):
        if mp is None:
            raise ValueError("radial potential needs ModelParams")
        return ModelPotential(mp, potential)
    if not isinstance(potential, ScalarPotential):
        raise TypeError("expected a ScalarPotential or RadialPotential")
    return potential


def _root(potential, y, E_prime):
    return np.sqrt(np.clip(potential.value(y) - E_prime, 0.0, None))


def agmon_length(nodes, E_prime, potential, mp=None):
    """Midpoint-rule Agmon length of a polyline."""
    W = as_potential(potential, mp)
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) < 2:
        return 0.0
    d = np.diff(nodes, axis=0)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    return float(np.sum(_root(W, mid, E_prime) * np.linalg.norm(d, axis=1)))


def cumulative_agmon(nodes, E_prime, potential):
    nodes = np.asarray(nodes, dtype=float)
    d = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    return np.concatenate([[0.0], np.cumsum(_root(potential, mid, E_prime) * d)])


# paths -------------------------------------------------------------------

def straight_path(y_start, y_end, n_nodes):
    t = np.linspace(0.0, 1.0, n_nodes)[:, None]
    return (1 - t) * np.asarray(y_start, float) + t * np.asarray(y_end, float)


def bowed_path(y_start, y_end, n_nodes, bow, direction=(0.0, 1.0, 0.0)):
    """Straight segment plus a sin(pi t) bulge of height ``bow``."""
    t = np.linspace(0.0, 1.0, n_nodes)
    base = straight_path(y_start, y_end, n_nodes)
    return base + bow * np.sin(np.pi * t)[:, None] * np.asarray(direction, float)


def default_seeds(potential, n_seeds, n_nodes, bow=0.3):
    """Axis path, then arcs in the y2-y3 plane at alternating +- bowing."""
    ym, yp = potential.wells
    seeds = [("axis", straight_path(ym, yp, n_nodes))]
    k = 1
    while len(seeds) < n_seeds:
        for sgn in (1, -1):
            if len(seeds) < n_seeds:
                seeds.append((f"arc{'+' if sgn > 0 else '-'}{k}",
                              bowed_path(ym, yp, n_nodes, sgn * k * bow)))
        k += 1
    return seeds


def _chord_params(nodes):
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1] if s[-1] > 0 else s


def reparametrize(nodes):
    """Redistribute nodes to equal Euclidean spacing along a cubic spline."""
    n = len(nodes)
    s = _chord_params(nodes)
    if np.any(np.diff(s) <= 0):
        return nodes.copy()
    out = CubicSpline(s, nodes, axis=0)(np.linspace(0.0, 1.0, n))
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def resample_agmon(nodes, E_prime, potential, n_nodes=None, sweeps=50, rtol=1e-6):
    """Nodes on the spline through ``nodes`` with equal polyline Agmon lengths.

    The spline parameters of the new nodes are adjusted by fixed-point
    sweeps until every segment's midpoint Agmon length matches the mean.
    """
    n = len(nodes) if n_nodes is None else int(n_nodes)
    cs = CubicSpline(_chord_params(nodes), nodes, axis=0)
    t = np.linspace(0.0, 1.0, n)
    for _ in range(sweeps):
        Y = cs(t)
        c = cumulative_agmon(Y, E_prime, potential)
        seg = np.diff(c)
        if c[-1] <= 0 or np.any(seg <= 0):
            break
        if seg.max() / seg.min() - 1.0 <= rtol:
            break
        t = np.interp(np.linspace(0.0, c[-1], n), c, t)
    out = cs(t)
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _segment_terms(nodes, potential, E_prime):
    d = np.diff(nodes, axis=0)
    ln = np.linalg.norm(d, axis=1)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    Wm = potential.value(mid) - E_prime
    f = np.sqrt(np.clip(Wm, 0.0, None))
    gW = potential.gradient(mid)
    safe = np.where(f > 0, f, 1.0)
    gf = np.where(f[:, None] > 0, gW / (2.0 * safe[:, None]), 0.0)
    u = d / ln[:, None]
    return d, ln, mid, Wm, f, gW, gf, u, safe


def _gradient(nodes, potential, E_prime):
    """Gradient of the midpoint length with respect to every node."""
    d, ln, mid, Wm, f, gW, gf, u, _ = _segment_terms(nodes, potential, E_prime)
    half = 0.5 * gf * ln[:, None]
    tens = f[:, None] * u
    g = np.zeros_like(nodes)
    g[1:] += half + tens
    g[:-1] += half - tens
    return g, Wm


def _hessian_blocks(nodes, potential, E_prime):
    """Per-segment 3x3 blocks (aa, ab, bb) of the midpoint length Hessian.

    Segment k joins a = Y_k and b = Y_k+1 with m = (a + b)/2 and d = b - a;
    F = f(m) |d| gives F_mm = l Hess f, F_md = grad f u^T, F_dd = f (I - u u^T)/l.
    """
    d, ln, mid, Wm, f, gW, gf, u, safe = _segment_terms(nodes, potential, E_prime)
    HW = potential.hessian(mid)
    Hf = HW / (2.0 * safe[:, None, None]) - np.einsum("ni,nj->nij", gW, gW) / (
        4.0 * safe[:, None, None] ** 3)
    Hf[f <= 0] = 0.0
    eye = np.eye(3)
    P = (eye - np.einsum("ni,nj->nij", u, u)) / ln[:, None, None]
    Fmm = ln[:, None, None] * Hf
    Fmd = np.einsum("ni,nj->nij", gf, u)
    Fdd = f[:, None, None] * P
    sym = Fmd + np.transpose(Fmd, (0, 2, 1))
    aa = 0.25 * Fmm - 0.5 * sym + Fdd
    bb = 0.25 * Fmm + 0.5 * sym + Fdd
    ab = 0.25 * Fmm + 0.5 * (Fmd - np.transpose(Fmd, (0, 2, 1))) - Fdd
    return aa, ab, bb


def _newton_step(nodes, g, tau, potential, E_prime, damping):
    """Levenberg-damped Newton step for the interior nodes.

    Tangential directions carry no length information, so a tangential
    penalty removes the null space; the step is then projected normal.
    """
    aa, ab, bb = _hessian_blocks(nodes, potential, E_prime)
    n = len(nodes)
    m = n - 2
    diag = np.zeros((n, 3, 3))
    diag[:-1] += aa
    diag[1:] += bb
    diag = diag[1:-1]
    scale = np.maximum(np.abs(np.trace(diag, axis1=1, axis2=2)) / 3.0, 1e-300)
    diag = diag + (scale[:, None, None] * (np.einsum("ni,nj->nij", tau[1:-1], tau[1:-1])
                                            + damping * np.eye(3)))
    off = ab[1:-1]  # couples interior node j (local a) to j+1 (local b)
    rows, cols, vals = [], [], []
    idx = np.arange(3)
    for j in range(m):
        r = 3 * j + idx[:, None]
        c = 3 * j + idx[None, :]
        rows.append(np.broadcast_to(r, (3, 3)).ravel())
        cols.append(np.broadcast_to(c, (3, 3)).ravel())
        vals.append(diag[j].ravel())
        if j + 1 < m:
            rows.append(np.broadcast_to(r, (3, 3)).ravel())
            cols.append(np.broadcast_to(c + 3, (3, 3)).ravel())
            vals.append(off[j].ravel())
            rows.append(np.broadcast_to(r + 3, (3, 3)).ravel())
            cols.append(np.broadcast_to(c, (3, 3)).ravel())
            vals.append(off[j].T.ravel())
    from scipy.sparse import csc_matrix
    from scipy.sparse.linalg import spsolve
    H = csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(3 * m, 3 * m))
    rhs = g[1:-1].ravel()
    step = np.zeros_like(nodes)
    step[1:-1] = -spsolve(H, rhs).reshape(m, 3)
    step -= np.sum(step * tau, axis=1)[:, None] * tau
    step[0] = step[-1] = 0.0
    return step


def _tangents(nodes):
    t = np.zeros_like(nodes)
    t[1:-1] = nodes[2:] - nodes[:-2]
    nrm = np.linalg.norm(t, axis=1)
    nrm[nrm == 0] = 1.0
    return t / nrm[:, None]


def _phase_profile(nodes, E_prime, potential, fine=8):
    """Richardson-refined cumulative Agmon length at the nodes.

    The spline through the nodes is resampled uniformly in chord parameter
    with M = fine*(N-1) and 2M segments; (4 c_2M - c_M)/3 is interpolated
    back to the node parameters.
    """
    s = _chord_params(nodes)
    cs = CubicSpline(s, nodes, axis=0)
    m = fine * (len(nodes) - 1)
    t1 = np.linspace(0.0, 1.0, m + 1)
    c1 = cumulative_agmon(cs(t1), E_prime, potential)
    c2 = cumulative_agmon(cs(np.linspace(0.0, 1.0, 2 * m + 1)), E_prime, potential)[::2]
    c = (4.0 * c2 - c1) / 3.0
    out = CubicSpline(t1, c)(s)
    out[0], out[-1] = 0.0, c[-1]
    return out


def refined_action(nodes, E_prime, potential):
    """Richardson-refined action; equals the end value of the phase profile."""
    return float(_phase_profile(nodes, E_prime, potential)[-1])


def minimize_instanton(mp, potential, E_prime=0.0, init=None, opts: InstantonOptions | None = None,
                       seed="custom"):
    """Relax a path between the wells to a minimal Agmon geodesic.

    Parameters
    ----------
    mp : ModelParams or None
        Needed only when ``potential`` is radial.
    potential : ScalarPotential or RadialPotential
    init : array (N, 3), optional
        Initial polyline from y_0^- to y_0^+; the straight segment by default.

    Raises
    ------
    DegenerateMetric
        If an interior node reaches W - E' < -degenerate_tol.
    NonConvergence
        After ``max_iter`` iterations; ``partial`` holds the current path.
    """
    opts = opts or InstantonOptions()
    W = as_potential(potential, mp)
    ym, yp = W.wells
    if init is None:
        init = straight_path(ym, yp, opts.n_nodes)
    Y = np.array(init, dtype=float)
    if np.linalg.norm(Y[0] - ym) > 1e-10 or np.linalg.norm(Y[-1] - yp) > 1e-10:
        raise ValueError("path endpoints must be the wells y0^- and y0^+")
    Y = reparametrize(Y)
    converged = False
    gnorm = np.inf
    it = 0
    damping = 1e-3
    L = agmon_length(Y, E_prime, W)
    for it in range(1, opts.max_iter + 1):
        g, Wm = _gradient(Y, W, E_prime)
        Wn = W.value(Y[1:-1]) - E_prime
        worst = min(Wn.min(), Wm.min()) if len(Y) > 2 else Wm.min()
        if worst < -opts.degenerate_tol:
            raise DegenerateMetric(
                f"path enters the region W < E' (min W - E' = {worst:.3e}) at iteration {it}")
        tau = _tangents(Y)
        gp = g - np.sum(g * tau, axis=1)[:, None] * tau
        gp[0] = gp[-1] = 0.0
        gnorm = float(np.max(np.linalg.norm(gp[1:-1], axis=1))) if len(Y) > 2 else 0.0
        ln = np.linalg.norm(np.diff(Y, axis=0), axis=1)
        cap = 0.5 * np.minimum(np.concatenate([[np.inf], ln]), np.concatenate([ln, [np.inf]]))
        for _ in range(30):
            step = _newton_step(Y, g, tau, W, E_prime, damping)
            sn = np.linalg.norm(step, axis=1)
            scale = np.min(np.where(sn > cap, cap / np.where(sn > 0, sn, 1.0), 1.0))
            trial = reparametrize(Y + opts.step * scale * step)
            Lt = agmon_length(trial, E_prime, W)
            if Lt <= L + 1e-14 * max(1.0, abs(L)):
                damping = max(damping / 4.0, 1e-10)
                break
            damping *= 8.0
        else:
            break
        disp = float(np.max(np.linalg.norm(trial - Y, axis=1)))
        Y, L = trial, Lt
        if disp <= opts.tol and it >= opts.min_iter:
            converged = True
            break
    if opts.spacing == "agmon":
        Y = resample_agmon(Y, E_prime, W)
    elif opts.spacing != "euclidean":
        raise ValueError(f"unknown spacing {opts.spacing!r}")
    raw = agmon_length(Y, E_prime, W)
    if opts.richardson and len(Y) >= 4:
        act = refined_action(Y, E_prime, W)
    else:
        act = raw
    path = InstantonPath(Y, _chord_params(Y), float(E_prime), float(act), float(raw),
                         converged, gnorm, it, seed)
    if not converged:
        raise NonConvergence(f"string method did not converge in {opts.max_iter} iterations",
                             partial=path)
    return path


@dataclass
class InstantonSet:
    paths: list
    multiplicity: int

    @property
    def best(self):
        return self.paths[0]

    @property
    def action(self):
        return self.paths[0].action


def find_instantons(mp, potential, E_prime=0.0, n_seeds=3, opts=None, bow=0.3,
                    action_tol=1e-6, workers=1):
    """Relax several seeds and report the distinct minimal geodesics.

    Paths whose actions lie within ``action_tol`` of the smallest one and
    whose node sets differ by more than 1e-4 count as distinct minima.
    """
    opts = opts or InstantonOptions()
    W = as_potential(potential, mp)
    seeds = default_seeds(W, n_seeds, opts.n_nodes, bow)
    jobs = [(W, E_prime, init, opts, name) for name, init in seeds]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            paths = list(ex.map(_relax_job, jobs))
    else:
        paths = [_relax_job(j) for j in jobs]
    paths.sort(key=lambda p: p.action)
    best = paths[0].action
    distinct = []
    for p in paths:
        if p.action - best > action_tol:
            continue
        if all(np.max(np.linalg.norm(p.nodes - q.nodes, axis=1)) > 1e-4 for q in distinct):
            distinct.append(p)
    rest = [p for p in paths if not any(p is q for q in distinct)]
    return InstantonSet(distinct + rest, len(distinct))


def _relax_job(job):
    W, E_prime, init, opts, name = job
    return minimize_instanton(None, W, E_prime, init, opts, seed=name)


# WKB data ------------------------------------------------------------------

def wkb_phase_along(path, potential, mp=None, nodes=None):
    """Agmon phase phi at the path nodes, measured from y_0^-.

    Uses the same refined quadrature as the reported action, so phi(end)
    equals ``path.action``. ``nodes`` overrides the geometry (frozen
    companion paths).
    """
    W = as_potential(potential, mp)
    Y = path.nodes if nodes is None else np.asarray(nodes, dtype=float)
    if len(Y) < 4:
        return cumulative_agmon(Y, path.energy, W)
    return _phase_profile(Y, path.energy, W)


def rotate_about_axis(nodes, angle):
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.asarray(nodes) @ R.T


def dphi_dtheta(path, potential, mp=None, dtheta=1e-3):
    """Angular derivative of phi at the nodes by rotated companion paths."""
    W = as_potential(potential, mp)
    plus = wkb_phase_along(path, W, nodes=rotate_about_axis(path.nodes, dtheta))
    minus = wkb_phase_along(path, W, nodes=rotate_about_axis(path.nodes, -dtheta))
    return (plus - minus) / (2.0 * dtheta)


def _cutoff_radius(potential, opts):
    ym, yp = potential.wells
    return opts.cutoff_fraction * float(np.linalg.norm(yp - ym))


def _regularized_root(nodes, potential, E_prime, rc):
    """sqrt(W - E') at segment midpoints, with the quadratic well model inside rc."""
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    val = potential.value(mid) - E_prime
    for y0 in potential.wells:
        H = potential.hessian(y0)
        dz = mid - y0
        near = np.linalg.norm(dz, axis=1) < rc
        if np.any(near):
            q = 0.5 * np.einsum("ni,ij,nj->n", dz[near], H, dz[near])
            val[near] = q
    if np.any(val <= 0):
        raise EndpointSingularity(
            f"W - E' <= 0 at a segment midpoint (cutoff radius {rc:.3g})")
    return np.sqrt(val)


def _transport(nodes, potential, E_prime, rate_nodes, rc):
    """Integral of rate dt with dt = ds / (2 sqrt(W - E')), rate given at nodes."""
    ds = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    root = _regularized_root(nodes, potential, E_prime, rc)
    rate = 0.5 * (rate_nodes[1:] + rate_nodes[:-1])
    return np.concatenate([[0.0], np.cumsum(rate * ds / (2.0 * root))])


def magnetic_corrections(path, phi, omega_prime, potential, mp=None, opts=None):
    """First and second order magnetic phase corrections psi0, psi1.

    psi0 solves the transport d psi0/dt = 2 dphi/dtheta from psi0 = 0 at y_0^-,
    with dt = ds / (2 sqrt(W - E')) and dphi/dtheta from rotated companion
    paths. psi1 integrates -|grad psi0 - A|**2 dt. The transport fixes only
    the component of grad psi0 along the path (it equals A.T); the transverse
    gradient would need neighbouring geodesics and is taken as zero, so the
    psi1 rate is -|A - (A.T) T|**2. With omega' = 0 both vanish.

    Returns
    -------
    psi0, psi1, dphi_dtheta : arrays at the nodes
    """
    opts = opts or InstantonOptions()
    W = as_potential(potential, mp)
    n = len(path.nodes)
    if omega_prime == 0.0:
        return np.zeros(n), np.zeros(n), np.zeros(n)
    rc = _cutoff_radius(W, opts)
    Y = path.nodes
    dphi = dphi_dtheta(path, W, dtheta=opts.dtheta)
    psi0 = _transport(Y, W, path.energy, 2.0 * dphi, rc)
    s = path.arclength()
    tau = np.gradient(Y, s, axis=0)
    tau /= np.linalg.norm(tau, axis=1)[:, None]
    A = symmetric_gauge(Y)
    A_perp = A - np.sum(A * tau, axis=1)[:, None] * tau
    psi1 = _transport(Y, W, path.energy, -np.sum(A_perp**2, axis=1), rc)
    return psi0, psi1, dphi


def leading_amplitude(path, potential, mp=None, opts=None):
    """exp(-1/2 int (W - E')^(-1/2) ds) along the path (heuristic in 3D).

    The integral starts where the path leaves the cutoff ball around y_0^-
    and stops where it enters the ball around y_0^+; the amplitude is held
    constant inside the balls.
    """
    opts = opts or InstantonOptions()
    W = as_potential(potential, mp)
    Y = path.nodes
    rc = _cutoff_radius(W, opts)
    ym, yp = W.wells
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(Y, axis=0), axis=1))])
    inside_start = np.linalg.norm(Y - ym, axis=1) < rc
    inside_end = np.linalg.norm(Y - yp, axis=1) < rc
    active = ~(inside_start | inside_end)
    if not np.any(active):
        return np.ones(len(Y))
    first = int(np.argmax(active))
    last = len(Y) - 1 - int(np.argmax(active[::-1]))
    # entry point on the cutoff sphere, interpolated on the crossing segment
    if first > 0:
        a, b = Y[first - 1], Y[first]
        da, db = np.linalg.norm(a - ym), np.linalg.norm(b - ym)
        frac = (rc - da) / (db - da) if db != da else 1.0
        s_in = s[first - 1] + frac * (s[first] - s[first - 1])
        y_in = a + frac * (b - a)
    else:
        s_in, y_in = s[0], Y[0]
    pts = np.vstack([y_in, Y[first:last + 1]])
    ss = np.concatenate([[s_in], s[first:last + 1]])
    mid = 0.5 * (pts[1:] + pts[:-1])
    val = W.value(mid) - path.energy
    if np.any(val <= 0):
        raise EndpointSingularity(f"W - E' <= 0 outside the cutoff balls (rc={rc:.3g})")
    integral = np.concatenate([[0.0], np.cumsum(np.diff(ss) / np.sqrt(val))])
    amp = np.ones(len(Y))
    amp[first:last + 1] = np.exp(-0.5 * integral[1:])
    amp[last + 1:] = amp[last]
    return amp


def compute_wkb(path, potential, omega_prime, mp=None, opts=None):
    """Phase, magnetic corrections and amplitude bundled as WKBData."""
    opts = opts or InstantonOptions()
    W = as_potential(potential, mp)
    phi = wkb_phase_along(path, W)
    psi0, psi1, dphi = magnetic_corrections(path, phi, omega_prime, W, opts=opts)
    amp = leading_amplitude(path, W, opts=opts)
    return WKBData(phi, psi0, psi1, amp, float(omega_prime), True, _cutoff_radius(W, opts), dphi)


def profile_rows(path, potential, wkb: WKBData, mp=None):
    """Rows (s, y1, y2, y3, W, phi, psi0, psi1, amplitude) for output."""
    W = as_potential(potential, mp)
    s = path.arclength()
    w = W.value(path.nodes)
    return [
        (float(s[i]), *map(float, path.nodes[i]), float(w[i]), float(wkb.phi[i]),
         float(wkb.psi0[i]), float(wkb.psi1[i]), float(wkb.amplitude[i]))
        for i in range(len(s))
    ]
