"""Low-lying eigenpairs by y3-reflection sector.

The eigensolver is ARPACK's implicitly restarted Lanczos (scipy ``eigsh``),
run on the sector-projected operator with a fixed start vector, so reruns
are deterministic. Shift-invert uses conjugate-gradient inner solves.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigsh

from ..errors import NoConvergence, SectorMismatch
from .operator import DiscreteOperator

log = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


class SectorMap:
    """Orthonormal basis of the even or odd subspace under y_last -> -y_last.

    Sector vectors are stored on the half grid y_last >= 0 (the zero plane is
    dropped in the odd sector).
    """

    def __init__(self, shape, parity):
        if parity not in ("even", "odd"):
            raise ValueError(parity)
        self.shape = tuple(shape)
        self.parity = parity
        n = self.shape[-1]
        self.n = n
        self.has_zero = n % 2 == 1
        c = n // 2
        if self.has_zero:
            start = c if parity == "even" else c + 1
        else:
            start = c
        self.upper = np.arange(start, n)
        self.lower = n - 1 - self.upper
        self.sign = 1.0 if parity == "even" else -1.0
        self.half_shape = self.shape[:-1] + (self.upper.size,)
        w = np.full(self.upper.size, 1.0 / SQRT2)
        if self.has_zero and parity == "even":
            w[0] = 1.0
        self.weight = w

    @property
    def size(self):
        return int(np.prod(self.half_shape))

    def expand(self, w):
        w = np.asarray(w).reshape(self.half_shape)
        u = np.zeros(self.shape, dtype=w.dtype)
        u[..., self.upper] = w * self.weight
        lo = self.lower
        if self.has_zero and self.parity == "even":
            u[..., lo[1:]] = self.sign * w[..., 1:] * self.weight[1:]
        else:
            u[..., lo] = self.sign * w * self.weight
        return u

    def restrict(self, u):
        u = np.asarray(u).reshape(self.shape)
        w = u[..., self.upper] * self.weight
        if self.has_zero and self.parity == "even":
            w = w.copy()
            w[..., 1:] += self.sign * u[..., self.lower[1:]] * self.weight[1:]
        else:
            w = w + self.sign * u[..., self.lower] * self.weight
        return w.reshape(-1)


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    sectors: list
    residuals: np.ndarray
    eigenvectors: list = field(default_factory=list)
    converged: bool = True
    matvecs: int = 0

    def __post_init__(self):
        order = np.argsort(self.eigenvalues, kind="stable")
        self.eigenvalues = np.asarray(self.eigenvalues)[order]
        self.sectors = [self.sectors[i] for i in order]
        self.residuals = np.asarray(self.residuals)[order]
        if self.eigenvectors:
            self.eigenvectors = [self.eigenvectors[i] for i in order]

    def lowest(self, sector):
        for lam, s in zip(self.eigenvalues, self.sectors):
            if s == sector:
                return float(lam)
        raise KeyError(sector)


class _Counter:
    def __init__(self, f):
        self.f = f
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self.f(x)


def _sector_operator(op: DiscreteOperator, sector):
    if sector == "none":
        return op.matvec, op.n_unknowns, op.expand
    smap = SectorMap(op.grid.shape, sector)

    def mv(w):
        return smap.restrict(op.apply(smap.expand(w)))

    return mv, smap.size, smap.expand


def _dense(op, mv, n, k):
    import scipy.linalg as sla
    M = np.empty((n, n), dtype=op.dtype)
    e = np.zeros(n, dtype=op.dtype)
    for j in range(n):
        e[j] = 1.0
        M[:, j] = mv(e)
        e[j] = 0.0
    M = 0.5 * (M + M.conj().T)
    vals, vecs = sla.eigh(M, subset_by_index=[0, k - 1])
    return vals, vecs, n


def _solve(op, mv, n, k, tol, maxiter, shift_invert, ncv, dense_threshold=0):
    if n <= dense_threshold:
        return _dense(op, mv, n, k)
    counter = _Counter(mv)
    A = LinearOperator((n, n), matvec=counter, dtype=op.dtype)
    v0 = np.ones(n, dtype=op.dtype) / np.sqrt(n)
    kw = dict(k=k, tol=tol, v0=v0, maxiter=maxiter)
    if ncv is not None:
        kw["ncv"] = ncv
    if shift_invert is None:
        vals, vecs = eigsh(A, which="SA", **kw)
        return vals, vecs, counter.count
    sigma = float(shift_invert)

    def inv(b):
        x, info = cg(LinearOperator((n, n), matvec=lambda v: counter(v) - sigma * v,
                                    dtype=op.dtype), b, rtol=1e-13, maxiter=20 * n)
        return x

    Op = LinearOperator((n, n), matvec=inv, dtype=op.dtype)
    vals, vecs = eigsh(A, sigma=sigma, which="LM", OPinv=Op, **kw)
    return vals, vecs, counter.count


def lowest_eigenpairs(op: DiscreteOperator, k=1, sector="none", tol=1e-12, maxiter=None,
                      shift_invert=None, ncv=None, keep_vectors=True, dense_threshold=1200):
    """Lowest ``k`` eigenpairs, per sector.

    Parameters
    ----------
    sector : {"none", "even", "odd", "both"}
        ``both`` returns k values from each sector, merged and sorted.
    dense_threshold : int
        Sector problems with at most this many unknowns are diagonalized
        densely (LAPACK), which is exact to rounding and avoids Lanczos on
        tiny 1D problems.
    shift_invert : float or "auto", optional
        A shift below the wanted eigenvalues switches to shift-invert mode.
        ``auto`` first runs plain Lanczos and repeats with a shift when two
        returned eigenvalues are closer than 1e-3 relative.

    Raises
    ------
    SectorMismatch
        If a sector is requested but the operator does not commute with the
        reflection.
    NoConvergence
        When ARPACK stops early; ``partial`` holds what converged.
    """
    sectors = ["even", "odd"] if sector == "both" else [sector]
    if sector != "none":
        if op.mask is not None:
            raise SectorMismatch("sector decomposition needs the full box")
        op.check_reflection_symmetry()
    vals_all, labels, res, vecs_all = [], [], [], []
    total = 0
    converged = True
    for s in sectors:
        mv, n, expand = _sector_operator(op, s)
        kk = min(k, n - 1)
        si = None if shift_invert == "auto" else shift_invert
        try:
            vals, vecs, cnt = _solve(op, mv, n, kk, tol, maxiter, si, ncv, dense_threshold)
        except ArpackNoConvergence as exc:
            vals, vecs, cnt = exc.eigenvalues, exc.eigenvectors, 0
            converged = False
        if shift_invert == "auto" and len(vals) > 1 and converged:
            gaps = np.diff(np.sort(vals)) / max(np.max(np.abs(vals)), 1e-300)
            if np.min(gaps) < 1e-3:
                shift = float(np.min(vals) - 0.1 * (np.max(vals) - np.min(vals)) - 1e-8)
                vals, vecs, c2 = _solve(op, mv, n, kk, tol, maxiter, shift, ncv)
                cnt += c2
        total += cnt
        for j in range(len(vals)):
            v = vecs[:, j]
            r = np.linalg.norm(mv(v) - vals[j] * v)
            u = expand(v)
            if not op.magnetic:
                u = np.real(u)
            vals_all.append(float(vals[j]))
            labels.append(s)
            res.append(float(r))
            if keep_vectors:
                vecs_all.append(_fix_phase(u))
    out = SpectralResult(np.array(vals_all), labels, np.array(res), vecs_all, converged, total)
    if not converged:
        raise NoConvergence("eigensolver budget exhausted", partial=out)
    return out


def _fix_phase(u):
    """Normalize and rotate so the largest-modulus entry is real positive."""
    u = np.asarray(u)
    nrm = np.linalg.norm(u)
    if nrm > 0:
        u = u / nrm
    i = np.argmax(np.abs(u))
    if np.iscomplexobj(u):
        ph = u.flat[i] / abs(u.flat[i])
        return u / ph
    return u if u.flat[i] >= 0 else -u


def dirichlet_ground_state(op: DiscreteOperator, side="plus", halfspace_offset=0.0,
                           tol=1e-13, maxiter=None):
    """Ground state of the operator restricted to a half-space.

    Returns ``(eigenvalue, u)`` with ``u`` a normalized full-grid array
    (zero outside the half-space). The minus-side state is built as the exact
    reflection of the plus-side one when the operator is reflection symmetric,
    which is the unitary equivalence between the two Dirichlet problems.
    """
    b = "dirichlet-halfspace-plus" if side == "plus" else "dirichlet-halfspace-minus"
    sub = op.restricted(b, halfspace_offset)
    res = lowest_eigenpairs(sub, 1, "none", tol=tol, maxiter=maxiter)
    return float(res.eigenvalues[0]), res.eigenvectors[0]


def dirichlet_pair(op: DiscreteOperator, halfspace_offset=0.0, tol=1e-13, maxiter=None):
    """(lambda, u_plus, u_minus) with u_minus the reflection of u_plus."""
    lam, up = dirichlet_ground_state(op, "plus", halfspace_offset, tol, maxiter)
    return lam, up, op.reflect(up)


def interior_eigenpairs(op: DiscreteOperator, sigma, k=6, tol=1e-12, keep_vectors=True):
    """The ``k`` eigenpairs closest to ``sigma``.

    Shift-invert with a sparse LU factorization of H - sigma, which stays
    valid for shifts inside the spectrum where CG inner solves do not.
    """
    from scipy.sparse import identity
    from scipy.sparse.linalg import splu

    H = op.to_sparse().tocsc()
    n = H.shape[0]
    lu = splu((H - sigma * identity(n, dtype=H.dtype, format="csc")).tocsc())
    Op = LinearOperator((n, n), matvec=lu.solve, dtype=H.dtype)
    v0 = np.ones(n, dtype=H.dtype) / np.sqrt(n)
    vals, vecs = eigsh(H, k=k, sigma=sigma, which="LM", OPinv=Op, tol=tol, v0=v0)
    res = [float(np.linalg.norm(H @ vecs[:, j] - vals[j] * vecs[:, j])) for j in range(len(vals))]
    out_vecs = []
    if keep_vectors:
        for j in range(len(vals)):
            u = op.expand(vecs[:, j])
            out_vecs.append(_fix_phase(u if op.magnetic else np.real(u)))
    return SpectralResult(np.asarray(vals, float), ["none"] * len(vals), np.array(res), out_vecs)


def inverse_iteration(op: DiscreteOperator, sigma, u0, tol=1e-12, maxiter=200, window=None):
    """Shifted inverse iteration from ``u0``; returns (rayleigh quotient, u, residual).

    Useful for massively degenerate clusters (Landau levels), where any
    vector of the cluster nearest to ``sigma`` that ``u0`` overlaps is an
    acceptable answer but Krylov restarts stall.

    ``window`` (a grid function, 1 in the region of interest) multiplies the
    iterate after every solve. It suppresses states living outside the
    window, such as boundary states near the shift; the returned residual is
    that of the unwindowed operator, so the result is still certified.
    """
    from scipy.sparse import identity
    from scipy.sparse.linalg import splu

    H = op.to_sparse().tocsc()
    n = H.shape[0]
    lu = splu((H - sigma * identity(n, dtype=H.dtype, format="csc")).tocsc())
    x = op.compress(np.asarray(u0, dtype=H.dtype).reshape(op.grid.shape))
    x = x / np.linalg.norm(x)
    chi = None if window is None else op.compress(np.asarray(window, dtype=float))
    lam, r = float("nan"), float("inf")
    for _ in range(maxiter):
        x = lu.solve(x)
        if chi is not None:
            x = chi * x
        x = x / np.linalg.norm(x)
        Hx = H @ x
        lam = float(np.real(np.vdot(x, Hx)))
        r = float(np.linalg.norm(Hx - lam * x))
        if r <= tol * max(abs(lam), 1.0):
            break
    else:
        raise NoConvergence(f"inverse iteration residual {r:.2e} after {maxiter} steps",
                            partial=(lam, op.expand(x), r))
    return lam, _fix_phase(op.expand(x)), r
