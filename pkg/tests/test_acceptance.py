"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a pass/fail line through the ``acceptance`` fixture; the
lines are repeated in the terminal summary.
"""
import time

import numpy as np
import pytest

from magtunnel.critical import (DEFAULT_SCAN, find_critical_points, fundamental_matrix,
                                harmonic_level, parameter_scan, rescaled_floquet)
from magtunnel.errors import DegenerateMetric
from magtunnel.gap import default_offset, gap_vs_direct
from magtunnel.instanton import bowed_path, find_instantons, minimize_instanton, wkb_phase_along
from magtunnel.model import ModelParams, ModelPotential, QuarticShell, energy_reference
from magtunnel.monodromy import DrivenHamiltonianSpec, monodromy_vs_stationary, wrap
from magtunnel.phasespace import concentration_report, fbi_transform
from magtunnel.potentials import SeparableDoubleWell, TwistedValleyWell
from magtunnel.spectral.agmon import (agmon_identity_residual, agmon_terms, decay_certificate,
                                      weight_from_profile)
from magtunnel.spectral.benchmarks import da_equivalence, landau_levels
from magtunnel.spectral.eigen import dirichlet_ground_state, lowest_eigenpairs
from magtunnel.spectral.grid import GridSpec
from magtunnel.spectral.operator import (assemble_operator, assemble_physical_operator,
                                         gauge_transform_phase)
from magtunnel.spectral.sweep import band_analysis, splitting_sweep

TWISTED_BOX = ((-1.6, 1.6), (-1.6, 1.6), (-2.2, 2.2))


def first_elliptic():
    """First tuple of the default scan that passes the ellipticity check."""
    e = parameter_scan(**DEFAULT_SCAN)[0]
    return e.params, e.potential


def test_criterion_01_critical_points(acceptance):
    mp, V = ModelParams(1.0, 0.1, 0.1), QuarticShell(1.0, 1.0)
    t0 = time.perf_counter()
    cps = find_critical_points(mp, V)
    dt = time.perf_counter() - t0
    pos = max(max(np.abs(c.point.x - [0.0, 0.2, z * 0.9797959]))
              for c, z in zip(cps, (-1, 1)))
    grad = max(c.gradient_norm for c in cps)
    rad = max(abs(np.linalg.norm(c.point.x) - 1.0) for c in cps)
    ok = len(cps) == 2 and pos <= 5e-8 and grad <= 1e-10 and rad <= 1e-12 and dt < 1.0
    acceptance(1, ok, f"|x-x0|={pos:.1e} |grad|={grad:.1e} ||x|-r0|={rad:.1e} t={dt:.3f}s")
    assert ok


def _delta_ratios(levels, refs, hs):
    return [abs(lam - ref) / h**2 for lam, ref, h in zip(levels, refs, hs)]


def test_criterion_02_harmonic_asymptotics_model(acceptance):
    # P0 is not elliptic; the first elliptic scan tuple stands in for it
    mp, V = first_elliptic()
    cp = find_critical_points(mp, V)[1]
    fs = fundamental_matrix(cp, mp, V)
    E = energy_reference(mp, V)
    hs = (0.2, 0.1, 0.05)
    levels = []
    for h in hs:
        g = GridSpec(tuple((c - 0.6, c + 0.6) for c in cp.point.x), (48,) * 3)
        op = assemble_physical_operator(g, mp.with_h(h), V)
        levels.append(lowest_eigenpairs(op, 1, keep_vectors=False, tol=1e-10).eigenvalues[0])
    r_lit = _delta_ratios(levels, [E + h * fs.trace_plus for h in hs], hs)
    r_weyl = _delta_ratios(levels, [harmonic_level(fs, E, h, "weyl") for h in hs], hs)
    spread = lambda r: max(r) / min(r)
    ok = spread(r_lit) < 2 or spread(r_weyl) < 2
    acceptance(2, ok, "model, first elliptic tuple (2, 0.45, 0.1): delta/h^2 = "
               + ", ".join(f"{x:.3g}" for x in r_lit)
               + " (E+hTr+), " + ", ".join(f"{x:.3g}" for x in r_weyl) + " (E+hTr+/2)")
    assert ok


def test_criterion_02_harmonic_asymptotics_separable(acceptance):
    # elliptic synthetic well: second-order stencil error removed by Richardson
    pot, wp = SeparableDoubleWell(1.0), 0.1
    fs = rescaled_floquet(pot, wp)
    assert fs.elliptic
    box = ((-1.5, 1.5), (-1.5, 1.5), (-0.5, 2.5))
    hs = (0.2, 0.1, 0.05)
    levels = []
    for h in hs:
        lam = []
        for n in (40, 81):
            op = assemble_operator(GridSpec(box, (n,) * 3), None, pot, "symmetric", h=h,
                                   omega_prime=wp)
            lam.append(lowest_eigenpairs(op, 1, keep_vectors=False, tol=1e-10).eigenvalues[0])
        levels.append((4 * lam[1] - lam[0]) / 3)
    r = _delta_ratios(levels, [harmonic_level(fs, 0.0, h, "weyl") for h in hs], hs)
    ok = max(r) / min(r) < 2
    acceptance("2s", ok, "separable well, omega'=0.1: delta/h^2 = "
               + ", ".join(f"{x:.4f}" for x in r))
    assert ok


def test_criterion_03_da_equivalence(acceptance):
    t0 = time.perf_counter()
    res = da_equivalence((64, 128, 256))
    dt = time.perf_counter() - t0
    rel = res.relative_difference(1)
    om, of = res.observed_orders("magnetic"), res.observed_orders("partner")
    second = bool(np.all(np.abs(om - 2) < 0.3) and np.all(np.abs(of - 2) < 0.3))
    ok = rel <= 1e-3 and second and dt < 60
    acceptance(3, ok, f"128^2 max rel diff {rel:.2e}; orders {om.min():.2f}-{om.max():.2f} / "
               f"{of.min():.2f}-{of.max():.2f}; t={dt:.0f}s")
    assert ok


def test_criterion_04_landau(acceptance):
    res = landau_levels(h=0.1, omega_prime=0.5, half_width=12.0)
    e0 = abs(res.levels[0] - 0.1) / 0.1
    gap = abs(res.gap - 4 * 0.5 * 0.1) / (4 * 0.5 * 0.1)
    ok = e0 <= 0.01 and gap <= 0.02
    acceptance(4, ok, f"E0={res.levels[0]:.6f} ({e0:.2%}), gap={res.gap:.6f} ({gap:.2%})")
    assert ok


def test_criterion_05_agmon_action(acceptance):
    pot = SeparableDoubleWell(1.0)
    p = minimize_instanton(None, pot, init=bowed_path(*pot.wells, 101, 0.4))
    g = GridSpec(((-2.5, 2.5),), (1001,))
    rep = splitting_sweep(None, pot, g, [0.1, 0.08, 0.06, 0.05], omega_prime=0.0, gauge="none")
    act = abs(p.action - 4 / 3)
    s_rel = abs(rep.s_star / (4 / 3) - 1)
    ok = act <= 1e-6 and s_rel <= 0.05
    acceptance(5, ok, f"|S-4/3|={act:.1e}; s*={rep.s_star:.5f} ({s_rel:.2%} from 4/3)")
    assert ok


def test_criterion_06_band_model(acceptance):
    # the first elliptic tuple; P0 itself fails the ellipticity check
    mp, V = first_elliptic()
    W = ModelPotential(mp, V)
    try:
        find_instantons(None, W, float(W.value(W.wells[1])))
        detail, ok = "instanton found", True
    except DegenerateMetric as exc:
        detail, ok = f"no instanton on the model: {exc}", False
    acceptance(6, ok, detail)
    assert ok


@pytest.fixture(scope="module")
def twisted_sweeps():
    g = GridSpec(TWISTED_BOX, (40, 40, 55))
    return [splitting_sweep(None, TwistedValleyWell(), g, [0.25, 0.2, 0.16, 0.13],
                            omega_prime=wp) for wp in (0.0, 0.02, 0.04)]


def _band_line(band):
    return (f"S={band.S:.5f} C={band.C:.3g} eps={band.epsilon:.4f} "
            f"m={np.round(band.values, 5).tolist()} in_band={band.in_band.tolist()} "
            f"slope_within={band.slope_within.tolist()} monotone={band.monotone}")


def test_criterion_06_band_twisted(acceptance, twisted_instanton, twisted_sweeps):
    # eps from the criterion 5 convergence level (s* within 5% of the action)
    S = twisted_instanton.action
    band = band_analysis(twisted_sweeps, S, 0.05 * S)
    ok = band.passed
    acceptance("6s", ok, "twisted well, -h log dE at h=0.13: " + _band_line(band))
    assert ok


def test_criterion_06_band_twisted_fitted_exponent(acceptance, twisted_instanton, twisted_sweeps):
    # same band with the prefactor-free fitted exponent s* in place of -h log dE
    S = twisted_instanton.action
    band = band_analysis(twisted_sweeps, S, 0.05 * S, measure="fit")
    ok = band.passed
    acceptance("6f", ok, "twisted well, fitted s*: " + _band_line(band))
    assert ok


def test_criterion_07_gap_formula(acceptance):
    pot = TwistedValleyWell()
    g = GridSpec(TWISTED_BOX, (40, 40, 56))
    res = gap_vs_direct(None, pot, g, [0.2, 0.16, 0.13, 0.1], omega_prime=0.04)
    logs = [abs(np.log(r.ratio)) for r in res]
    mag = [r.magnetic_term for r in res]
    ok = all(m == 0.0 for m in mag) and logs[-1] <= np.log(2) and bool(
        np.all(np.diff(logs) <= 0))
    acceptance(7, ok, "magnetic term " + ("0" if all(m == 0.0 for m in mag) else str(mag))
               + "; |log ratio| = " + ", ".join(f"{x:.2e}" for x in logs))
    assert ok


def test_criterion_08_agmon_identity(acceptance, twisted_instanton):
    pot = TwistedValleyWell()
    p = twisted_instanton.best
    phi = wkb_phase_along(p, pot)
    g = GridSpec(TWISTED_BOX, (40, 40, 56))
    op = assemble_operator(g, None, pot, "symmetric", h=0.2, omega_prime=0.04)
    off = default_offset(pot)
    lam, u = dirichlet_ground_state(op, "plus", off)
    sub = op.restricted("dirichlet-halfspace-plus", off)
    r0 = agmon_identity_residual(sub, u, 0.0, 0.0)
    Phi = weight_from_profile(g, p.nodes[:, 2], phi, p.action, 0.5, "plus")
    t = agmon_terms(sub, u, Phi, 0.0, "continuum")
    # relative to the weighted energy lhs / ||e^(Phi/h) u||^2
    rel = t.residual / abs(t.lhs / t.norm)
    cert = decay_certificate(sub, u, Phi, 0.0, lam)
    ok = r0 <= 1e-10 and rel <= 5e-3
    acceptance(8, ok, f"Phi=0 residual {r0:.1e}; instanton weight residual {rel:.1e}; "
               f"decay certificate {bool(cert)}")
    assert ok


def test_criterion_09_monodromy(acceptance):
    spec = DrivenHamiltonianSpec(1.0, 0.1, QuarticShell())
    g = GridSpec.cube(2.5, 64, 2, periodic=True)
    t0 = time.perf_counter()
    full = monodromy_vs_stationary(spec, g, 0.1, K=5, n_steps=4096)
    dt = time.perf_counter() - t0
    half = monodromy_vs_stationary(spec, g, 0.1, K=5, n_steps=2048)
    shifted = monodromy_vs_stationary(spec, g, 0.1, K=5, n_steps=4096, s=spec.period / 3)
    s_dep = float(np.max(np.abs(wrap(shifted.eigenphases - full.eigenphases))))
    ratio = half.max_relative_error / full.max_relative_error
    ok = full.max_relative_error <= 0.05 and s_dep <= 1e-6 and 3.0 <= ratio <= 5.0 and dt < 300
    acceptance(9, ok, f"max spacing error {full.max_relative_error:.2e} rad; s-dependence "
               f"{s_dep:.1e}; step-halving ratio {ratio:.2f}; t={dt:.1f}s")
    assert ok


def test_criterion_10_fbi(acceptance):
    # isometry on a coherent state at full resolution
    g1 = GridSpec(((-3.0, 3.0),), (301,))
    y = g1.axis(0)
    u = np.exp(-((y - 0.7) ** 2) / 0.2 + 0.5j * y / 0.1)
    u /= np.sqrt(np.sum(np.abs(u) ** 2) * g1.cell_volume)
    iso = abs(fbi_transform(u, g1, 0.1).mass - 1.0)
    pot = SeparableDoubleWell(1.0)
    g = GridSpec(((-2.5, 2.5),), (801,))
    reps = []
    for h in (0.1, 0.05):
        op = assemble_operator(g, None, pot, "none", h=h)
        v = np.asarray(lowest_eigenpairs(op, 1, "even").eigenvectors[0]).reshape(g.shape)
        v /= np.sqrt(np.sum(np.abs(v) ** 2) * g.cell_volume)
        reps.append(concentration_report(fbi_transform(v, g, h, stride=2), pot.wells, 0.5))
    imb = max(r.imbalance for r in reps)
    drift = float(np.max(np.abs(reps[1].width_over_sqrt_h / reps[0].width_over_sqrt_h - 1)))
    ok = iso <= 1e-6 and imb <= 1e-3 and drift <= 0.10
    acceptance(10, ok, f"isometry defect {iso:.1e}; imbalance {imb:.1e}; "
               f"width/sqrt(h) drift {drift:.1%}")
    assert ok


def test_criterion_11_structural(acceptance, twisted, rng):
    checks = {}
    # Hermiticity
    g = GridSpec.cube(2.0, 10, 3)
    op = assemble_operator(g, None, twisted, "symmetric", h=0.2, omega_prime=0.3)
    u = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    v = rng.standard_normal(op.n_unknowns) + 1j * rng.standard_normal(op.n_unknowns)
    herm = abs(np.vdot(op.matvec(u), v) - np.vdot(u, op.matvec(v))) / (
        op.norm_estimate() * np.linalg.norm(u) * np.linalg.norm(v))
    checks["hermiticity"] = (herm, herm <= 1e-12)
    # gauge covariance: landau = e^{i chi/h} symmetric e^{-i chi/h}, chi = -omega' y1 y2
    wp, h = 0.4, 0.15
    g2 = GridSpec.cube(2.0, 16, 2)
    W2 = lambda y1, y2: 0.5 * (y1**2 + y2**2)
    sym = assemble_operator(g2, None, W2, "symmetric", h=h, omega_prime=wp)
    lan = assemble_operator(g2, None, W2, "landau", h=h, omega_prime=wp)
    ph = gauge_transform_phase(g2, lambda y1, y2: -wp * y1 * y2, h)
    w = rng.standard_normal(g2.shape) + 1j * rng.standard_normal(g2.shape)
    cov = np.max(np.abs(lan.apply(w) - ph * sym.apply(np.conj(ph) * w))) / (
        lan.norm_estimate() * np.max(np.abs(w)))
    checks["gauge covariance"] = (cov, cov <= 1e-10)
    # sector completeness
    op3 = assemble_operator(GridSpec(TWISTED_BOX, (14, 14, 21)), None, twisted, "symmetric",
                            h=0.3, omega_prime=0.04)
    full = lowest_eigenpairs(op3, 8, "none", keep_vectors=False).eigenvalues
    both = lowest_eigenpairs(op3, 8, "both", keep_vectors=False).eigenvalues
    comp = float(np.max(np.abs(full - both[:8])))
    checks["sector completeness"] = (comp, comp <= 1e-9)
    # second-order grid convergence
    gg = GridSpec(((-2.5, 2.5), (-2.5, 2.5)), (15, 15))
    vals = []
    for _ in range(3):
        o = assemble_operator(gg, None, lambda y1, y2: y1**2 + (y2**2 - 1) ** 2, "symmetric",
                              h=0.3, omega_prime=0.2)
        vals.append(lowest_eigenpairs(o, 3, keep_vectors=False).eigenvalues)
        gg = gg.refined()
    ratio = np.abs(vals[1] - vals[0]) / np.abs(vals[2] - vals[1])
    checks["second order"] = (float(np.min(ratio)), bool(np.all((ratio > 3.6) & (ratio < 4.4))))
    # deterministic reruns
    a = lowest_eigenpairs(op3, 2, "both", dense_threshold=0)
    b = lowest_eigenpairs(op3, 2, "both", dense_threshold=0)
    same = a.eigenvalues.tobytes() == b.eigenvalues.tobytes() and all(
        np.array_equal(x, y) for x, y in zip(a.eigenvectors, b.eigenvectors))
    checks["bitwise rerun"] = (0.0 if same else 1.0, same)
    ok = all(c[1] for c in checks.values())
    acceptance(11, ok, "; ".join(f"{k} {v[0]:.1e}" for k, v in checks.items()))
    assert ok
