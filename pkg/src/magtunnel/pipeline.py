"""Stage orchestration, run directories, caching and plot-ready output."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import (AdmissibilityError, MagtunnelError, MissingStage, NotElliptic,
                     StageDependencyError)

log = logging.getLogger(__name__)

STAGES = ("critical", "instanton", "spectrum", "splitting", "gap", "monodromy", "fbi")
DEPENDS = {"splitting": ("critical",), "gap": ("critical",)}
OUTPUTS = {
    "critical": ("critical.csv",),
    "instanton": ("instanton.csv", "instanton.json"),
    "spectrum": ("spectrum.csv",),
    "splitting": ("splitting.csv", "splitting.json"),
    "gap": ("gap.csv",),
    "monodromy": ("monodromy.json",),
    "fbi": ("fbi.csv", "fbi.json"),
}


def fmt(x):
    """17 significant digits for floats; other values as text."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj):
    # repr of a Python float round-trips, which is 17 significant digits at most
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunManifest:
    config_hash: str
    subcommand: str
    parameters: dict
    outputs: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    cached: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    run_dir: str = ""

    def save(self):
        write_json(Path(self.run_dir) / "manifest.json", asdict(self))

    @classmethod
    def load(cls, run_dir):
        with open(Path(run_dir) / "manifest.json") as fh:
            return cls(**json.load(fh))


# grids and operators ---------------------------------------------------------

def _grid(cfg):
    from .spectral.grid import GridSpec

    g = cfg["grid"]
    try:
        return GridSpec(tuple(tuple(ax) for ax in g["box"]), tuple(g["n"]))
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc), "grid.n") from exc


def _operator(cfg, h):
    from .spectral.operator import assemble_operator

    return assemble_operator(_grid(cfg), None, cfgmod.scalar_potential(cfg),
                             cfg["spectrum"]["gauge"], h=h, omega_prime=cfgmod.omega_prime(cfg))


def _well_energy(cfg):
    E = cfg["instanton"]["E_prime"]
    if E is not None:
        return E
    W = cfgmod.scalar_potential(cfg)
    return float(W.value(W.wells[1]))


# stages ----------------------------------------------------------------------

def stage_critical(cfg, run_dir):
    from .critical import find_critical_points, fundamental_matrix, rescaled_floquet

    fam = cfg["potential"]["family"]
    rows = []
    if fam == "quartic":
        mp = cfgmod.model_params(cfg)
        V = cfgmod.radial_potential(cfg)
        for cp in find_critical_points(mp, V):
            fs = fundamental_matrix(cp, mp, V, require_elliptic=False)
            rows.append([cp.sign, *cp.point.x, *cp.y_position, cp.gradient_norm, *fs.mu,
                         fs.trace_plus, fs.elliptic])
    else:
        W = cfgmod.scalar_potential(cfg)
        wp = cfgmod.omega_prime(cfg)
        for sign, y in zip((-1, 1), W.wells):
            fs = rescaled_floquet(W, wp, sign)
            gn = float(np.linalg.norm(W.gradient(y)))
            rows.append([sign, *y, *y, gn, *fs.mu, fs.trace_plus, fs.elliptic])
    write_csv(run_dir / "critical.csv",
              ["sign", "x1", "x2", "x3", "y1", "y2", "y3", "gradient_norm", "mu1", "mu2", "mu3",
               "trace_plus", "elliptic"], rows)
    return {"elliptic": bool(all(r[-1] for r in rows))}


def stage_scan(cfg, run_dir):
    from .critical import DEFAULT_SCAN, parameter_scan

    res = parameter_scan(**DEFAULT_SCAN, workers=cfg["run"].get("workers", 1))
    rows = [[e.params.omega, e.params.nu, e.potential.v4, e.potential.r0, *e.spectrum.mu,
             e.spectrum.trace_plus, e.margin] for e in res]
    write_csv(run_dir / "scan.csv", ["omega", "nu", "v4", "r0", "mu1", "mu2", "mu3",
                                     "trace_plus", "margin"], rows)
    return {"elliptic_tuples": len(res), "rejected": res.rejected}


def stage_instanton(cfg, run_dir):
    from .instanton import InstantonOptions, compute_wkb, find_instantons, profile_rows

    W = cfgmod.scalar_potential(cfg)
    ic = cfg["instanton"]
    E = _well_energy(cfg)
    opts = InstantonOptions(n_nodes=ic["n_nodes"])
    iset = find_instantons(None, W, E, n_seeds=ic["n_seeds"], opts=opts,
                           workers=cfg["run"].get("workers", 1))
    path = iset.best
    wkb = compute_wkb(path, W, cfgmod.omega_prime(cfg), opts=opts)
    write_csv(run_dir / "instanton.csv",
              ["s", "y1", "y2", "y3", "W", "phi", "psi0", "psi1", "amplitude"],
              profile_rows(path, W, wkb))
    info = {
        "action": path.action,
        "action_raw": path.action_raw,
        "E_prime": E,
        "converged": path.converged,
        "iterations": path.iterations,
        "gradient_norm": path.gradient_norm,
        "multiplicity": iset.multiplicity,
        "omega_prime": wkb.omega_prime,
        "psi0_end": float(wkb.psi0[-1]),
        "psi1_end": float(wkb.psi1[-1]),
        "seed": path.seed,
    }
    write_json(run_dir / "instanton.json", info)
    return {"action": path.action, "converged": path.converged}


def stage_spectrum(cfg, run_dir):
    from .spectral.eigen import lowest_eigenpairs

    op = _operator(cfg, cfg["model"]["h"])
    sc = cfg["spectrum"]
    res = lowest_eigenpairs(op, sc["k"], sc["sector"], keep_vectors=False)
    rows = [[j, s, lam, r] for j, (lam, s, r) in
            enumerate(zip(res.eigenvalues, res.sectors, res.residuals))]
    write_csv(run_dir / "spectrum.csv", ["index", "sector", "eigenvalue", "residual"], rows)
    return {"lowest": float(res.eigenvalues[0]), "matvecs": res.matvecs}


def _instanton_action(run_dir):
    p = run_dir / "instanton.json"
    if p.exists():
        with open(p) as fh:
            return json.load(fh)["action"]
    return None


def stage_splitting(cfg, run_dir):
    from .spectral.sweep import band_analysis, splitting_sweep

    W = cfgmod.scalar_potential(cfg)
    sc = cfg["splitting"]
    wps = sc["omega_prime"] or [cfgmod.omega_prime(cfg)]
    reports = [splitting_sweep(None, W, _grid(cfg), sc["h"], omega_prime=float(wp),
                               gauge=cfg["spectrum"]["gauge"],
                               workers=cfg["run"].get("workers", 1)) for wp in wps]
    rows = []
    for rep in reports:
        for r in rep.rows():
            rows.append([rep.omega_prime, *r])
    write_csv(run_dir / "splitting.csv", ["omega_prime", "h", "E0", "E1", "dE", "minus_h_log_dE"],
              rows)
    S = _instanton_action(run_dir)
    out = {"reports": [r.summary() for r in reports], "S": S}
    if S is not None and sc["epsilon"] is not None and any(r.omega_prime == 0 for r in reports):
        band = band_analysis(reports, S, sc["epsilon"], sc["band_measure"])
        out["band"] = {"measure": sc["band_measure"], "C": band.C, "epsilon": band.epsilon, "in_band": band.in_band,
                       "slope_within": band.slope_within, "monotone": band.monotone,
                       "passed": band.passed}
        out["reports"] = [r.summary() for r in reports]
    write_json(run_dir / "splitting.json", out)
    return {"s_star": [r.s_star for r in reports]}


def stage_gap(cfg, run_dir):
    from .gap import gap_vs_direct

    gc = cfg["gap"]
    res = gap_vs_direct(None, cfgmod.scalar_potential(cfg), _grid(cfg), gc["h"],
                        omega_prime=cfgmod.omega_prime(cfg), gauge=cfg["spectrum"]["gauge"],
                        halfspace_offset=gc["halfspace_offset"], stencil=gc["stencil"],
                        workers=cfg["run"].get("workers", 1))
    write_csv(run_dir / "gap.csv", ["h", "w_plus_minus", "magnetic_term", "direct_splitting",
                                    "ratio"], [r.row() for r in res])
    return {"ratio": [r.ratio for r in res]}


def stage_monodromy(cfg, run_dir):
    from .monodromy import DrivenHamiltonianSpec, monodromy_vs_stationary
    from .spectral.grid import GridSpec

    mc = cfg["monodromy"]
    h = mc["h"] or cfg["model"]["h"]
    spec = DrivenHamiltonianSpec(cfg["model"]["omega"], cfg["model"]["nu"],
                                 cfgmod.radial_potential(cfg), mc["gauge_form"], h)
    grid = GridSpec.cube(mc["half_width"], mc["n"], 2, periodic=True)
    res = monodromy_vs_stationary(spec, grid, h, K=mc["K"], n_steps=mc["steps"], s=mc["s"],
                                  order=mc["order"])
    write_json(run_dir / "monodromy.json", res.summary())
    return {"max_phase_error": res.max_phase_error}


def stage_fbi(cfg, run_dir):
    from .phasespace import concentration_report, fbi_transform
    from .spectral.eigen import lowest_eigenpairs

    fc = cfg["fbi"]
    h = fc["h"] or cfg["model"]["h"]
    op = _operator(cfg, h)
    g = op.grid
    sector = "even" if cfg["spectrum"]["sector"] != "none" else "none"
    res = lowest_eigenpairs(op, 1, sector)
    u = np.asarray(res.eigenvectors[0]).reshape(g.shape) / np.sqrt(g.cell_volume)
    section = None
    if g.dimension > 1:
        section = {"axis": g.dimension - 1, "x": (0.0,) * (g.dimension - 1),
                   "xi": (0.0,) * (g.dimension - 1)}
    fld = fbi_transform(u, g, h, section=section, stride=fc["stride"], xi_max=fc["xi_max"])
    write_csv(run_dir / "fbi.csv", ["y3", "eta3", "density"], fld.raster())
    W = cfgmod.scalar_potential(cfg)
    rep = concentration_report(fld, W.wells)
    info = rep.summary()
    info.update({"shape": list(fld.values.shape), "mass": fld.mass, "c": fld.c})
    write_json(run_dir / "fbi.json", info)
    return {"imbalance": rep.imbalance, "shape": list(fld.values.shape)}


RUNNERS = {
    "critical": stage_critical,
    "instanton": stage_instanton,
    "spectrum": stage_spectrum,
    "splitting": stage_splitting,
    "gap": stage_gap,
    "monodromy": stage_monodromy,
    "fbi": stage_fbi,
}


def _closure(stages):
    want = set()
    for s in stages:
        if s not in STAGES:
            raise ValueError(f"unknown stage {s!r}")
        want.add(s)
        want.update(DEPENDS.get(s, ()))
    return [s for s in STAGES if s in want]


def _find_run_dir(out_dir: Path, digest):
    cands = sorted(p for p in out_dir.glob(f"{digest[:12]}-*") if (p / "manifest.json").exists())
    return cands[-1] if cands else None


def run_pipeline(config_path=None, stages=STAGES, *, cfg=None, out_dir=None, force=False,
                 workers=None, subcommand="pipeline", keep_going=False, extra=None):
    """Run ``stages`` (plus prerequisites) and return the RunManifest.

    Outputs go to ``<out_dir>/<hash12>-<timestamp>``. Without ``force`` an
    existing directory for the same configuration hash is reused and stages
    whose outputs it already lists are skipped. With ``keep_going`` a failed
    stage leaves ``<stage>.error.json`` and the remaining independent stages
    still run; the first error is re-raised at the end.

    Raises
    ------
    ConfigError, StageDependencyError, MagtunnelError
        Numerical errors carry the failing stage name in ``stage``.
    """
    if cfg is None:
        cfg = cfgmod.load_config(config_path)
    if workers is not None:
        cfg["run"]["workers"] = int(workers)
    out_dir = Path(out_dir or cfg["run"].get("out_dir", "runs"))
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = cfgmod.config_hash(cfg)
    run_dir = None if force else _find_run_dir(out_dir, digest)
    if run_dir is not None:
        man = RunManifest.load(run_dir)
        man.subcommand = subcommand
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
        run_dir = out_dir / f"{digest[:12]}-{stamp}"
        run_dir.mkdir(parents=True)
        man = RunManifest(digest, subcommand, cfg, run_dir=str(run_dir))
    man.run_dir = str(run_dir)
    man.cached = []
    write_json(run_dir / "config.json", cfg)
    if "config.json" not in man.outputs:
        man.outputs.append("config.json")
    failed = {}
    first_exc = None
    for stage in _closure(stages):
        if stage in man.diagnostics and all(f in man.outputs for f in OUTPUTS[stage]):
            man.cached.append(stage)
            continue
        try:
            for dep in DEPENDS.get(stage, ()):
                if dep in failed:
                    raise StageDependencyError(f"stage {stage!r} needs {dep!r}, which failed")
                if dep == "critical" and not man.diagnostics.get("critical", {}).get("elliptic"):
                    raise StageDependencyError(
                        f"stage {stage!r} requires the critical ellipticity check to pass; "
                        "`magtunnel critical --scan` lists admissible elliptic parameter sets")
            t0 = time.perf_counter()
            diag = RUNNERS[stage](cfg, run_dir)
            man.wall_clock[stage] = time.perf_counter() - t0
            man.diagnostics[stage] = diag
            man.errors.pop(stage, None)
            for f in OUTPUTS[stage]:
                if f not in man.outputs:
                    man.outputs.append(f)
        except MagtunnelError as exc:
            exc.stage = stage
            failed[stage] = exc
            man.errors[stage] = {"type": type(exc).__name__, "message": str(exc)}
            log.error("stage %s failed: %s", stage, exc)
            if not keep_going:
                man.save()
                raise
            first_exc = first_exc or exc
            name = f"{stage}.error.json"
            write_json(run_dir / name, man.errors[stage])
            if name not in man.outputs:
                man.outputs.append(name)
    if extra:
        for name, fn in extra.items():
            man.diagnostics[name] = fn(cfg, run_dir)
            for f in sorted(p.name for p in run_dir.iterdir()):
                if f not in man.outputs and f != "manifest.json":
                    man.outputs.append(f)
    man.save()
    if first_exc is not None:
        raise first_exc
    return man


# plot data -----------------------------------------------------------------

def emit_plot_data(run_dir, kind):
    """Plain-text plot inputs from stored stage outputs.

    kind ``splitting``: per omega' a file with rows (1/h, log dE) and two
    reference rows (slope, intercept) for the band edges; ``instanton``:
    rows (s, W, phi, psi0, psi1); ``fbi``: raster rows (y3, eta3, density).
    """
    run_dir = Path(run_dir)
    if kind == "splitting":
        src = run_dir / "splitting.csv"
        if not src.exists():
            raise MissingStage("splitting output not found")
        _, rows = read_csv(src)
        with open(run_dir / "splitting.json") as fh:
            info = json.load(fh)
        files = []
        wps = sorted({float(r[0]) for r in rows})
        for i, wp in enumerate(wps):
            data = [r for r in rows if float(r[0]) == wp]
            rep = info["reports"][i]
            S = info.get("S")
            S = rep["fit_slope"] if S is None else S
            C = rep["C"] if isinstance(rep["C"], float) else 0.0
            eps = rep["epsilon"] if isinstance(rep["epsilon"], float) else 0.0
            lo, hi = S - C * wp - eps, S + C * wp + eps
            a = rep["fit_intercept"]
            path = run_dir / f"splitting_plot_{i}.txt"
            with open(path, "w") as fh:
                fh.write(f"# omega_prime {fmt(wp)}\n# inv_h log_dE\n")
                for r in data:
                    h, dE = float(r[1]), float(r[4])
                    fh.write(f"{fmt(1.0 / h)} {fmt(float(np.log(dE)) if dE > 0 else float('nan'))}\n")
                fh.write("# reference band: slope intercept (log dE = intercept + slope / h)\n")
                fh.write(f"{fmt(-lo)} {fmt(a)}\n{fmt(-hi)} {fmt(a)}\n")
            files.append(path)
        return files
    if kind == "instanton":
        src = run_dir / "instanton.csv"
        if not src.exists():
            raise MissingStage("instanton output not found")
        head, rows = read_csv(src)
        cols = [head.index(c) for c in ("s", "W", "phi", "psi0", "psi1")]
        path = run_dir / "instanton_profile.txt"
        with open(path, "w") as fh:
            fh.write("# s W phi psi0 psi1\n")
            for r in rows:
                fh.write(" ".join(r[c] for c in cols) + "\n")
        return [path]
    if kind == "fbi":
        src = run_dir / "fbi.csv"
        if not src.exists():
            raise MissingStage("fbi output not found")
        _, rows = read_csv(src)
        with open(run_dir / "fbi.json") as fh:
            shape = json.load(fh)["shape"]
        path = run_dir / "fbi_raster.txt"
        with open(path, "w") as fh:
            fh.write(f"# y3 eta3 density; raster {shape[0]} x {shape[1]}\n")
            for r in rows:
                fh.write(" ".join(r) + "\n")
        return [path]
    raise ValueError(f"unknown plot kind {kind!r}")


def exit_code(exc):
    """Process exit code for an exception raised by a stage."""
    from .errors import ConfigError

    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, (AdmissibilityError, NotElliptic, StageDependencyError)):
        return 4
    if isinstance(exc, MagtunnelError):
        return 3
    return 1
