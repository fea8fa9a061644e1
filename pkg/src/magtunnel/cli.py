"""Command line entry point: ``magtunnel <subcommand> --config run.toml``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as cfgmod
from .errors import ConfigError, MagtunnelError
from .pipeline import STAGES, emit_plot_data, exit_code, read_csv, run_pipeline, stage_scan


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML configuration file")
    common.add_argument("--out-dir", default=None, help="parent directory for run directories")
    common.add_argument("--force", action="store_true", help="recompute cached stages")
    common.add_argument("--workers", type=int, default=None, help="worker processes per stage")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="magtunnel", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("critical", parents=[common], help="wells and Floquet frequencies")
    c.add_argument("--scan", action="store_true", help="also scan the default parameter grid")
    i = sub.add_parser("instanton", parents=[common], help="minimal Agmon geodesic and WKB data")
    i.add_argument("--plot", action="store_true", help="write instanton_profile.txt")
    i.add_argument("--seeds", type=int, default=None, help="number of initial paths")
    sp = sub.add_parser("spectrum", parents=[common], help="lowest eigenvalues per sector")
    sp.add_argument("--sector", default=None, choices=["none", "even", "odd", "both"])
    sp.add_argument("--k", type=int, default=None, help="eigenvalues per sector")
    s = sub.add_parser("splitting", parents=[common], help="tunneling splitting sweep over h")
    s.add_argument("--plot", action="store_true", help="write splitting_plot_*.txt")
    s.add_argument("--h", default=None, help="comma separated decreasing h values")
    gp = sub.add_parser("gap", parents=[common], help="interaction integral versus direct splitting")
    gp.add_argument("--h", default=None, help="comma separated h values")
    m = sub.add_parser("monodromy", parents=[common], help="period map versus stationary phases")
    m.add_argument("--K", type=int, default=None)
    m.add_argument("--steps", type=int, default=None)
    m.add_argument("--s", type=float, default=None)
    f = sub.add_parser("fbi", parents=[common], help="FBI raster of the ground state")
    f.add_argument("--state", default=None, choices=["ground"])
    f.add_argument("--section", default=None, choices=["y3-eta3"])
    pl = sub.add_parser("pipeline", parents=[common], help="run several stages in order")
    pl.add_argument("--stages", default=",".join(STAGES),
                    help="comma separated subset of " + ",".join(STAGES))
    pl.add_argument("--keep-going", action="store_true",
                    help="record failed stages and continue with independent ones")
    return p


def _h_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--h must be comma separated numbers, got {text!r}", "h") from exc


def _apply_overrides(cfg, args):
    if args.command == "instanton" and args.seeds is not None:
        cfg["instanton"]["n_seeds"] = args.seeds
    if args.command == "spectrum":
        if args.sector is not None:
            cfg["spectrum"]["sector"] = args.sector
        if args.k is not None:
            cfg["spectrum"]["k"] = args.k
    if args.command in ("splitting", "gap") and args.h is not None:
        cfg[args.command]["h"] = _h_list(args.h)
    if args.command == "monodromy":
        for key, val in (("K", args.K), ("steps", args.steps), ("s", args.s)):
            if val is not None:
                cfg["monodromy"][key] = val
    if args.command == "fbi":
        if args.state is not None:
            cfg["fbi"]["state"] = args.state
        if args.section is not None:
            cfg["fbi"]["section"] = args.section
    cfgmod.validate(cfg)
    return cfg


def _print_stage(man, stage):
    from pathlib import Path

    run = Path(man.run_dir)
    if stage in ("monodromy",):
        with open(run / "monodromy.json") as fh:
            print(json.dumps(json.load(fh), indent=2, sort_keys=True))
        return
    csvs = {"critical": "critical.csv", "instanton": "instanton.json", "spectrum": "spectrum.csv",
            "splitting": "splitting.csv", "gap": "gap.csv", "fbi": "fbi.json"}
    name = csvs[stage]
    if name.endswith(".json"):
        with open(run / name) as fh:
            print(json.dumps(json.load(fh), indent=2, sort_keys=True))
        return
    head, rows = read_csv(run / name)
    print("\t".join(head))
    for r in rows:
        print("\t".join(r))


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(cfgmod.load_config(args.config), args)
        if args.command == "pipeline":
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            bad = [s for s in stages if s not in STAGES]
            if bad:
                raise ConfigError(f"unknown stage(s) {bad}", "stages")
        else:
            stages = [args.command]
        extra = {"scan": stage_scan} if getattr(args, "scan", False) else None
        man = run_pipeline(stages=stages, cfg=cfg, out_dir=args.out_dir, force=args.force,
                           workers=args.workers, subcommand=args.command,
                           keep_going=getattr(args, "keep_going", False), extra=extra)
        if getattr(args, "plot", False):
            emit_plot_data(man.run_dir, args.command)
        if args.command == "pipeline":
            print(json.dumps({"run_dir": man.run_dir, "outputs": man.outputs,
                              "cached": man.cached}, indent=2))
        else:
            _print_stage(man, args.command)
            print(f"# run directory: {man.run_dir}", file=sys.stderr)
    except MagtunnelError as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage}" if stage else ""
        key = getattr(exc, "key", None)
        extra_key = f" [{key}]" if key else ""
        print(f"error{where}: {type(exc).__name__}: {exc}{extra_key}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
