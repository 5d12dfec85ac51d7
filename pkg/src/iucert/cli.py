"""Command line front end: check-potential, certify, plotdata.

Exit codes: 0 ok, 2 potential conditions, 3 configuration, 4 discretization or
Rosen, 5 IU, 6 semigroup.  With several failures the earliest pipeline stage
decides the code.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as pl
from .config import RunConfig, load_config, parse_time_list, with_overrides
from .errors import ConfigError
from .io import atomic_write_text, write_json

log = logging.getLogger("iucert")


def _float_list(s):
    try:
        return tuple(float(x) for x in s.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {s!r}") from None


def _grid(s):
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != 2:
        raise ConfigError("--grid expects N,R_max")
    try:
        N = int(parts[0])
        R = None if parts[1].lower() == "auto" else float(parts[1])
    except ValueError:
        raise ConfigError(f"bad --grid value {s!r}") from None
    return N, R


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    kw = {}
    if args.t:
        kw["t_list"] = parse_time_list(args.t)
    if args.eps:
        kw["eps_list"] = _float_list(args.eps)
    if args.grid:
        N, R = _grid(args.grid)
        kw["N"] = N
        kw["R_max"] = R  # None keeps the configured radius
    if args.modes is not None:
        kw["K"] = args.modes
    if args.out:
        kw["out_dir"] = args.out
    return with_overrides(cfg, **kw)


def write_metadata(out_dir: Path, command: str, argv):
    """Run metadata (timestamp, versions) lives in a sidecar, never in the payload."""
    import scipy
    meta = {
        "command": command,
        "argv": list(argv),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "iucert": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    write_json(out_dir / "metadata.json", meta)


def _summary_line(state) -> str:
    if state.exit_code == pl.EXIT_OK:
        return "ok"
    return "; ".join(f"{k}: {v[0]}" for k, v in state.failures.items())


def cmd_check_potential(cfg: RunConfig, argv=()) -> int:
    out = Path(cfg.out_dir)
    state = pl.run_check_potential(cfg)
    write_json(out / "conditions.json", state.report)
    write_metadata(out, "check-potential", argv)
    print(f"check-potential: exit {state.exit_code} ({_summary_line(state)})")
    return state.exit_code


def write_certify_outputs(state, out: Path):
    write_json(out / "report.json", state.report)
    if state.gs is not None:
        state.gs.to_csv(out / "ground_state.csv")
        state.spectrum.to_csv(out / "spectrum.csv")
    for i, (t, sch) in enumerate(state.schedules.items()):
        write_json(out / f"schedule_{i}.json", sch.to_dict())
        atomic_write_text(out / f"schedule_{i}.csv", sch.samples_csv())
    for i, (t, K) in enumerate(state.kernels.items()):
        K.write(out / f"kernel_{i}.bin", out / f"kernel_{i}.csv", state.gs)


def cmd_certify(cfg: RunConfig, argv=()) -> int:
    out = Path(cfg.out_dir)
    state = pl.run_certify(cfg)
    write_certify_outputs(state, out)
    write_metadata(out, "certify", argv)
    print(f"certify: exit {state.exit_code} ({_summary_line(state)})")
    return state.exit_code


def cmd_plotdata(cfg: RunConfig, argv=()) -> int:
    from . import plotting

    out = Path(cfg.out_dir)
    state = pl.run_certify(cfg)
    if state.gs is None:
        write_json(out / "report.json", state.report)
        print(f"plotdata: exit {state.exit_code} ({_summary_line(state)})")
        return state.exit_code
    csvs = plotting.write_tables(state, out)
    pngs = plotting.write_figures(state, out)
    write_metadata(out, "plotdata", argv)
    print("plotdata: wrote " + ", ".join(p.name for p in csvs + pngs))
    # plot data is still produced when a certificate fails; configuration problems alone set the code
    return pl.EXIT_OK


COMMANDS = {"check-potential": cmd_check_potential, "certify": cmd_certify, "plotdata": cmd_plotdata}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iucert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH", help="key=value configuration file")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--t", metavar="LIST", help="times, e.g. '0.25,0.5,T,1.5T'")
        sp.add_argument("--eps", metavar="LIST", help="Rosen eps values")
        sp.add_argument("--grid", metavar="N,R_max", help="grid size and radius (R_max may be 'auto')")
        sp.add_argument("--modes", metavar="K", type=int, help="number of eigenpairs kept")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which would collide with the potential-stage code
        return pl.EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return pl.EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return pl.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
