"""Command-line front end.

Subcommands: ``rates``, ``simulate``, ``histogram``, ``fit``, ``experiment``.
Exit codes: 0 ok, 2 configuration or usage, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import (AnalysisSettings, RunConfig, load_config, parse_float_list,
                     parse_range)
from .experiment import StageError, fit_histogram, histogram_for, run_experiment
from .fitting import FitError, WEIGHTINGS
from .listmode import (ListModeData, ListModeError, read_listmode, tag_filter,
                       write_listmode)
from .montecarlo import ConfigError, ScenarioConfig, run_simulation
from .physics import DomainError, coincidence_rates

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class UsageError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config_digest: str = ""
    master_seed: Optional[int] = None
    version: str = __version__
    outputs: list = field(default_factory=list)
    started_utc: str = ""
    finished_utc: str = ""

    def add_output(self, path: Path, payload: bytes):
        self.outputs.append({"path": path.name,
                             "sha256": hashlib.sha256(payload).hexdigest()})

    def to_json(self) -> bytes:
        return _json_bytes(self.__dict__)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n").encode("utf-8")


def _write(path: Path, payload: bytes, manifest: Optional[RunManifest] = None) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)
    if manifest is not None:
        manifest.add_output(path, payload)


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args) -> Optional[RunConfig]:
    if getattr(args, "config", None) is None:
        return None
    rc = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        rc = replace(rc, scenario=replace(rc.scenario, master_seed=args.seed))
    return rc


def _require_config(args) -> RunConfig:
    rc = _load(args)
    if rc is None:
        raise UsageError(f"{args.command} needs --config")
    return rc


def _analysis(args, rc: Optional[RunConfig]) -> AnalysisSettings:
    a = rc.analysis if rc is not None else AnalysisSettings()
    kw = {}
    if args.filter is not None:
        kw["filter"] = args.filter
    if args.bins_ps is not None:
        kw["bins_ps"] = args.bins_ps
    if args.range_ns is not None:
        kw["range_ns"] = args.range_ns
    if getattr(args, "weighting", None) is not None:
        kw["weighting"] = args.weighting
    a = replace(a, **kw)
    if not a.bins_ps > 0:
        raise UsageError("--bins-ps must be > 0")
    tag_filter(a.filter)  # validates the expression
    if a.weighting not in WEIGHTINGS:
        raise UsageError(f"unknown weighting {a.weighting!r}")
    return a


def _range_arg(text: str):
    try:
        return parse_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _list_arg(text: str):
    try:
        return parse_float_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _fmt(v: float) -> str:
    return repr(float(v))


# -- commands --------------------------------------------------------------

def default_grid(L: float, n: int = 100) -> tuple:
    return tuple(L * k / n for k in range(1, n))


def rates_table(scenario: ScenarioConfig, grid) -> str:
    geom = scenario.geometry
    L = geom.separation_cm
    bad = [s for s in grid if not 0 < s < L]
    if bad:
        raise UsageError(f"grid points outside (0, {L}): {bad}")
    fr = scenario.fractions
    R0 = scenario.source.activity_per_s
    lines = ["s_cm,R_AA,R_DA,R_total"]
    for s in grid:
        r = coincidence_rates(scenario.start_mcp.efficiency, scenario.stop_mcp.efficiency,
                              geom, s, fr, R0)
        lines.append(",".join(_fmt(v) for v in (s, r.R_AA, r.R_DA, r.R_total)))
    return "\n".join(lines) + "\n"


def cmd_rates(args) -> int:
    rc = _require_config(args)
    grid = args.grid or rc.grid_cm or default_grid(rc.scenario.geometry.separation_cm)
    payload = rates_table(rc.scenario, grid).encode("ascii")
    if args.out_dir is None:
        sys.stdout.write(payload.decode("ascii"))
    else:
        _write(_out_dir(args) / "rates.csv", payload)
    return EXIT_OK


def cmd_simulate(args) -> int:
    rc = _require_config(args)
    manifest = RunManifest("simulate", list(args.argv), rc.digest,
                           rc.scenario.master_seed, started_utc=_now())
    sim = run_simulation(rc.scenario, workers=args.workers)
    out = _out_dir(args)
    path = out / "listmode.txt"
    data = ListModeData(sim.interval_ticks, sim.tags, rc.scenario.pta_tick_ps)
    payload = write_listmode(data, path)
    manifest.add_output(path, payload)
    _write(out / "summary.json", _json_bytes(sim.summary.to_dict()), manifest)
    manifest.finished_utc = _now()
    _write(out / "manifest.json", manifest.to_json())
    return EXIT_OK


def _histogram_from_args(args):
    rc = _load(args)
    analysis = _analysis(args, rc)
    data = read_listmode(args.listmode)
    hist = histogram_for(data, analysis)
    return analysis, hist


def cmd_histogram(args) -> int:
    _, hist = _histogram_from_args(args)
    payload = hist.to_csv().encode("ascii")
    if args.out_dir is None:
        sys.stdout.write(payload.decode("ascii"))
    else:
        _write(_out_dir(args) / "histogram.csv", payload)
    return EXIT_OK


def cmd_fit(args) -> int:
    analysis, hist = _histogram_from_args(args)
    if hist.total == 0:
        raise FitError("no records selected inside the fit range")
    rep = fit_histogram(hist, analysis)
    out = _out_dir(args)
    _write(out / "histogram.csv", hist.to_csv().encode("ascii"))
    _write(out / "fit.json", _json_bytes(rep.to_dict()))
    if not rep.converged:
        print("fit did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_experiment(args) -> int:
    rc = _require_config(args)
    analysis = _analysis(args, rc)
    manifest = RunManifest("experiment", list(args.argv), rc.digest,
                           rc.scenario.master_seed, started_utc=_now())
    res = run_experiment(rc.scenario, analysis, rc.experiment, sweep=args.sweep,
                         workers=args.workers)
    out = _out_dir(args)
    for i, p in enumerate(res.points):
        path = out / f"point_{i:02d}.txt"
        manifest.add_output(path, write_listmode(p.data, path))
    _write(out / "table.csv", res.table_csv().encode("ascii"), manifest)
    report = res.report.to_dict()
    report["sweep_mV"] = [p.overrange_mV for p in res.points]
    _write(out / "report.json", _json_bytes(report), manifest)
    manifest.finished_utc = _now()
    _write(out / "manifest.json", manifest.to_json())
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcptiming",
                                description="MCP coincidence timing simulation and analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False, listmode=False, analysis=False, weighting=False):
        if listmode:
            sp.add_argument("listmode", help="list-mode file")
        sp.add_argument("--config", required=config_required, help="scenario file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the file)")
        sp.add_argument("--out-dir", help="output directory")
        if analysis:
            sp.add_argument("--filter", help="tag==N, nontagged or all")
            sp.add_argument("--bins-ps", type=float, help="histogram bin width (ps)")
            sp.add_argument("--range-ns", type=_range_arg, help="histogram/fit range lo:hi (ns)")
        if weighting:
            sp.add_argument("--weighting", choices=WEIGHTINGS)

    sp = sub.add_parser("rates", help="analytic coincidence rates versus source position")
    common(sp, config_required=True)
    sp.add_argument("--grid", type=_list_arg, help="source positions s (cm), comma separated")
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("simulate", help="Monte Carlo list-mode run")
    common(sp, config_required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate, out_default=".")

    sp = sub.add_parser("histogram", help="bin a list-mode file")
    common(sp, listmode=True, analysis=True)
    sp.set_defaults(func=cmd_histogram)

    sp = sub.add_parser("fit", help="Lorentzian fit of a list-mode histogram")
    common(sp, listmode=True, analysis=True, weighting=True)
    sp.set_defaults(func=cmd_fit, out_default=".")

    sp = sub.add_parser("experiment", help="over-range sweep and FWHM extrapolation")
    common(sp, config_required=True, analysis=True, weighting=True)
    sp.add_argument("--sweep", type=_list_arg, help="over-range bounds (mV), comma separated")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_experiment, out_default=".")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["mcptiming"] + argv
    if args.out_dir is None and getattr(args, "out_default", None):
        args.out_dir = args.out_default
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ListModeError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_NUMERIC
    except (FitError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
