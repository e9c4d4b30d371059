"""Flat ``section.key = value`` scenario files.

Every key carries its unit in the name. ``mcp.*`` and ``elec.*`` set both
channels; ``start_mcp.*``/``stop_mcp.*`` (and the ``_elec`` forms) override a
single channel regardless of line order. ``#`` starts a comment.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .montecarlo import (ConfigError, ElectronicsSpec, EmissionModel,
                         ScenarioConfig)
from .physics import GeometrySpec, McpSpec, SourceSpec

GEOMETRY_KEYS = {"separation_cm": "separation_cm", "active_radius_cm": "active_radius_cm"}
SOURCE_KEYS = {
    "activity_per_s": "activity_per_s",
    "position_cm": "position_cm",
    "spread_cm": "spread_cm",
    "pickoff_fraction": "pickoff_fraction",
}
MCP_KEYS = {f.name: f.name for f in fields(McpSpec)}
ELEC_KEYS = {f.name: f.name for f in fields(ElectronicsSpec)}
EMISSION_KEYS = {f.name: f.name for f in fields(EmissionModel)}
RUN_KEYS = ("pta_tick_ps", "external_delay_ps", "coincidence_window_ns", "n_decays", "seed")
ANALYSIS_KEYS = ("filter", "bins_ps", "range_ns", "weighting", "fit_baseline")
EXPERIMENT_KEYS = ("sweep_mV", "jitter_ps", "source_term_ps")
RATES_KEYS = ("grid_cm",)


@dataclass(frozen=True)
class AnalysisSettings:
    filter: str = "nontagged"
    bins_ps: float = 10.0
    range_ns: tuple = (49.5, 50.5)
    weighting: str = "unweighted"
    fit_baseline: bool = True


@dataclass(frozen=True)
class ExperimentSettings:
    sweep_mV: tuple = ()
    jitter_ps: float = 38.0
    source_term_ps: float = 47.0


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    grid_cm: tuple = ()
    digest: str = ""


def parse_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"expected lo:hi, got {text!r}")
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ValueError(f"empty range {text!r}")
    return lo, hi


def parse_float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _number(key, raw, errors, integer=False):
    try:
        if integer:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(raw)
    except ValueError:
        errors.append(f"{key}: expected a number, got {raw!r}")
        return None


def parse_config_text(text: str) -> RunConfig:
    errors: list[str] = []
    entries: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or "." not in key:
            errors.append(f"line {n}: expected 'section.key = value'")
            continue
        if key in entries:
            errors.append(f"{key}: given more than once (line {n})")
        entries[key] = value

    geom, src, emis = {}, {}, {}
    mcp = {"start_mcp": {}, "stop_mcp": {}}
    elec = {"start_elec": {}, "stop_elec": {}}
    run, analysis, experiment = {}, {}, {}
    grid = ()
    # shared keys first so per-channel keys win
    ordered = sorted(entries.items(), key=lambda kv: kv[0].split(".")[0] not in ("mcp", "elec"))
    for key, raw in ordered:
        section, name = key.split(".", 1)
        if section == "geometry" and name in GEOMETRY_KEYS:
            geom[name] = _number(key, raw, errors)
        elif section == "source" and name in SOURCE_KEYS:
            src[name] = _number(key, raw, errors)
        elif section in ("mcp", "start_mcp", "stop_mcp") and name in MCP_KEYS:
            targets = ("start_mcp", "stop_mcp") if section == "mcp" else (section,)
            for t in targets:
                mcp[t][name] = _number(key, raw, errors)
        elif section in ("elec", "start_elec", "stop_elec") and name in ELEC_KEYS:
            targets = ("start_elec", "stop_elec") if section == "elec" else (section,)
            for t in targets:
                elec[t][name] = _number(key, raw, errors)
        elif section == "emission" and name in EMISSION_KEYS:
            emis[name] = _number(key, raw, errors)
        elif section == "run" and name in RUN_KEYS:
            run[name] = _number(key, raw, errors, integer=name in ("n_decays", "seed"))
        elif section == "analysis" and name in ANALYSIS_KEYS:
            analysis[name] = raw
        elif section == "experiment" and name in EXPERIMENT_KEYS:
            experiment[name] = raw
        elif section == "rates" and name in RATES_KEYS:
            try:
                grid = parse_float_list(raw)
            except ValueError:
                errors.append(f"{key}: expected comma-separated numbers")
        else:
            errors.append(f"{key}: unknown key")

    if errors:
        raise ConfigError(errors)

    try:
        geometry = GeometrySpec(**geom)
    except ValueError as exc:
        raise ConfigError([f"geometry: {exc}"]) from None
    scenario = ScenarioConfig(
        geometry=geometry,
        source=SourceSpec(**src),
        start_mcp=McpSpec(**mcp["start_mcp"]),
        stop_mcp=McpSpec(**mcp["stop_mcp"]),
        start_elec=ElectronicsSpec(**elec["start_elec"]),
        stop_elec=ElectronicsSpec(**elec["stop_elec"]),
        emission=EmissionModel(**emis),
    )
    run_kw = {}
    if "pta_tick_ps" in run:
        run_kw["pta_tick_ps"] = run["pta_tick_ps"]
    if "external_delay_ps" in run:
        run_kw["external_delay_ps"] = run["external_delay_ps"]
    if "coincidence_window_ns" in run:
        run_kw["coincidence_window_ps"] = run["coincidence_window_ns"] * 1e3
    if "n_decays" in run:
        run_kw["n_decays"] = run["n_decays"]
    if "seed" in run:
        run_kw["master_seed"] = run["seed"]
    scenario = replace(scenario, **run_kw)

    a_kw = {}
    try:
        if "filter" in analysis:
            a_kw["filter"] = analysis["filter"]
        if "bins_ps" in analysis:
            a_kw["bins_ps"] = float(analysis["bins_ps"])
        if "range_ns" in analysis:
            a_kw["range_ns"] = parse_range(analysis["range_ns"])
        if "weighting" in analysis:
            a_kw["weighting"] = analysis["weighting"]
        if "fit_baseline" in analysis:
            a_kw["fit_baseline"] = analysis["fit_baseline"].lower() in ("1", "true", "yes")
        e_kw = {}
        if "sweep_mV" in experiment:
            e_kw["sweep_mV"] = parse_float_list(experiment["sweep_mV"])
        if "jitter_ps" in experiment:
            e_kw["jitter_ps"] = float(experiment["jitter_ps"])
        if "source_term_ps" in experiment:
            e_kw["source_term_ps"] = float(experiment["source_term_ps"])
    except ValueError as exc:
        raise ConfigError([f"analysis/experiment: {exc}"]) from None

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    cfg = RunConfig(scenario, AnalysisSettings(**a_kw), ExperimentSettings(**e_kw), grid, digest)
    v = scenario.violations()
    if v:
        raise ConfigError(v)
    return cfg


DATA_DIR = Path(__file__).resolve().parent / "data"


def bundled_configs() -> list[str]:
    return sorted(p.name for p in DATA_DIR.glob("*.cfg"))


def resolve_config(path) -> Path:
    """``path`` itself if it exists, else a bundled file of that name."""
    p = Path(path)
    if p.exists() or os.sep in str(path):
        return p
    bundled = DATA_DIR / p.name
    return bundled if bundled.exists() else p


def load_config(path) -> RunConfig:
    with open(resolve_config(path), "rb") as fh:
        raw = fh.read()
    return parse_config_text(raw.decode("utf-8"))
