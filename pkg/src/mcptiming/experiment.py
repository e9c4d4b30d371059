"""Over-range sweep pipeline: simulate, tag-filter, fit, extrapolate."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import AnalysisSettings, ExperimentSettings
from .fitting import (ExtrapolationPoint, ExtrapolationReport, FitError,
                      FitReport, fit_extrapolation, fit_lorentzian)
from .listmode import (Histogram, ListModeData, TagStatistics, build_histogram,
                       range_ps_to_ticks, tag_statistics)
from .montecarlo import ScenarioConfig, SimResult, run_simulation


class StageError(RuntimeError):
    def __init__(self, stage: str, point: int, cause: Exception):
        self.stage = stage
        self.point = point
        super().__init__(f"{stage} failed at sweep point {point}: {cause}")


def derive_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def histogram_for(data: ListModeData, analysis: AnalysisSettings,
                  filter_spec: str = None) -> Histogram:
    tick = data.tick_ps
    w = max(1, int(round(analysis.bins_ps / tick)))
    lo, hi = range_ps_to_ticks(analysis.range_ns[0] * 1e3, analysis.range_ns[1] * 1e3, tick)
    return build_histogram(data, filter_spec or analysis.filter, w, (lo, hi))


def fit_histogram(hist: Histogram, analysis: AnalysisSettings) -> FitReport:
    return fit_lorentzian(hist, analysis.weighting,
                          (analysis.range_ns[0] * 1e3, analysis.range_ns[1] * 1e3),
                          fit_baseline=analysis.fit_baseline)


@dataclass
class SweepPoint:
    overrange_mV: float
    seed: int
    sim: SimResult
    data: ListModeData
    tags: TagStatistics
    fit: FitReport
    fit_counts: int = 0

    @property
    def extrapolation_point(self) -> ExtrapolationPoint:
        return ExtrapolationPoint(self.tags.combined_x, self.fit.params.fwhm_ps,
                                  self.fit.errors.fwhm_ps)

    def row(self) -> dict:
        return {
            "overrange_mV": self.overrange_mV,
            "x_percent": self.tags.combined_x,
            "nontagged_start_percent": self.tags.nontagged_percent_start,
            "nontagged_stop_percent": self.tags.nontagged_percent_stop,
            "fwhm_ps": self.fit.params.fwhm_ps,
            "fwhm_sigma_ps": self.fit.errors.fwhm_ps,
            "centroid_ps": self.fit.params.centroid_ps,
            "reduced_chi_square": self.fit.reduced_chi_square,
            "selected_counts": self.fit_counts,
            "records": len(self.data),
            "seed": self.seed,
        }


@dataclass
class ExperimentResult:
    points: list
    report: ExtrapolationReport

    def table_csv(self) -> str:
        cols = list(self.points[0].row())
        lines = [",".join(cols)]
        for p in self.points:
            r = p.row()
            lines.append(",".join(_fmt(r[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def run_point(scenario: ScenarioConfig, overrange_mV: float, index: int,
              analysis: AnalysisSettings, workers: int = 1) -> SweepPoint:
    seed = derive_seed(scenario.master_seed, index)
    cfg = replace(scenario.with_overrange(overrange_mV), master_seed=seed)
    try:
        sim = run_simulation(cfg, workers=workers)
    except Exception as exc:
        raise StageError("simulate", index, exc) from exc
    data = ListModeData(sim.interval_ticks, sim.tags, cfg.pta_tick_ps)
    try:
        hist = histogram_for(data, analysis)
    except ValueError as exc:
        raise StageError("histogram", index, exc) from exc
    try:
        fit = fit_histogram(hist, analysis)
        if not fit.converged:
            raise FitError("Lorentzian fit did not converge")
    except FitError as exc:
        raise StageError("fit", index, exc) from exc
    try:
        tags = tag_statistics(data)
    except ValueError as exc:
        raise StageError("tag statistics", index, exc) from exc
    return SweepPoint(overrange_mV, seed, sim, data, tags, fit, fit_counts=hist.total)


def run_experiment(scenario: ScenarioConfig, analysis: AnalysisSettings,
                   experiment: ExperimentSettings, sweep=None,
                   workers: int = 1) -> ExperimentResult:
    sweep = tuple(experiment.sweep_mV if sweep is None else sweep)
    if len(sweep) < 3:
        raise ValueError(f"an over-range sweep needs at least 3 settings, got {len(sweep)}")
    points = [run_point(scenario, v, i, analysis, workers) for i, v in enumerate(sweep)]
    try:
        report = fit_extrapolation([p.extrapolation_point for p in points],
                                   experiment.jitter_ps, experiment.source_term_ps)
    except FitError as exc:
        raise StageError("extrapolation", -1, exc) from exc
    return ExperimentResult(points, report)
