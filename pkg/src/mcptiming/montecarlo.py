"""Seeded event-level simulation of the two-detector coincidence apparatus.

Decays are generated in fixed-size chunks. Chunk ``k`` draws from its own
stream seeded by ``SeedSequence(master_seed, spawn_key=(k,))``, so the output
depends only on the seed and decay count, never on how chunks are spread
over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from ._pykernels import (COL_SPACING, KIND_DECAY, KIND_SINGLET, KIND_TRIPLET,
                         N_COLS, TRIPLET_SIN)
from .physics import (C_LIGHT_CM_PER_PS, POSITRON_BRANCH, ChannelFractions,
                      GeometrySpec, McpSpec, SourceSpec, max_penetration_depth,
                      two_photon_fraction)

CHUNK_DECAYS = 1 << 20

TRUTH_AA = 0
TRUTH_DA = 1
TRUTH_TRIPLET = 2
TRUTH_ACCIDENTAL = 3


class ConfigError(ValueError):
    """Raised with the full list of violated configuration invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class EmissionModel:
    qm_fwhm_ps: float = 0.0
    positron_delay_mean_ps: float = 0.0


@dataclass(frozen=True)
class ElectronicsSpec:
    jitter_sigma_ps: float = 38.0 / 2.3548200450309493
    walk_coefficient_ps: float = 45.0
    threshold_mV: float = 4.0
    overrange_mV: float = 30.0
    transit_full_scale_ps: float = 380.0
    transit_sigma_ps: float = 5.0
    tau_fixed_ps: float = 0.0

    def violations(self, prefix: str = "elec") -> list[str]:
        out = []
        if not 0 < self.threshold_mV < self.overrange_mV:
            out.append(f"{prefix}.threshold_mV must satisfy 0 < threshold_mV < overrange_mV")
        for name in ("jitter_sigma_ps", "walk_coefficient_ps",
                     "transit_full_scale_ps", "transit_sigma_ps", "tau_fixed_ps"):
            if not getattr(self, name) >= 0:
                out.append(f"{prefix}.{name} must be >= 0")
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    source: SourceSpec = field(default_factory=SourceSpec)
    start_mcp: McpSpec = field(default_factory=McpSpec)
    stop_mcp: McpSpec = field(default_factory=McpSpec)
    start_elec: ElectronicsSpec = field(default_factory=ElectronicsSpec)
    stop_elec: ElectronicsSpec = field(default_factory=ElectronicsSpec)
    emission: EmissionModel = field(default_factory=EmissionModel)
    pta_tick_ps: float = 0.305
    external_delay_ps: float = 50_000.0
    coincidence_window_ps: float = 80_000.0
    n_decays: int = 10_000_000
    master_seed: int = 1

    @property
    def fractions(self) -> ChannelFractions:
        return two_photon_fraction(self.source.pickoff_fraction)

    def violations(self) -> list[str]:
        out = self.source.violations(self.geometry)
        out += self.start_mcp.violations("start_mcp")
        out += self.stop_mcp.violations("stop_mcp")
        out += self.start_elec.violations("start_elec")
        out += self.stop_elec.violations("stop_elec")
        if not self.emission.qm_fwhm_ps >= 0:
            out.append("emission.qm_fwhm_ps must be >= 0")
        if not self.emission.positron_delay_mean_ps >= 0:
            out.append("emission.positron_delay_mean_ps must be >= 0")
        if not self.pta_tick_ps > 0:
            out.append("run.pta_tick_ps must be > 0")
        if not self.coincidence_window_ps > 0:
            out.append("run.coincidence_window_ns must be > 0")
        if not self.external_delay_ps >= 0:
            out.append("run.external_delay_ps must be >= 0")
        if not (isinstance(self.n_decays, (int, np.integer)) and self.n_decays > 0):
            out.append("run.n_decays must be a positive integer")
        if not 0 <= int(self.master_seed) < 2**64:
            out.append("run.seed must be an unsigned 64-bit integer")
        return out

    def validate(self) -> "ScenarioConfig":
        v = self.violations()
        if v:
            raise ConfigError(v)
        return self

    def with_overrange(self, overrange_mV: float) -> "ScenarioConfig":
        return replace(
            self,
            start_elec=replace(self.start_elec, overrange_mV=overrange_mV),
            stop_elec=replace(self.stop_elec, overrange_mV=overrange_mV),
        )


@dataclass(frozen=True)
class SimSummary:
    singles_rate_start: float
    singles_rate_stop: float
    coincidence_rate: float
    fraction_overrange_start: float
    fraction_overrange_stop: float
    nontagged_percent_start: float
    nontagged_percent_stop: float
    decays_simulated: int
    model_time_s: float
    n_records: int
    truth_counts: dict

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SimResult:
    interval_ticks: np.ndarray
    tags: np.ndarray
    truth: np.ndarray
    summary: SimSummary

    @property
    def records(self):
        from .listmode import ListModeRecord

        return [ListModeRecord(int(t), int(g))
                for t, g in zip(self.interval_ticks, self.tags)]


# -- single-event API ------------------------------------------------------


class Photon(NamedTuple):
    kind: int           # KIND_DECAY / KIND_SINGLET / KIND_TRIPLET
    cos_theta: float    # direction cosine along the start->stop axis
    emit_time_ps: float


class EmittedPhotons(NamedTuple):
    positron: bool
    singlet: bool
    position_cm: float
    photons: tuple


class AvalancheHit(NamedTuple):
    depth_um: float
    amplitude_mV: float
    thickness_um: float


class Trigger(NamedTuple):
    time_ps: float
    overrange: bool


def sample_event(source: SourceSpec, geometry: GeometrySpec,
                 fractions: ChannelFractions, rng: np.random.Generator,
                 emission: EmissionModel = EmissionModel()) -> EmittedPhotons:
    """Sample one decay: the prompt photon plus, in the positron branch, the
    annihilation photons.

    Singlet photons are back to back along an isotropic axis. Triplet photons
    are coplanar at 120 degrees with a uniformly oriented plane, so each one
    is isotropic but no two of them are back to back.
    """
    del geometry  # positions are validated against it upstream
    u = rng.random(N_COLS)
    pos = source.position_cm + source.spread_cm * (u[2] - 0.5)
    photons = [Photon(KIND_DECAY, 2 * u[4] - 1, 0.0)]
    positron = bool(u[1] < POSITRON_BRANCH)
    singlet = bool(u[3] < fractions.f1)
    if positron:
        d = emission.positron_delay_mean_ps
        t_ann = -d * math.log1p(-u[8]) if d > 0 else 0.0
        if singlet:
            mu = 2 * u[5] - 1
            qm = 0.0
            if emission.qm_fwhm_ps > 0:
                qm = 0.5 * emission.qm_fwhm_ps * math.tan(math.pi * (u[9] - 0.5))
            for m in (mu, -mu):
                photons.append(Photon(KIND_SINGLET, m, t_ann + (qm if m > 0 else 0.0)))
        else:
            mu = 2 * u[5] - 1
            swing = TRIPLET_SIN * math.sqrt(1 - mu * mu) * math.cos(2 * math.pi * u[6])
            for m in (mu, -0.5 * mu - swing, -0.5 * mu + swing):
                photons.append(Photon(KIND_TRIPLET, m, t_ann))
    return EmittedPhotons(positron, positron and singlet, pos, tuple(photons))


def hits_detector(cos_theta: float, position_cm: float,
                  geometry: GeometrySpec) -> Optional[int]:
    """0 if the ray hits the start disk, 1 for the stop disk, else None."""
    R = geometry.active_radius_cm
    d_stop = geometry.separation_cm - position_cm
    if cos_theta > d_stop / math.hypot(d_stop, R):
        return 1
    if cos_theta < -position_cm / math.hypot(position_cm, R):
        return 0
    return None


def amplitude_of_depth(depth_um, mcp: McpSpec):
    """Vectorised pulse amplitude (mV) for avalanche start depths (um)."""
    n_coll = (mcp.thickness_um - np.asarray(depth_um)) / mcp.collision_step_um
    return mcp.single_electron_mV * np.exp(n_coll * math.log(mcp.secondary_yield))


def detect_photons(mcp: McpSpec, n: int, rng: np.random.Generator,
                   particle: str = "gamma"):
    """Vectorised :func:`detect_photon`: returns ``(detected, depth_um, V_mV)``
    for ``n`` incident photons (depth and V are NaN where undetected).

    Here ``mcp.efficiency`` is the conversion probability over the whole
    stack, before any discriminator threshold.
    """
    u = rng.random((n, 2))
    detected = u[:, 0] < mcp.efficiency
    depth_max = mcp.thickness_um if particle == "gamma" else max_penetration_depth(mcp)
    depth = np.where(detected, u[:, 1] * depth_max, np.nan)
    return detected, depth, amplitude_of_depth(depth, mcp)


def detect_photon(mcp: McpSpec, rng: np.random.Generator,
                  particle: str = "gamma") -> Optional[AvalancheHit]:
    """Bernoulli detection with uniform avalanche-start depth.

    Gamma photons start avalanches anywhere in the stack; electrons (test
    mode) only down to the maximum penetration depth.
    """
    if particle not in ("gamma", "electron"):
        raise ValueError(f"unknown particle {particle!r}")
    detected, depth, V = detect_photons(mcp, 1, rng, particle)
    if not detected[0]:
        return None
    return AvalancheHit(float(depth[0]), float(V[0]), mcp.thickness_um)


def walk_shift(V, elec: ElectronicsSpec):
    """Trigger delay of saturated pulses: zero up to the over-range bound,
    then rising linearly to ``walk_coefficient_ps`` at twice the bound."""
    V = np.asarray(V, dtype=float)
    vor = elec.overrange_mV
    frac = np.clip((V - vor) / vor, 0.0, 1.0)
    return elec.walk_coefficient_ps * frac


def electronics_response(depth_um, V, g_transit, g_jitter,
                         elec: ElectronicsSpec, thickness_um: float):
    """Vectorised :func:`apply_electronics` given standard-normal draws.

    Returns ``(kept, time_ps, overrange)``.
    """
    V = np.asarray(V, dtype=float)
    kept = V >= elec.threshold_mV
    transit = elec.transit_full_scale_ps * (thickness_um - depth_um) / thickness_um
    t = (transit + elec.transit_sigma_ps * g_transit
         + elec.jitter_sigma_ps * g_jitter
         + walk_shift(V, elec) + elec.tau_fixed_ps)
    return kept, t, V > elec.overrange_mV


def apply_electronics(hit: AvalancheHit, elec: ElectronicsSpec,
                      rng: np.random.Generator) -> Optional[Trigger]:
    if hit is None:
        return None
    g = rng.standard_normal(2)
    kept, t, over = electronics_response(hit.depth_um, hit.amplitude_mV, g[0], g[1],
                                         elec, hit.thickness_um)
    if not kept:
        return None
    return Trigger(float(t), bool(over))


def encode_tag(start_overrange: bool, stop_overrange: bool) -> int:
    """Bit 0 flags a start over-range, bit 1 a stop over-range."""
    return int(bool(start_overrange)) | (int(bool(stop_overrange)) << 1)


def encode_tags(start_overrange, stop_overrange):
    return (np.asarray(start_overrange, dtype=np.int8)
            | (np.asarray(stop_overrange, dtype=np.int8) << 1)).astype(np.int8)


def threshold_scan(mcp: McpSpec, thresholds_mV, n_photons: int, seed: int):
    """Independent detection run per threshold setting; returns the number
    of pulses above each threshold."""
    counts = []
    for i, vth in enumerate(thresholds_mV):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
        detected, _, V = detect_photons(mcp, n_photons, rng)
        counts.append(int(np.count_nonzero(detected & (V > vth))))
    return np.asarray(counts)


def trigger_depth(mcp: McpSpec, elec: ElectronicsSpec) -> float:
    """Deepest avalanche start (um) whose pulse still clears the threshold."""
    v1, vmax = mcp.single_electron_mV, mcp.v_max_mV
    vth = min(max(elec.threshold_mV, v1), vmax)
    return mcp.thickness_um - math.log(vth / v1) / mcp.gain_log_per_um


def threshold_acceptance(mcp: McpSpec, elec: ElectronicsSpec) -> float:
    """Fraction of stack conversions whose pulse clears the threshold."""
    return trigger_depth(mcp, elec) / mcp.thickness_um


# -- full simulation -------------------------------------------------------


def chunk_stream(master_seed: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.PCG64(ss))


def _simulate_chunk(args):
    config, chunk_index, n, backend = args
    rng = chunk_stream(config.master_seed, chunk_index)
    src, geom = config.source, config.geometry
    U = rng.random((n, N_COLS))
    spacing = -np.log1p(-U[:, COL_SPACING]) * (1e12 / src.activity_per_s)
    t_local = np.cumsum(spacing)

    rows, det, kind, offset = kernels.trace_decays(
        U, src.position_cm, src.spread_cm, geom.separation_cm,
        geom.active_radius_cm, config.fractions.f1,
        config.emission.qm_fwhm_ps, config.emission.positron_delay_mean_ps,
        C_LIGHT_CM_PER_PS, POSITRON_BRANCH, backend=backend)

    h = len(rows)
    uu = rng.random((h, 2))
    gg = rng.standard_normal((h, 2))
    is_stop = det.astype(bool)
    kept = np.zeros(h, dtype=bool)
    t_trig = np.zeros(h)
    over = np.zeros(h, dtype=bool)
    for flag, mcp, elec, extra in (
        (False, config.start_mcp, config.start_elec, 0.0),
        (True, config.stop_mcp, config.stop_elec, config.external_delay_ps),
    ):
        sel = is_stop == flag
        # efficiency counts triggers, so depths are drawn above threshold
        detected = uu[sel, 0] < mcp.efficiency
        depth = uu[sel, 1] * trigger_depth(mcp, elec)
        V = amplitude_of_depth(depth, mcp)
        k, t, o = electronics_response(depth, V, gg[sel, 0], gg[sel, 1], elec,
                                       mcp.thickness_um)
        kept[sel] = detected & k
        t_trig[sel] = offset[sel] + t + extra
        over[sel] = o
    return (chunk_index, float(t_local[-1]), rows[kept] + chunk_index * CHUNK_DECAYS,
            t_local[rows[kept]], det[kept], kind[kept], t_trig[kept], over[kept])


def _chunks(n_decays):
    n_chunks = -(-n_decays // CHUNK_DECAYS)
    for k in range(n_chunks):
        yield k, min(CHUNK_DECAYS, n_decays - k * CHUNK_DECAYS)


def run_simulation(config: ScenarioConfig, workers: int = 1,
                   backend: Optional[str] = None) -> SimResult:
    """Simulate ``config.n_decays`` decays and pair triggers into list-mode
    coincidence records."""
    config.validate()
    jobs = [(config, k, n, backend) for k, n in _chunks(int(config.n_decays))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    else:
        parts = [_simulate_chunk(j) for j in jobs]
    parts.sort(key=lambda p: p[0])

    base = np.concatenate([[0.0], np.cumsum([p[1] for p in parts])[:-1]])
    decay_idx = np.concatenate([p[2] for p in parts])
    t_decay = np.concatenate([b + p[3] for b, p in zip(base, parts)])
    det = np.concatenate([p[4] for p in parts])
    kind = np.concatenate([p[5] for p in parts])
    offset = np.concatenate([p[6] for p in parts])
    over = np.concatenate([p[7] for p in parts])

    order = np.lexsort((det, decay_idx, t_decay + offset))
    decay_idx, t_decay, det, kind, offset, over = (
        a[order] for a in (decay_idx, t_decay, det, kind, offset, over))
    i0, i1 = kernels.pair_triggers(t_decay + offset, det,
                                   config.coincidence_window_ps, backend=backend)

    interval = (t_decay[i1] - t_decay[i0]) + (offset[i1] - offset[i0])
    ticks = np.rint(interval / config.pta_tick_ps).astype(np.int64)
    tags = encode_tags(over[i0], over[i1])
    truth = _classify(decay_idx[i0], decay_idx[i1], kind[i0], kind[i1])

    model_time = config.n_decays / config.source.activity_per_s
    start = det == 0
    stop = ~start
    n_rec = len(ticks)
    summary = SimSummary(
        singles_rate_start=float(np.count_nonzero(start) / model_time),
        singles_rate_stop=float(np.count_nonzero(stop) / model_time),
        coincidence_rate=float(n_rec / model_time),
        fraction_overrange_start=_frac(over[start]),
        fraction_overrange_stop=_frac(over[stop]),
        nontagged_percent_start=100.0 * _frac(~over[i0]),
        nontagged_percent_stop=100.0 * _frac(~over[i1]),
        decays_simulated=int(config.n_decays),
        model_time_s=float(model_time),
        n_records=int(n_rec),
        truth_counts={name: int(np.count_nonzero(truth == code)) for name, code in
                      (("AA", TRUTH_AA), ("DA", TRUTH_DA), ("triplet", TRUTH_TRIPLET),
                       ("accidental", TRUTH_ACCIDENTAL))},
    )
    return SimResult(ticks, tags, truth, summary)


def _frac(mask) -> float:
    return float(np.mean(mask)) if len(mask) else 0.0


def _classify(d0, d1, k0, k1):
    truth = np.full(len(d0), TRUTH_ACCIDENTAL, dtype=np.int8)
    same = d0 == d1
    has_decay = (k0 == KIND_DECAY) | (k1 == KIND_DECAY)
    truth[same & has_decay] = TRUTH_DA
    truth[same & (k0 == KIND_SINGLET) & (k1 == KIND_SINGLET)] = TRUTH_AA
    truth[same & (k0 == KIND_TRIPLET) & (k1 == KIND_TRIPLET)] = TRUTH_TRIPLET
    return truth
