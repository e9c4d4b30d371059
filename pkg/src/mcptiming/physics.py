"""Closed-form models for the two-detector annihilation-photon timing setup.

Units used throughout: geometry in cm, MCP dimensions in um, times in ps,
voltages in mV, capacitance in pF, rates in 1/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

ELECTRON_CHARGE_C = 1.602176634e-19
C_LIGHT_CM_PER_S = 2.99792458e10
C_LIGHT_CM_PER_PS = C_LIGHT_CM_PER_S * 1e-12

# photons per decay in the 90% positron branch: 2 (singlet), 3 (triplet)
POSITRON_BRANCH = 0.9
ALPHA = 2 * POSITRON_BRANCH
BETA = 3 * POSITRON_BRANCH

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class DomainError(ValueError):
    """An argument lies outside the domain of a closed-form model."""


@dataclass(frozen=True)
class GeometrySpec:
    separation_cm: float = 10.0
    active_radius_cm: float = 1.25

    def __post_init__(self):
        if not self.separation_cm > 0:
            raise DomainError("separation_cm must be > 0")
        if not self.active_radius_cm > 0:
            raise DomainError("active_radius_cm must be > 0")


@dataclass(frozen=True)
class SourceSpec:
    activity_per_s: float = 274_064.0
    position_cm: float = 5.0
    spread_cm: float = 0.0
    pickoff_fraction: float = 0.0

    def violations(self, geom: GeometrySpec) -> list[str]:
        out = []
        L = geom.separation_cm
        if not self.activity_per_s > 0:
            out.append("source.activity_per_s must be > 0")
        if not 0 < self.position_cm < L:
            out.append(f"source.position_cm must lie in (0, {L})")
        if not self.spread_cm >= 0:
            out.append("source.spread_cm must be >= 0")
        elif self.spread_cm / 2 > min(self.position_cm, L - self.position_cm):
            out.append("source.spread_cm extends past a detector face")
        if not 0 <= self.pickoff_fraction <= 1:
            out.append("source.pickoff_fraction must lie in [0, 1]")
        return out


@dataclass(frozen=True)
class ChannelFractions:
    """Fractions of annihilations through the two-photon (f1) and
    three-photon (f3) channels."""

    f1: float
    f3: float

    def __post_init__(self):
        if not (0 <= self.f1 <= 1 and 0 <= self.f3 <= 1):
            raise DomainError("channel fractions must lie in [0, 1]")
        if abs(self.f1 + self.f3 - 1.0) > 1e-12:
            raise DomainError("f1 + f3 must equal 1")

    @classmethod
    def from_f1(cls, f1: float) -> "ChannelFractions":
        return cls(f1, 1.0 - f1)

    @property
    def bracket(self) -> float:
        return 1.0 + ALPHA * self.f1 + BETA * self.f3


@dataclass(frozen=True)
class McpSpec:
    pore_diameter_um: float = 10.0
    bias_angle_deg: float = 8.0
    thickness_um: float = 800.0
    collision_step_um: float = 800.0 / 44
    secondary_yield: float = 1.4
    capacitance_pF: float = 5.0
    efficiency: float = 0.007

    def violations(self, prefix: str = "mcp") -> list[str]:
        out = []
        if not self.pore_diameter_um > 0:
            out.append(f"{prefix}.pore_diameter_um must be > 0")
        if not 0 < self.bias_angle_deg < 90:
            out.append(f"{prefix}.bias_angle_deg must lie in (0, 90)")
        if not self.thickness_um > 0:
            out.append(f"{prefix}.thickness_um must be > 0")
        if not self.collision_step_um > 0:
            out.append(f"{prefix}.collision_step_um must be > 0")
        if not self.secondary_yield > 1:
            out.append(f"{prefix}.secondary_yield must be > 1")
        if not self.capacitance_pF > 0:
            out.append(f"{prefix}.capacitance_pF must be > 0")
        if not 0 <= self.efficiency <= 1:
            out.append(f"{prefix}.efficiency must lie in [0, 1]")
        return out

    @property
    def single_electron_mV(self) -> float:
        return ELECTRON_CHARGE_C / (self.capacitance_pF * 1e-12) * 1e3

    @property
    def gain_log_per_um(self) -> float:
        """ln(gain) accumulated per um of avalanche path."""
        return math.log(self.secondary_yield) / self.collision_step_um

    @property
    def max_electrons(self) -> float:
        return self.secondary_yield ** (self.thickness_um / self.collision_step_um)

    @property
    def v_max_mV(self) -> float:
        return pulse_amplitude(0.0, self)


@dataclass(frozen=True)
class ErrorBudget:
    """FWHM contributions in ps; the first three are per channel."""

    jitter_ps: float = 38.0
    walk_ps: float = 45.0
    tts_ps: float = 52.0
    source_ps: float = 47.0

    def __post_init__(self):
        if min(self.jitter_ps, self.walk_ps, self.tts_ps, self.source_ps) < 0:
            raise DomainError("error budget components must be >= 0")


# -- geometry and rates ----------------------------------------------------


def _disk_solid_angle(d: float, R: float) -> float:
    return 2 * math.pi * (1 - d / math.sqrt(d * d + R * R))


def solid_angles(geom: GeometrySpec, s: float) -> tuple[float, float]:
    """Solid angles (sr) of the start and stop detector disks seen from an
    on-axis point a distance ``s`` from the start detector."""
    L = geom.separation_cm
    if not 0 < s < L:
        raise DomainError(f"source position {s} outside (0, {L})")
    R = geom.active_radius_cm
    return _disk_solid_angle(s, R), _disk_solid_angle(L - s, R)


def two_photon_fraction(n: float) -> ChannelFractions:
    """Channel fractions when a fraction ``n`` of annihilations is direct or
    pick-off (two-photon); the remainder forms positronium in the 1:3
    singlet:triplet spin ratio."""
    if not 0 <= n <= 1:
        raise DomainError("pick-off fraction must lie in [0, 1]")
    f3 = 0.75 * (1 - n)
    return ChannelFractions(1 - f3, f3)


def singles_rate(eps: float, omega: float, fr: ChannelFractions, R0: float) -> float:
    if not 0 <= eps <= 1:
        raise DomainError("efficiency must lie in [0, 1]")
    return eps * omega / (4 * math.pi) * fr.bracket * R0


def efficiency_from_singles(
    rate_measured: float, omega: float, fr: ChannelFractions, R0: float
) -> float:
    if not rate_measured > 0:
        raise DomainError("measured rate must be > 0")
    if omega <= 0 or R0 <= 0:
        raise DomainError("solid angle and activity must be > 0")
    return rate_measured / (omega / (4 * math.pi) * fr.bracket * R0)


@dataclass(frozen=True)
class CoincidenceRates:
    R_AA: float
    R_DA: float
    R_total: float
    swapped: bool = False


def coincidence_rates(
    eps_start: float,
    eps_stop: float,
    geom: GeometrySpec,
    s: float,
    fr: ChannelFractions,
    R0: float,
) -> CoincidenceRates:
    """Annihilation/annihilation and decay/annihilation coincidence rates.

    The AA expression assumes the start detector is the nearer one. When
    ``s > L/2`` the detector roles are swapped and ``swapped`` is set.
    """
    om_start, om_stop = solid_angles(geom, s)
    swapped = s > geom.separation_cm / 2
    if swapped:
        om_start, om_stop = om_stop, om_start
        eps_start, eps_stop = eps_stop, eps_start
    a_start = om_start / (4 * math.pi)
    a_stop = om_stop / (4 * math.pi)
    r_aa = eps_start * eps_stop * a_stop * ALPHA * fr.f1 * R0
    r_da = 2 * eps_start * a_start * R0 * eps_stop * a_stop * (ALPHA * fr.f1 + BETA * fr.f3)
    return CoincidenceRates(r_aa, r_da, r_aa + r_da, swapped)


def expected_centroid(
    geom: GeometrySpec, s: float, tau_delay: float = 0.0, tau_start: float = 0.0,
    tau_stop: float = 0.0,
) -> float:
    """Centroid (ps) of the stop-minus-start timing peak."""
    L = geom.separation_cm
    if not 0 < s < L:
        raise DomainError(f"source position {s} outside (0, {L})")
    return (L - 2 * s) / C_LIGHT_CM_PER_PS + (tau_stop - tau_start) + tau_delay


# -- MCP avalanche model ---------------------------------------------------


def max_penetration_depth(mcp: McpSpec) -> float:
    """Deepest point (um) a normally incident electron reaches in a channel."""
    theta = mcp.bias_angle_deg
    if not 0 < theta < 90:
        raise DomainError("bias angle must lie in (0, 90) degrees")
    return mcp.pore_diameter_um / math.tan(math.radians(theta))


def pulse_amplitude(x: float, mcp: McpSpec) -> float:
    """Anode pulse amplitude (mV) for an avalanche starting at depth ``x``
    (um from the front face)."""
    if not 0 <= x <= mcp.thickness_um:
        raise DomainError(f"depth {x} outside [0, {mcp.thickness_um}] um")
    n_coll = (mcp.thickness_um - x) / mcp.collision_step_um
    return mcp.single_electron_mV * mcp.secondary_yield**n_coll


def avalanche_position(V: float, mcp: McpSpec) -> float:
    """Inverse of :func:`pulse_amplitude`."""
    v1 = mcp.single_electron_mV
    vmax = mcp.v_max_mV
    # tolerate round-off at the range ends
    if not v1 * (1 - 1e-12) <= V <= vmax * (1 + 1e-12):
        raise DomainError(f"amplitude {V} mV outside [{v1}, {vmax}]")
    x = mcp.thickness_um - math.log(V / v1) / mcp.gain_log_per_um
    return min(max(x, 0.0), mcp.thickness_um)


def phd_density(V: float, mcp: McpSpec, A0: float) -> float:
    """Pulse-height density for uniform avalanche-start probability ``A0``
    per um. Falls as 1/V."""
    if not V > 0:
        raise DomainError("amplitude must be > 0")
    return A0 / mcp.gain_log_per_um / V


def phd_normalization(mcp: McpSpec) -> float:
    """``A0`` that makes :func:`phd_density` integrate to one over
    [single-electron amplitude, V_max]."""
    return mcp.gain_log_per_um / math.log(mcp.v_max_mV / mcp.single_electron_mV)


def threshold_count_curve(V_th: float, C0: float, D0: float) -> float:
    """Count rate above threshold: ``C0 * (D0 - ln V_th)``, clamped at 0."""
    if not V_th > 0:
        raise DomainError("threshold must be > 0")
    return max(0.0, C0 * (D0 - math.log(V_th)))


def threshold_curve_params(mcp: McpSpec, A0: float, B0: float = 1.0) -> tuple[float, float]:
    """(C0, D0) of the threshold curve implied by an MCP model, with the
    threshold expressed in mV."""
    return B0 * A0 / mcp.gain_log_per_um, math.log(mcp.v_max_mV)


def selection_window_width(V: float, dV: float, mcp: McpSpec) -> float:
    """Depth range (um) selected by accepting amplitudes in [V, V + dV]."""
    if not V > 0:
        raise DomainError("amplitude must be > 0")
    if dV < 0:
        raise DomainError("window width must be >= 0")
    return math.log((V + dV) / V) / mcp.gain_log_per_um


def quadrature_budget(budget: ErrorBudget, qm: float = 0.0) -> float:
    """Total expected FWHM (ps); per-channel terms enter twice."""
    if qm < 0:
        raise DomainError("quantum term must be >= 0")
    return math.sqrt(
        qm**2
        + 2 * budget.walk_ps**2
        + 2 * budget.tts_ps**2
        + 2 * budget.jitter_ps**2
        + budget.source_ps**2
    )


def source_location_term(spread_cm: float) -> float:
    """Timing spread (ps) from an annihilation-location range of full width
    ``spread_cm``."""
    return 2 * spread_cm / C_LIGHT_CM_PER_PS
