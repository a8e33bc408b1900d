"""Radio-layer models for ground-to-air (G2A) and UAV-HAPS links.

G2A links use a sectorised ULA pattern (element gain plus array factor), an
altitude-dependent LoS probability and a LoS/NLoS mixture path loss. The
UAV-HAPS link is free-space with Rician small-scale fading and orthogonal
bandwidth/power shares.

All functions are pure. Angles are radians, powers are dBm unless a name
says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Reported instead of -inf at exact array-factor nulls.
DB_FLOOR = -300.0

PATTERN_MODES = ("linear", "squared", "literal")


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    value = np.asarray(value, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(value)
    return np.maximum(out, DB_FLOOR)


@dataclass(frozen=True)
class AntennaParams:
    """Per-sector BS antenna.

    ``pattern_mode`` selects how the element attenuations are formed:

    * ``"linear"``: ``12 * |angle| / beamwidth``, gain = peak - min(att, B_m)
    * ``"squared"``: 3GPP-style ``12 * (angle / beamwidth) ** 2``
    * ``"literal"``: linear attenuations with the sign exactly as printed,
      ``peak - min(-(att_az + att_el), B_m)``. Kept only for comparison;
      gain grows off boresight in this mode.
    """

    peak_element_gain_db: float = 8.0
    az_3db_rad: float = 65.0 * math.pi / 180.0
    el_3db_rad: float = 65.0 * math.pi / 180.0
    front_back_ratio_db: float = 30.0
    sidelobe_attenuation_db: float = 30.0
    num_elements: int = 8
    downtilt_rad: float = -10.0 * math.pi / 180.0
    pattern_mode: str = "linear"

    def __post_init__(self):
        if self.az_3db_rad <= 0 or self.el_3db_rad <= 0:
            raise ValueError("3 dB beamwidths must be positive")
        if self.num_elements < 1:
            raise ValueError("num_elements must be >= 1")
        if self.front_back_ratio_db <= 0 or self.sidelobe_attenuation_db <= 0:
            raise ValueError("front_back_ratio_db and sidelobe_attenuation_db must be positive")
        if self.pattern_mode not in PATTERN_MODES:
            raise ValueError(f"pattern_mode must be one of {PATTERN_MODES}")


@dataclass(frozen=True)
class Geometry:
    azimuth_rad: float
    elevation_rad: float
    distance_3d_m: float
    distance_2d_m: float
    uav_altitude_m: float

    def __post_init__(self):
        if not self.distance_3d_m >= self.distance_2d_m >= 0:
            raise ValueError("need distance_3d_m >= distance_2d_m >= 0")
        if self.uav_altitude_m <= 0:
            raise ValueError("uav_altitude_m must be positive")


@dataclass(frozen=True)
class PathLossParams:
    carrier_hz: float = 2.1e9
    excess_loss_los_db: float = 1.0
    excess_loss_nlos_db: float = 20.0

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")
        if self.excess_loss_nlos_db < self.excess_loss_los_db:
            raise ValueError("NLoS excess loss must be >= LoS excess loss")


@dataclass(frozen=True)
class GroundLinkParams:
    tx_power_dbm: float = 40.0
    noise_power_dbm: float = -104.0
    rx_power_min_dbm: float = -100.0
    rx_power_max_dbm: float = -80.0

    def __post_init__(self):
        if self.rx_power_min_dbm >= self.rx_power_max_dbm:
            raise ValueError("rx_power_min_dbm must be below rx_power_max_dbm")


@dataclass(frozen=True)
class HapsLinkParams:
    total_bandwidth_hz: float = 20e6
    max_uav_tx_power_w: float = 0.1
    noise_psd_w_per_hz: float = 10.0 ** ((-174.0 - 30.0) / 10.0)
    carrier_hz: float = 2e9
    antenna_gain_linear: float = 100.0
    rician_k: float = 10.0

    def __post_init__(self):
        for name in ("total_bandwidth_hz", "max_uav_tx_power_w", "noise_psd_w_per_hz",
                     "carrier_hz", "antenna_gain_linear", "rician_k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class HapsAllocation:
    bandwidth_fraction: float
    power_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.bandwidth_fraction <= 1.0:
            raise ValueError("bandwidth_fraction must be in [0, 1]")
        if not 0.0 <= self.power_fraction <= 1.0:
            raise ValueError("power_fraction must be in [0, 1]")


def check_allocations(allocs) -> None:
    """Raise if the bandwidth shares of HAPS-served UAVs sum above one."""
    total = sum(a.bandwidth_fraction for a in allocs)
    if total > 1.0 + 1e-12:
        raise ValueError(f"HAPS bandwidth fractions sum to {total} > 1")


class OutOfModelRange(ValueError):
    """Raised when an input falls outside the validity domain of a model."""


# --- antenna ---------------------------------------------------------------

def _attenuation(angle, beamwidth, cap, mode):
    ratio = np.abs(angle) / beamwidth
    if mode == "squared":
        ratio = ratio ** 2
    return np.minimum(12.0 * ratio, cap)


def azimuth_attenuation(phi, params: AntennaParams):
    return _attenuation(phi, params.az_3db_rad, params.front_back_ratio_db, params.pattern_mode)


def elevation_attenuation(zeta, params: AntennaParams):
    return _attenuation(zeta, params.el_3db_rad, params.sidelobe_attenuation_db, params.pattern_mode)


def element_gain(zeta, phi, params: AntennaParams):
    total = azimuth_attenuation(phi, params) + elevation_attenuation(zeta, params)
    if params.pattern_mode == "literal":
        return params.peak_element_gain_db - np.minimum(-total, params.front_back_ratio_db)
    return params.peak_element_gain_db - np.minimum(total, params.front_back_ratio_db)


def array_factor_db(zeta, params: AntennaParams):
    """ULA array factor in dB, ``20*log10|F|``.

    At ``sin(zeta) == sin(downtilt)`` the ratio is 0/0; its limit is
    ``sqrt(N)``. Exact nulls are reported as ``DB_FLOOR``.
    """
    n = params.num_elements
    u = np.sin(np.asarray(zeta, dtype=float)) - math.sin(params.downtilt_rad)
    num = np.sin(n * np.pi / 2.0 * u)
    den = math.sqrt(n) * np.sin(np.pi / 2.0 * u)
    # Below this |u| a second-order expansion is exact to double precision.
    small = np.abs(u) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small, 0.0, num / np.where(small, 1.0, den))
    x = np.pi / 2.0 * u
    limit = math.sqrt(n) * (1.0 - (n * n - 1.0) * x * x / 6.0)
    amp = np.abs(np.where(small, limit, ratio))
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(amp)
    out = np.maximum(out, DB_FLOOR)
    return float(out) if out.ndim == 0 else out


def radiation_pattern_db(geom: Geometry, params: AntennaParams) -> float:
    return float(element_gain(geom.elevation_rad, geom.azimuth_rad, params)
                 + array_factor_db(geom.elevation_rad, params))


# --- propagation -----------------------------------------------------------

def los_probability(geom: Geometry) -> float:
    """LoS probability from UAV altitude and horizontal BS distance.

    UAVs flying between 100 m and 300 m are always in LoS.
    """
    return los_probability_hd(geom.uav_altitude_m, geom.distance_2d_m)


def los_probability_hd(h: float, d: float) -> float:
    """:func:`los_probability` from altitude ``h`` and 2-D distance ``d``."""
    if 100.0 <= h <= 300.0:
        return 1.0
    log_h = math.log10(h)
    p1 = 4300.0 * log_h - 3800.0
    if p1 <= 0:
        raise OutOfModelRange(f"altitude {h} m gives non-positive p1={p1}")
    d1 = max(460.0 * log_h - 700.0, 18.0)
    if d <= d1:
        return 1.0
    return d1 / d + math.exp(-d / p1) * (1.0 - d1 / d)


def free_space_path_loss_db(distance_m, carrier_hz):
    distance_m = np.asarray(distance_m, dtype=float)
    if np.any(distance_m <= 0):
        raise ValueError("distance must be positive")
    out = 20.0 * np.log10(4.0 * np.pi * distance_m * carrier_hz / SPEED_OF_LIGHT)
    return float(out) if out.ndim == 0 else out


def mean_path_loss(geom: Geometry, pl: PathLossParams, p_los: float | None = None) -> float:
    """Expected path loss over the LoS/NLoS mixture, in dB.

    Each state is free-space loss over the 3-D distance plus a constant
    excess loss. ``p_los`` overrides the LoS probability model.
    """
    if geom.distance_3d_m <= 0:
        raise ValueError("distance_3d_m must be positive")
    if p_los is None:
        p_los = los_probability(geom)
    fspl = free_space_path_loss_db(geom.distance_3d_m, pl.carrier_hz)
    l_los = fspl + pl.excess_loss_los_db
    l_nlos = fspl + pl.excess_loss_nlos_db
    return l_los * p_los + l_nlos * (1.0 - p_los)


def received_power_dbm(geom: Geometry, ant: AntennaParams, pl: PathLossParams,
                       link: GroundLinkParams) -> float:
    return link.tx_power_dbm + radiation_pattern_db(geom, ant) - mean_path_loss(geom, pl)


def in_service_range(rx_power_dbm: float, link: GroundLinkParams) -> bool:
    return rx_power_dbm >= link.rx_power_min_dbm


def sinr(serving_rx_dbm: float, interferer_rx_dbm, noise_dbm: float) -> float:
    """Linear SINR from dBm powers; an empty interferer list gives the SNR."""
    interference = float(np.sum(db_to_linear(np.asarray(interferer_rx_dbm, dtype=float))))
    return float(db_to_linear(serving_rx_dbm) / (interference + db_to_linear(noise_dbm)))


def shannon_rate(bandwidth_hz: float, sinr_linear: float) -> float:
    return bandwidth_hz * math.log2(1.0 + sinr_linear)


# --- UAV-HAPS --------------------------------------------------------------

def haps_channel_gain(distance_m: float, params: HapsLinkParams, fading_sample: float) -> float:
    if distance_m <= 0:
        raise ValueError("distance_m must be positive")
    scale = SPEED_OF_LIGHT / (4.0 * math.pi * distance_m * params.carrier_hz)
    return params.antenna_gain_linear * scale * scale * fading_sample


def haps_rate(alloc: HapsAllocation, gain: float, params: HapsLinkParams) -> float:
    """Uplink rate in bit/s over the orthogonal HAPS channel."""
    b, p = alloc.bandwidth_fraction, alloc.power_fraction
    if b == 0.0 or p == 0.0:
        return 0.0
    bw = b * params.total_bandwidth_hz
    snr = p * params.max_uav_tx_power_w * gain / (bw * params.noise_psd_w_per_hz)
    return bw * math.log2(1.0 + snr)


def rician_power_sample(rng: np.random.Generator, k_factor: float) -> float:
    """Draw ``|h|^2`` for unit-mean Rician fading with K-factor ``k_factor``."""
    los = math.sqrt(k_factor / (k_factor + 1.0))
    sigma = math.sqrt(1.0 / (2.0 * (k_factor + 1.0)))
    re, im = rng.normal(0.0, sigma, size=2)
    return (los + re) ** 2 + im ** 2
