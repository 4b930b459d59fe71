"""Free-space distance estimation from received signal level."""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6371000.0

# free-space path loss constant for d in metres and f in MHz
FSPL_CONSTANT_DB = 27.55


@dataclass(frozen=True)
class SignalObservation:
    freq_mhz: float
    level_db: float

    def __post_init__(self):
        if not self.freq_mhz > 0:
            raise ValueError(f"frequency must be positive, got {self.freq_mhz} MHz")


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon_deg}")


def estimate_distance(obs: SignalObservation) -> float:
    """Distance in metres at which free-space loss equals ``|level_db|``."""
    exponent = (FSPL_CONSTANT_DB - 20.0 * math.log10(obs.freq_mhz) + abs(obs.level_db)) / 20.0
    return 10.0**exponent


def level_for_distance(distance_m: float, freq_mhz: float) -> float:
    """Inverse of :func:`estimate_distance`; returns the (negative) level in dB."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    if freq_mhz <= 0:
        raise ValueError("frequency must be positive")
    loss = 20.0 * math.log10(distance_m) + 20.0 * math.log10(freq_mhz) - FSPL_CONSTANT_DB
    return -loss


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    lat1, lat2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def distance_error(node: GeoPoint, gateway: GeoPoint, obs: SignalObservation) -> float:
    """Estimated minus measured distance; positive means overestimation."""
    return estimate_distance(obs) - great_circle_distance(node, gateway)
