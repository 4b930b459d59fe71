"""LoRa time-on-air and EU868 regulatory capacity limits.

All durations are in seconds. ``pl_bytes`` is always the PHY payload length,
so callers modelling LoRaWAN traffic must add the 13 byte MAC overhead
themselves (see :data:`LORAWAN_OVERHEAD_BYTES`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

SECONDS_PER_DAY = 86400
LORAWAN_OVERHEAD_BYTES = 13


class RadioConfigError(ValueError):
    pass


class PayloadTooLarge(ValueError):
    pass


def _auto_low_dr_opt(sf: int, bw_hz: int) -> int:
    return 1 if sf in (11, 12) and bw_hz == 125000 else 0


@dataclass(frozen=True)
class RadioConfig:
    """PHY parameters of one LoRa transmission.

    ``cr`` is the coding-rate index (1 means 4/5). ``low_dr_opt`` is derived
    from ``sf``/``bw_hz`` when omitted; passing a value that disagrees with the
    rule (on for SF11/SF12 at 125 kHz, off otherwise) is rejected.
    """

    sf: int
    bw_hz: int = 125000
    cr: int = 1
    n_preamble: int = 8
    header_disabled: int = 0
    low_dr_opt: Optional[int] = None

    def __post_init__(self):
        if self.sf not in range(7, 13):
            raise RadioConfigError(f"sf must be in 7..12, got {self.sf}")
        if self.cr not in range(1, 5):
            raise RadioConfigError(f"cr must be in 1..4, got {self.cr}")
        if self.bw_hz <= 0:
            raise RadioConfigError(f"bw_hz must be positive, got {self.bw_hz}")
        if self.n_preamble < 0:
            raise RadioConfigError(f"n_preamble must be >= 0, got {self.n_preamble}")
        if self.header_disabled not in (0, 1):
            raise RadioConfigError("header_disabled must be 0 or 1")
        expected = _auto_low_dr_opt(self.sf, self.bw_hz)
        if self.low_dr_opt is None:
            object.__setattr__(self, "low_dr_opt", expected)
        elif self.low_dr_opt != expected:
            raise RadioConfigError(
                f"low_dr_opt must be {expected} for SF{self.sf} at {self.bw_hz} Hz"
            )


EU868_MAX_PAYLOAD = {7: 230, 8: 230, 9: 123, 10: 59, 11: 59, 12: 59}


@dataclass(frozen=True)
class RegionPlan:
    channels_hz: tuple = (868100000, 868300000, 868500000)
    duty_cycle: float = 0.01
    max_tx_dbm: float = 14
    max_payload_by_sf: Mapping[int, int] = field(
        default_factory=lambda: dict(EU868_MAX_PAYLOAD)
    )


EU868 = RegionPlan()


# EU 863-870 MHz data-rate table: index -> (modulation, sf, bw_hz, bit/s).
DATA_RATES = {
    0: ("LoRa", 12, 125000, 250),
    1: ("LoRa", 11, 125000, 440),
    2: ("LoRa", 10, 125000, 980),
    3: ("LoRa", 9, 125000, 1760),
    4: ("LoRa", 8, 125000, 3125),
    5: ("LoRa", 7, 125000, 5470),
    6: ("LoRa", 7, 250000, 11000),
    7: ("FSK", None, None, 50000),
    **{i: ("RFU", None, None, None) for i in range(8, 16)},
}


def config_for_data_rate(dr: int) -> RadioConfig:
    """RadioConfig for an EU868 data-rate index; FSK and RFU rows are rejected."""
    try:
        kind, sf, bw, _ = DATA_RATES[dr]
    except KeyError:
        raise RadioConfigError(f"unknown data rate DR{dr}") from None
    if kind != "LoRa":
        raise RadioConfigError(f"DR{dr} is {kind}, only LoRa rows have an airtime model")
    return RadioConfig(sf=sf, bw_hz=bw)


def indicative_bitrate(cfg: RadioConfig) -> int:
    for kind, sf, bw, rate in DATA_RATES.values():
        if kind == "LoRa" and sf == cfg.sf and bw == cfg.bw_hz:
            return rate
    raise RadioConfigError(f"no EU868 data rate for SF{cfg.sf} / {cfg.bw_hz} Hz")


def symbol_time(cfg: RadioConfig) -> float:
    return 2**cfg.sf / cfg.bw_hz


def preamble_time(cfg: RadioConfig) -> float:
    return (cfg.n_preamble + 4.25) * symbol_time(cfg)


def payload_symbols(cfg: RadioConfig, pl_bytes: int) -> int:
    """Number of payload symbols, CRC always on."""
    if pl_bytes < 0:
        raise ValueError(f"pl_bytes must be >= 0, got {pl_bytes}")
    num = 8 * pl_bytes - 4 * cfg.sf + 28 + 16 - 20 * cfg.header_disabled
    den = 4 * (cfg.sf - 2 * cfg.low_dr_opt)
    # integer ceiling; avoids float rounding at exact multiples
    beta = -(-num // den)
    return max(beta * (cfg.cr + 4), 0) + 8


def frame_airtime(cfg: RadioConfig, pl_bytes: int) -> float:
    return preamble_time(cfg) + payload_symbols(cfg, pl_bytes) * symbol_time(cfg)


def _check_payload(cfg: RadioConfig, pl_bytes: int, plan: RegionPlan) -> None:
    limit = plan.max_payload_by_sf.get(cfg.sf)
    if limit is not None and pl_bytes > limit:
        raise PayloadTooLarge(
            f"payload of {pl_bytes} bytes exceeds the SF{cfg.sf} limit of {limit} bytes"
        )


def frames_per_day(cfg: RadioConfig, pl_bytes: int, plan: RegionPlan = EU868) -> int:
    """Unconfirmed frames one node may send per day on a single channel."""
    _check_payload(cfg, pl_bytes, plan)
    return math.floor(SECONDS_PER_DAY * plan.duty_cycle / frame_airtime(cfg, pl_bytes))


def data_per_day(cfg: RadioConfig, pl_bytes: int, plan: RegionPlan = EU868) -> int:
    return frames_per_day(cfg, pl_bytes, plan) * pl_bytes
