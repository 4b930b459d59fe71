"""Monte-Carlo model of a single half-duplex LoRaWAN gateway.

One window of ``window_s`` seconds carries ``packets_per_window`` uplinks with
start time, SF and channel drawn uniformly. Two uplinks are lost together when
their on-air intervals ``[start, start + airtime)`` intersect on the same
channel and SF; there is no capture effect. Confirmed uplinks that survive are
acknowledged ``rx1_delay_s`` after they end with a 13 byte downlink on the same
channel and SF. While the gateway transmits it hears nothing, on any channel.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .radio import EU868, LORAWAN_OVERHEAD_BYTES, RadioConfig, RegionPlan, frame_airtime


class Direction(str, Enum):
    UPLINK = "uplink"
    DOWNLINK_ACK = "downlink-ack"


class Fate(str, Enum):
    DELIVERED = "delivered"
    COLLIDED = "collided"
    LOST_GATEWAY_BUSY = "lost-gateway-busy"
    ACK_DROPPED = "ack-dropped"


UPLINK_FATES = (Fate.DELIVERED, Fate.COLLIDED, Fate.LOST_GATEWAY_BUSY)

# ACK frame: MAC header only, no application payload
ACK_FRAME_BYTES = 13


@dataclass
class TransmissionEvent:
    start_s: float
    airtime_s: float
    channel_hz: int
    sf: int
    direction: Direction = Direction.UPLINK
    wants_ack: bool = False
    fate: Optional[Fate] = None

    @property
    def end_s(self) -> float:
        return self.start_s + self.airtime_s

    def overlaps(self, other: "TransmissionEvent") -> bool:
        return self.start_s < other.end_s and other.start_s < self.end_s


@dataclass(frozen=True)
class SimConfig:
    packets_per_window: int
    window_s: float = 60.0
    payload_bytes: int = 1
    overhead_bytes: int = LORAWAN_OVERHEAD_BYTES
    confirmed_fraction: float = 0.0
    rx1_delay_s: float = 1.0
    channels: tuple = EU868.channels_hz
    sfs: tuple = (7, 8, 9, 10, 11, 12)
    seed: int = 0
    trials: int = 1
    plan: RegionPlan = EU868
    # "received": only decoded confirmed uplinks are ACKed; "all": every
    # confirmed uplink costs an ACK (upper bound on gateway airtime)
    ack_policy: str = "received"

    def __post_init__(self):
        if self.packets_per_window < 0:
            raise ValueError("packets_per_window must be >= 0")
        if not 0.0 <= self.confirmed_fraction <= 1.0:
            raise ValueError("confirmed_fraction must lie in [0, 1]")
        if not self.window_s > 0:
            raise ValueError("window_s must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.ack_policy not in ("received", "all"):
            raise ValueError(f"unknown ack_policy {self.ack_policy!r}")
        if not self.channels or not self.sfs:
            raise ValueError("channels and sfs must be non-empty")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "sfs", tuple(self.sfs))


@dataclass
class SimReport:
    """Outcome pooled over all trials of one configuration.

    Rates are ratios of pooled counts, so SFs that happen to be empty in a
    single window do not bias the mean.
    """

    packets_per_window: int
    confirmed_fraction: float
    trials: int
    window_s: float
    uplinks: int = 0
    fate_counts: dict = field(default_factory=dict)
    uplinks_by_sf: dict = field(default_factory=dict)
    collided_by_sf: dict = field(default_factory=dict)
    lost_by_sf: dict = field(default_factory=dict)
    gateway_tx_time_s: float = 0.0
    acks_sent: int = 0
    acks_dropped: int = 0
    duty_cycle: float = EU868.duty_cycle

    @property
    def collision_rate_by_sf(self) -> dict:
        return {sf: _ratio(self.collided_by_sf.get(sf, 0), n) for sf, n in self.uplinks_by_sf.items()}

    @property
    def loss_rate_by_sf(self) -> dict:
        return {sf: _ratio(self.lost_by_sf.get(sf, 0), n) for sf, n in self.uplinks_by_sf.items()}

    @property
    def collision_rate(self) -> float:
        return _ratio(self.fate_counts.get(Fate.COLLIDED, 0), self.uplinks)

    @property
    def loss_rate(self) -> float:
        lost = self.fate_counts.get(Fate.COLLIDED, 0) + self.fate_counts.get(Fate.LOST_GATEWAY_BUSY, 0)
        return _ratio(lost, self.uplinks)

    @property
    def gateway_airtime_fraction(self) -> float:
        return self.gateway_tx_time_s / (self.window_s * self.trials)

    @property
    def duty_violation(self) -> bool:
        return self.gateway_airtime_fraction > self.duty_cycle

    def add_window(self, uplinks: Sequence[TransmissionEvent], acks: Sequence[TransmissionEvent]) -> None:
        for ev in uplinks:
            self.uplinks += 1
            self.fate_counts[ev.fate] = self.fate_counts.get(ev.fate, 0) + 1
            self.uplinks_by_sf[ev.sf] = self.uplinks_by_sf.get(ev.sf, 0) + 1
            if ev.fate is Fate.COLLIDED:
                self.collided_by_sf[ev.sf] = self.collided_by_sf.get(ev.sf, 0) + 1
            if ev.fate is not Fate.DELIVERED:
                self.lost_by_sf[ev.sf] = self.lost_by_sf.get(ev.sf, 0) + 1
        for ack in acks:
            if ack.fate is Fate.ACK_DROPPED:
                self.acks_dropped += 1
            else:
                self.acks_sent += 1
                self.gateway_tx_time_s += ack.airtime_s


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def uplink_airtime(cfg: SimConfig, sf: int) -> float:
    return frame_airtime(RadioConfig(sf=sf), cfg.payload_bytes + cfg.overhead_bytes)


def ack_airtime(sf: int) -> float:
    return frame_airtime(RadioConfig(sf=sf), ACK_FRAME_BYTES)


def generate_traffic(cfg: SimConfig, rng: np.random.Generator) -> list:
    """Draw one window of uplinks in packet order.

    Each packet consumes one row of four uniforms (start, SF, channel, ack), so
    the first ``k`` packets of a window do not depend on how many follow.
    """
    n = cfg.packets_per_window
    u = rng.random((n, 4))
    sf_idx = np.minimum((u[:, 1] * len(cfg.sfs)).astype(int), len(cfg.sfs) - 1)
    ch_idx = np.minimum((u[:, 2] * len(cfg.channels)).astype(int), len(cfg.channels) - 1)
    airtimes = {sf: uplink_airtime(cfg, sf) for sf in cfg.sfs}
    events = []
    for i in range(n):
        sf = cfg.sfs[sf_idx[i]]
        events.append(
            TransmissionEvent(
                start_s=float(u[i, 0] * cfg.window_s),
                airtime_s=airtimes[sf],
                channel_hz=cfg.channels[ch_idx[i]],
                sf=sf,
                wants_ack=bool(u[i, 3] < cfg.confirmed_fraction),
            )
        )
    return events


def detect_collisions(events: Sequence[TransmissionEvent]) -> Sequence[TransmissionEvent]:
    """Mark every uplink collided or delivered, in place; returns ``events``.

    Within one (channel, SF) group sorted by start, packet ``i`` overlaps an
    earlier packet iff the running maximum end time before it exceeds its
    start, and a later packet iff the next start precedes its end.
    """
    n = len(events)
    if n == 0:
        return events
    start = np.fromiter((e.start_s for e in events), float, n)
    end = np.fromiter((e.end_s for e in events), float, n)
    chan = np.fromiter((e.channel_hz for e in events), np.int64, n)
    sf = np.fromiter((e.sf for e in events), np.int64, n)

    order = np.lexsort((start, sf, chan))
    s, e = start[order], end[order]
    key_change = np.ones(n, dtype=bool)
    key_change[1:] = (chan[order][1:] != chan[order][:-1]) | (sf[order][1:] != sf[order][:-1])

    hit = np.zeros(n, dtype=bool)
    # later neighbour in the same group starts before this one ends
    hit[:-1] |= ~key_change[1:] & (s[1:] < e[:-1])
    # running max of earlier ends within the group
    prev_max = np.full(n, -np.inf)
    for g_start, g_stop in _group_bounds(key_change):
        if g_stop - g_start > 1:
            prev_max[g_start + 1 : g_stop] = np.maximum.accumulate(e[g_start : g_stop - 1])
    hit |= prev_max > s

    collided = np.empty(n, dtype=bool)
    collided[order] = hit
    for ev, c in zip(events, collided):
        ev.fate = Fate.COLLIDED if c else Fate.DELIVERED
    return events


def _group_bounds(key_change: np.ndarray):
    starts = np.flatnonzero(key_change)
    stops = np.append(starts[1:], len(key_change))
    return zip(starts.tolist(), stops.tolist())


def schedule_acks(cfg: SimConfig, uplinks: Sequence[TransmissionEvent]) -> list:
    """Apply the half-duplex gateway to collision-resolved uplinks.

    ACK candidates are decided in order of their start time. Every gateway
    transmission that could overlap a confirmed uplink starts before that
    uplink ends, hence before its own ACK would start, so it is already
    decided when the uplink is examined. Returns all ACK events, sent and
    dropped.
    """
    ack_all = cfg.ack_policy == "all"
    candidates = sorted(
        (ev for ev in uplinks if ev.wants_ack and (ack_all or ev.fate is Fate.DELIVERED)),
        key=lambda ev: ev.end_s + cfg.rx1_delay_s,
    )
    acks = []
    sent = []  # accepted gateway transmissions, increasing start
    for up in candidates:
        if any(tx.overlaps(up) for tx in sent):
            if up.fate is Fate.DELIVERED:
                up.fate = Fate.LOST_GATEWAY_BUSY
            if not ack_all:
                continue
        ack = TransmissionEvent(
            start_s=up.end_s + cfg.rx1_delay_s,
            airtime_s=ack_airtime(up.sf),
            channel_hz=up.channel_hz,
            sf=up.sf,
            direction=Direction.DOWNLINK_ACK,
        )
        if any(tx.start_s <= ack.start_s < tx.end_s for tx in sent):
            ack.fate = Fate.ACK_DROPPED
        else:
            ack.fate = Fate.DELIVERED
            sent.append(ack)
        acks.append(ack)

    if sent:
        n = len(uplinks)
        up_start = np.fromiter((u.start_s for u in uplinks), float, n)
        up_end = np.fromiter((u.end_s for u in uplinks), float, n)
        busy = np.zeros(n, dtype=bool)
        for tx in sent:
            busy |= (up_start < tx.end_s) & (tx.start_s < up_end)
        for i in np.flatnonzero(busy):
            if uplinks[i].fate is Fate.DELIVERED:
                uplinks[i].fate = Fate.LOST_GATEWAY_BUSY
    return acks


def run_window(cfg: SimConfig, rng: np.random.Generator):
    """One window: traffic, collisions, then the gateway's ACK schedule."""
    uplinks = generate_traffic(cfg, rng)
    detect_collisions(uplinks)
    acks = schedule_acks(cfg, uplinks) if cfg.confirmed_fraction > 0 else []
    return uplinks, acks


def _new_report(cfg: SimConfig) -> SimReport:
    return SimReport(
        packets_per_window=cfg.packets_per_window,
        confirmed_fraction=cfg.confirmed_fraction,
        trials=cfg.trials,
        window_s=cfg.window_s,
        uplinks_by_sf={sf: 0 for sf in cfg.sfs},
        duty_cycle=cfg.plan.duty_cycle,
    )


def simulate_with_confirmations(cfg: SimConfig) -> SimReport:
    report = _new_report(cfg)
    for t in range(cfg.trials):
        uplinks, acks = run_window(cfg, trial_rng(cfg.seed, t))
        report.add_window(uplinks, acks)
    return report


def simulate_uplink_collisions(cfg: SimConfig) -> SimReport:
    if cfg.confirmed_fraction != 0:
        raise ValueError("simulate_uplink_collisions requires confirmed_fraction == 0")
    return simulate_with_confirmations(cfg)


def sweep_seed(base_seed: int, index: int) -> int:
    return base_seed + index


def sweep(
    base: SimConfig,
    packets: Iterable[int],
    confirmed: Iterable[float] = (0.0,),
    workers: int = 1,
) -> list:
    """One report per (n, p) grid point, n-major.

    Grid point ``i`` runs with seed ``base.seed + i``, so a one-point grid is
    the same as a direct call with ``base``.
    """
    grid = list(itertools.product(list(packets), list(confirmed)))
    if not grid:
        raise ValueError("empty sweep grid")
    configs = [
        replace(base, packets_per_window=n, confirmed_fraction=p, seed=sweep_seed(base.seed, i))
        for i, (n, p) in enumerate(grid)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(simulate_with_confirmations, configs))
    return [simulate_with_confirmations(c) for c in configs]


def fate_summary(events: Iterable[TransmissionEvent]) -> Counter:
    return Counter(ev.fate for ev in events)
