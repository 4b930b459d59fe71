"""Synthetic gateway traces with counts known by construction."""

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

from lorakit.codec import build_data_frame
from lorakit.pathloss import GeoPoint, great_circle_distance, level_for_distance
from lorakit.traces import ReceptionRecord

T0 = datetime(2016, 5, 1, 12, 0, 0, tzinfo=timezone.utc)
CHANNELS = (868100000, 868300000, 868500000, 867100000)
SF_PATTERN = (7, 7, 7, 7, 8, 9, 10, 12)
FRAMES_PER_DEVICE = (300, 200, 100, 80, 50, 30, 20, 10, 5, 3, 1, 1)
GATEWAYS = {
    "gw-0": GeoPoint(52.0000, 4.3600),
    "gw-1": GeoPoint(52.0100, 4.3700),
    "gw-2": GeoPoint(51.9950, 4.3500),
    "gw-3": GeoPoint(52.0200, 4.3900),
}


@dataclass
class Truth:
    receptions: int = 0
    unique_frames: int = 0
    devices: int = 0
    gateways: int = 0
    reception_counts: Counter = field(default_factory=Counter)
    sf: Counter = field(default_factory=Counter)
    freq: Counter = field(default_factory=Counter)
    rssi: Counter = field(default_factory=Counter)
    frames_per_device: dict = field(default_factory=dict)
    # (dev_addr, fcnt, first reception time, gateway ids) per planted frame
    groups: list = field(default_factory=list)


def dev_addr(i):
    return bytes([0x10 + i, 0x00, 0x01, 0x26])


def thousand_record_trace():
    """800 unique frames from 12 devices, 175 of them heard by several gateways.

    Reception counts: 625 frames x1, 150 x2, 25 x3 -> 1000 records. The last
    frame of device 0 reuses an earlier (FCnt, payload) two hours later and must
    count as a separate frame.
    """
    truth = Truth()
    records = []
    plan = [(d, k) for d, n in enumerate(FRAMES_PER_DEVICE) for k in range(n)]
    gw_ids = list(GATEWAYS)
    for idx, (d, k) in enumerate(plan):
        n_rx = 3 if idx % 32 == 0 else 2 if idx % 32 in range(1, 7) else 1
        sf = SF_PATTERN[idx % len(SF_PATTERN)]
        freq = CHANNELS[idx % len(CHANNELS)]
        t = T0 + timedelta(seconds=10 * idx)
        fcnt = k
        if d == 0 and k == FRAMES_PER_DEVICE[0] - 1:
            fcnt, t = 0, T0 + timedelta(hours=2, seconds=10 * idx)
        raw = build_data_frame(dev_addr(d), fcnt, f"temp={20 + fcnt % 7}".encode(), 1).serialize()
        for r in range(n_rx):
            rssi = -120.0 + (idx * 3 + r) % 60
            records.append(ReceptionRecord(
                gateway_id=gw_ids[(idx + r) % len(gw_ids)],
                time_utc=t + timedelta(milliseconds=80 * r),
                freq_hz=freq, sf=sf, bw_hz=125000, rssi_dbm=rssi, snr_db=5.0 - r,
                raw_payload=raw, gateway_location=GATEWAYS[gw_ids[(idx + r) % len(gw_ids)]],
            ))
            truth.sf[sf] += 1
            truth.freq[freq] += 1
            truth.rssi[rssi] += 1
        truth.reception_counts[n_rx] += 1
        truth.groups.append((dev_addr(d), fcnt, t, tuple(gw_ids[(idx + r) % len(gw_ids)] for r in range(n_rx))))
    truth.receptions = len(records)
    truth.unique_frames = len(plan)
    truth.devices = len(FRAMES_PER_DEVICE)
    truth.gateways = len({r.gateway_id for r in records})
    truth.frames_per_device = {dev_addr(d): n for d, n in enumerate(FRAMES_PER_DEVICE)}
    return records, truth


def gps_trace(damping_db=0.0, with_location=True):
    """Nodes reporting their position as text, heard with free-space RSSI."""
    nodes = [GeoPoint(52.0 + 0.001 * i, 4.36 + 0.0013 * i) for i in range(1, 11)]
    records = []
    for i, node in enumerate(nodes):
        raw = build_data_frame(dev_addr(i), i, f"{node.lat_deg:.6f},{node.lon_deg:.6f}".encode(), 1).serialize()
        for j, (gw_id, gw) in enumerate(GATEWAYS.items()):
            freq = CHANNELS[i % 3]
            d = great_circle_distance(GeoPoint(round(node.lat_deg, 6), round(node.lon_deg, 6)), gw)
            level = level_for_distance(d, freq / 1e6) - damping_db
            records.append(ReceptionRecord(
                gateway_id=gw_id, time_utc=T0 + timedelta(seconds=30 * i, milliseconds=50 * j),
                freq_hz=freq, sf=7, bw_hz=125000, rssi_dbm=level, snr_db=3.0, raw_payload=raw,
                gateway_location=gw if with_location else None,
            ))
    return records
