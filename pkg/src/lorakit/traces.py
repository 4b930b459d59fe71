"""Gateway reception traces: ingest, de-duplicate and summarise.

Trace files hold one JSON object per line::

    {"gateway_id": "gw-1", "time_utc": "2016-05-01T12:00:00.123Z",
     "freq_hz": 868100000, "sf": 7, "bw_hz": 125000, "rssi_dbm": -97.0,
     "snr_db": 7.5, "payload_b64": "QAEC...", "gw_lat": 52.0, "gw_lon": 4.3}

``gw_lat``/``gw_lon`` are optional.
"""

from __future__ import annotations

import base64
import binascii
import csv
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .codec import GENERIC_KEY, FrameError, OpaqueFrame, PhyFrame, decode_generic, parse_phy_payload
from .pathloss import GeoPoint, SignalObservation, distance_error

log = logging.getLogger(__name__)

DEFAULT_DEDUP_WINDOW_S = 5.0
RULESET_VERSION = "1"

REQUIRED_FIELDS = ("gateway_id", "time_utc", "freq_hz", "sf", "bw_hz", "rssi_dbm", "snr_db", "payload_b64")


@dataclass(frozen=True)
class ReceptionRecord:
    gateway_id: str
    time_utc: datetime
    freq_hz: int
    sf: int
    bw_hz: int
    rssi_dbm: float
    snr_db: float
    raw_payload: bytes
    gateway_location: Optional[GeoPoint] = None

    def __post_init__(self):
        if self.sf not in range(7, 13):
            raise ValueError(f"sf must be in 7..12, got {self.sf}")
        if self.freq_hz <= 0:
            raise ValueError("freq_hz must be positive")

    def to_json(self) -> str:
        obj = {
            "gateway_id": self.gateway_id,
            "time_utc": format_time(self.time_utc),
            "freq_hz": self.freq_hz,
            "sf": self.sf,
            "bw_hz": self.bw_hz,
            "rssi_dbm": self.rssi_dbm,
            "snr_db": self.snr_db,
            "payload_b64": base64.b64encode(self.raw_payload).decode("ascii"),
        }
        if self.gateway_location is not None:
            obj["gw_lat"] = self.gateway_location.lat_deg
            obj["gw_lon"] = self.gateway_location.lon_deg
        return json.dumps(obj)


def parse_time(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    t = datetime.fromisoformat(text)
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def format_time(t: datetime) -> str:
    return t.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def parse_record(line: str) -> ReceptionRecord:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    loc = None
    if obj.get("gw_lat") is not None and obj.get("gw_lon") is not None:
        loc = GeoPoint(float(obj["gw_lat"]), float(obj["gw_lon"]))
    for k in ("freq_hz", "sf", "bw_hz"):
        if isinstance(obj[k], bool) or not isinstance(obj[k], int):
            raise ValueError(f"{k} must be an integer")
    return ReceptionRecord(
        gateway_id=str(obj["gateway_id"]),
        time_utc=parse_time(obj["time_utc"]),
        freq_hz=obj["freq_hz"],
        sf=obj["sf"],
        bw_hz=obj["bw_hz"],
        rssi_dbm=float(obj["rssi_dbm"]),
        snr_db=float(obj["snr_db"]),
        raw_payload=base64.b64decode(obj["payload_b64"], validate=True),
        gateway_location=loc,
    )


def ingest(lines: Iterable[str]):
    """Parse trace lines; returns ``(records, skipped)``.

    Blank lines are ignored; any other line that fails to parse is counted in
    ``skipped`` and dropped.
    """
    records, skipped = [], 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(parse_record(line))
        except (ValueError, TypeError, binascii.Error) as exc:
            log.debug("line %d skipped: %s", lineno, exc)
            skipped += 1
    return records, skipped


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return ingest(fh)


def write_trace(path, records: Iterable[ReceptionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


@dataclass
class UniqueFrame:
    dev_addr: Optional[bytes]
    fcnt: Optional[int]
    payload: bytes
    receptions: list = field(default_factory=list)

    @property
    def first(self) -> ReceptionRecord:
        return self.receptions[0]

    @property
    def frame(self):
        try:
            return parse_phy_payload(self.payload)
        except FrameError:
            return None


def _frame_key(raw: bytes):
    try:
        frame = parse_phy_payload(raw)
    except FrameError:
        return None, None, ("raw", raw)
    if isinstance(frame, OpaqueFrame):
        return None, None, ("raw", raw)
    return frame.dev_addr, frame.fcnt, (frame.dev_addr, frame.fcnt, raw)


def deduplicate(records: Sequence[ReceptionRecord], window_s: float = DEFAULT_DEDUP_WINDOW_S) -> list:
    """Group receptions of the same frame by several gateways.

    Records with equal DevAddr, FCnt and payload join the open group for that
    key while they lie within ``window_s`` of its earliest reception; later
    ones (frame-counter reuse) start a new group. Frames are returned by
    earliest reception time.
    """
    order = sorted(range(len(records)), key=lambda i: (records[i].time_utc, i))
    open_groups = {}
    frames = []
    for i in order:
        rec = records[i]
        dev_addr, fcnt, key = _frame_key(rec.raw_payload)
        group = open_groups.get(key)
        if group is None or (rec.time_utc - group.first.time_utc).total_seconds() > window_s:
            group = UniqueFrame(dev_addr=dev_addr, fcnt=fcnt, payload=rec.raw_payload)
            open_groups[key] = group
            frames.append(group)
        group.receptions.append(rec)
    return frames


def reception_count_distribution(frames: Iterable[UniqueFrame]) -> dict:
    """Map from number of receiving gateways to number of frames."""
    return dict(sorted(Counter(len(f.receptions) for f in frames).items()))


# --- histograms -------------------------------------------------------------

METRICS = ("rssi", "snr", "payload_size", "sf", "freq", "frames_per_device")
DISCRETE_METRICS = ("sf", "freq")
DEFAULT_WIDTH = {"rssi": 1.0, "snr": 1.0, "payload_size": 1.0}


@dataclass
class Histogram:
    metric: str
    edges: Optional[list]  # None for discrete metrics
    labels: list
    counts: list
    pdf: bool = False
    params: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def values(self) -> list:
        if not self.pdf:
            return list(self.counts)
        total = self.total
        return [c / total for c in self.counts]

    def rows(self):
        for i, (label, count, value) in enumerate(zip(self.labels, self.counts, self.values)):
            if self.edges is None:
                yield label, label, count, value
            else:
                yield self.edges[i], self.edges[i + 1], count, value

    def write_csv(self, fh) -> None:
        meta = " ".join(f"{k}={v}" for k, v in {"metric": self.metric, "pdf": self.pdf, **self.params}.items())
        fh.write(f"# {meta}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "value"])
        for lo, hi, count, value in self.rows():
            w.writerow([_fmt(lo), _fmt(hi), count, _fmt(value)])


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def payload_size(raw: bytes) -> int:
    """FRMPayload length for data frames, whole PHY payload otherwise."""
    try:
        frame = parse_phy_payload(raw)
    except FrameError:
        return len(raw)
    if isinstance(frame, PhyFrame):
        return len(frame.frm_payload)
    return len(raw)


def uniform_bins(values: np.ndarray, width: float):
    """Half-open bins ``[lo + k*width, lo + (k+1)*width)`` covering ``values``."""
    lo = math.floor(values.min() / width) * width
    idx = np.floor((values - lo) / width).astype(int)
    counts = np.bincount(idx)
    edges = [lo + k * width for k in range(len(counts) + 1)]
    return edges, counts.tolist()


def log2_edges(max_value: float) -> list:
    edges = [1]
    while edges[-1] <= max_value:
        edges.append(edges[-1] * 2)
    return edges


def metric_values(records: Sequence[ReceptionRecord], metric: str, unit: str = "reception",
                  window_s: float = DEFAULT_DEDUP_WINDOW_S) -> list:
    """Raw per-item values of a metric.

    ``unit="frame"`` counts each de-duplicated frame once, using its first
    reception. ``payload_size`` and ``frames_per_device`` are always per frame.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if metric == "frames_per_device":
        per_dev = Counter(f.dev_addr for f in deduplicate(records, window_s) if f.dev_addr is not None)
        return list(per_dev.values())
    if metric == "payload_size" or unit == "frame":
        items = [f.first for f in deduplicate(records, window_s)]
    elif unit == "reception":
        items = list(records)
    else:
        raise ValueError(f"unit must be 'reception' or 'frame', got {unit!r}")
    get = {
        "rssi": lambda r: r.rssi_dbm,
        "snr": lambda r: r.snr_db,
        "payload_size": lambda r: payload_size(r.raw_payload),
        "sf": lambda r: r.sf,
        "freq": lambda r: r.freq_hz,
    }[metric]
    return [get(r) for r in items]


def histogram(records: Sequence[ReceptionRecord], metric: str, bins=None, *, pdf: bool = False,
              unit: str = "reception", window_s: float = DEFAULT_DEDUP_WINDOW_S) -> Histogram:
    """Histogram of one trace metric.

    ``bins`` is a bin width or an explicit list of edges. ``sf`` and ``freq``
    are counted per distinct value. ``frames_per_device`` defaults to
    power-of-two edges since its distribution is heavy-tailed.
    """
    values = metric_values(records, metric, unit, window_s)
    params = {"unit": unit, "dedup_window_s": window_s, "ruleset": RULESET_VERSION}
    if not values:
        if pdf:
            raise ValueError(f"cannot normalise an empty {metric} histogram")
        return Histogram(metric, None if metric in DISCRETE_METRICS else [], [], [], pdf, params)

    if metric in DISCRETE_METRICS:
        counted = sorted(Counter(values).items())
        return Histogram(metric, None, [k for k, _ in counted], [c for _, c in counted], pdf, params)

    arr = np.asarray(values, dtype=float)
    if bins is None and metric == "frames_per_device":
        bins = log2_edges(arr.max())
    if bins is None or np.isscalar(bins):
        width = float(bins) if bins is not None else DEFAULT_WIDTH[metric]
        edges, counts = uniform_bins(arr, width)
    else:
        edges = list(bins)
        counts, _ = np.histogram(arr, bins=edges)
        counts = counts.tolist()
    params["edges"] = ";".join(_fmt(e) for e in edges)
    labels = [f"[{_fmt(edges[i])},{_fmt(edges[i + 1])})" for i in range(len(counts))]
    return Histogram(metric, edges, labels, counts, pdf, params)


# --- payload classification ---------------------------------------------------


class PayloadKind(str, Enum):
    LORAMOTE = "LoRaMote"
    COMMA_SEPARATED_DECIMALS = "CommaSeparatedDecimals"
    TEMPERATURE = "Temperature"
    HUMIDITY = "Humidity"
    GPS_LOCATION = "GpsLocation"
    BATTERY_LEVEL = "BatteryLevel"
    BRIGHTNESS = "Brightness"
    DISTANCE = "Distance"
    KNOWN_STRING = "KnownString"
    OTHER_READABLE = "OtherReadable"
    BINARY = "Binary"


@dataclass(frozen=True)
class PayloadClass:
    kind: PayloadKind
    label: Optional[str] = None

    def __str__(self):
        return f"{self.kind.value}({self.label})" if self.label else self.kind.value


LORAMOTE_PORT = 2
LORAMOTE_LEN = 16
MIN_PRINTABLE_RATIO = 0.9

_NUM = r"[-+]?\d+(?:\.\d+)?"
# "52.0116,4.3571", "52.0116 4.3571" or "lat 52.0116 lon 4.3571"
_GPS_RE = re.compile(
    r"([-+]?\d{1,2}\.\d{3,})\s*[,;\s]\s*(?:lo?ng?[a-z]*\s*[:=]?\s*)?([-+]?\d{1,3}\.\d{3,})",
    re.IGNORECASE,
)
_CSV_NUM_RE = re.compile(rf"\s*{_NUM}(?:\s*,\s*{_NUM})+\s*")
_KNOWN_RE = re.compile(r"(hello|test|foo|coffee)[\W\d_]*")
_KEYWORDS = (
    (("temp", "°c"), PayloadKind.TEMPERATURE),
    (("hum",), PayloadKind.HUMIDITY),
    (("bat",), PayloadKind.BATTERY_LEVEL),
    (("lux", "light"), PayloadKind.BRIGHTNESS),
    (("dist",), PayloadKind.DISTANCE),
)


def printable_ratio(data: bytes) -> float:
    if not data:
        return 0.0
    text = data.decode("utf-8", errors="replace")
    ok = sum(1 for ch in text if ch != "�" and (ch.isprintable() or ch in "\t\r\n"))
    return ok / len(text)


def _looks_like_loramote(data: bytes, fport: Optional[int]) -> bool:
    # best effort: Semtech LoRaMote demo frames are 16 bytes on port 2,
    # first byte is the LED state
    return fport == LORAMOTE_PORT and len(data) == LORAMOTE_LEN and data[0] in (0, 1)


def decode_loramote_gps(data: bytes) -> Optional[GeoPoint]:
    """Latitude/longitude from bytes 8..13 of a LoRaMote frame (24-bit, big-endian)."""
    if len(data) != LORAMOTE_LEN:
        return None
    lat_raw = int.from_bytes(data[8:11], "big", signed=True)
    lon_raw = int.from_bytes(data[11:14], "big", signed=True)
    lat, lon = lat_raw * 90.0 / 2**23, lon_raw * 180.0 / 2**23
    if lat == 0 and lon == 0:
        return None
    try:
        return GeoPoint(lat, lon)
    except ValueError:
        return None


def find_gps(text: str) -> Optional[GeoPoint]:
    for m in _GPS_RE.finditer(text):
        lat, lon = float(m.group(1)), float(m.group(2))
        if abs(lat) <= 90 and abs(lon) <= 180:
            return GeoPoint(lat, lon)
    return None


def classify_payload(data: bytes, fport: Optional[int] = None) -> PayloadClass:
    """Classify a decrypted payload; first matching rule wins.

    Rules in order: LoRaMote layout (needs ``fport``), mostly non-printable,
    lat/lon pair, sensor keyword, well-known test string, comma separated
    numbers, anything else readable.
    """
    data = bytes(data)
    ratio = printable_ratio(data)
    if ratio < MIN_PRINTABLE_RATIO and _looks_like_loramote(data, fport):
        return PayloadClass(PayloadKind.LORAMOTE)
    if ratio < MIN_PRINTABLE_RATIO:
        return PayloadClass(PayloadKind.BINARY)
    text = data.decode("utf-8", errors="replace")
    if find_gps(text) is not None:
        return PayloadClass(PayloadKind.GPS_LOCATION)
    lower = text.lower()
    for words, kind in _KEYWORDS:
        if any(w in lower for w in words):
            return PayloadClass(kind)
    m = _KNOWN_RE.fullmatch(lower.strip())
    if m:
        return PayloadClass(PayloadKind.KNOWN_STRING, m.group(1))
    if _CSV_NUM_RE.fullmatch(text):
        return PayloadClass(PayloadKind.COMMA_SEPARATED_DECIMALS)
    return PayloadClass(PayloadKind.OTHER_READABLE)


def node_location(frame: UniqueFrame, key: bytes = GENERIC_KEY) -> Optional[GeoPoint]:
    """Node position carried in a frame's payload, if any."""
    try:
        parsed, plaintext, _ = decode_generic(frame.payload, key)
    except FrameError:
        return None
    if not plaintext:
        return None
    if printable_ratio(plaintext) < MIN_PRINTABLE_RATIO:
        if _looks_like_loramote(plaintext, parsed.fport):
            return decode_loramote_gps(plaintext)
        return None
    return find_gps(plaintext.decode("utf-8", errors="replace"))


# --- distance error -----------------------------------------------------------


@dataclass
class DistanceErrorReport:
    histogram: Histogram
    errors: list
    skipped_no_gateway: int = 0
    skipped_no_gps: int = 0
    out_of_range: int = 0


def distance_error_report(frames: Iterable[UniqueFrame], lo: int = -100, hi: int = 100,
                          key: bytes = GENERIC_KEY) -> DistanceErrorReport:
    """Signed estimate-minus-measured distances, one per located reception.

    Bins are 1 m wide and centred on whole metres, bin ``k`` holding errors in
    ``[k - 0.5, k + 0.5)``, for ``k`` in ``lo..hi``.
    """
    errors, no_gw, no_gps = [], 0, 0
    for frame in frames:
        node = node_location(frame, key)
        if node is None:
            no_gps += len(frame.receptions)
            continue
        for rec in frame.receptions:
            if rec.gateway_location is None:
                no_gw += 1
                continue
            obs = SignalObservation(rec.freq_hz / 1e6, rec.rssi_dbm)
            errors.append(distance_error(node, rec.gateway_location, obs))
    centres = list(range(lo, hi + 1))
    counts = [0] * len(centres)
    out = 0
    for e in errors:
        k = math.floor(e + 0.5)
        if lo <= k <= hi:
            counts[k - lo] += 1
        else:
            out += 1
    edges = [c - 0.5 for c in centres] + [hi + 0.5]
    hist = Histogram("distance_error_m", edges, centres, counts, False,
                     {"bin_width_m": 1, "range_m": f"{lo}..{hi}"})
    return DistanceErrorReport(hist, errors, no_gw, no_gps, out)


# --- summary ------------------------------------------------------------------


@dataclass
class TraceSummary:
    receptions: int = 0
    unique_frames: int = 0
    unique_devices: int = 0
    gateways: int = 0
    reception_counts: dict = field(default_factory=dict)
    dedup_window_s: float = DEFAULT_DEDUP_WINDOW_S

    def rows(self):
        yield "receptions", self.receptions
        yield "unique_frames", self.unique_frames
        yield "unique_devices", self.unique_devices
        yield "gateways", self.gateways
        for n, count in self.reception_counts.items():
            yield f"frames_received_by_{n}_gateways", count


def summary(records: Sequence[ReceptionRecord], window_s: float = DEFAULT_DEDUP_WINDOW_S) -> TraceSummary:
    frames = deduplicate(records, window_s)
    return TraceSummary(
        receptions=len(records),
        unique_frames=len(frames),
        unique_devices=len({f.dev_addr for f in frames if f.dev_addr is not None}),
        gateways=len({r.gateway_id for r in records}),
        reception_counts=reception_count_distribution(frames),
        dedup_window_s=window_s,
    )


def classify_frames(frames: Iterable[UniqueFrame], key: bytes = GENERIC_KEY) -> Counter:
    """Count payload classes over de-duplicated frames."""
    counts = Counter()
    for frame in frames:
        try:
            parsed, plaintext, _ = decode_generic(frame.payload, key)
        except FrameError:
            counts[str(PayloadClass(PayloadKind.BINARY))] += 1
            continue
        fport = getattr(parsed, "fport", None)
        counts[str(classify_payload(plaintext or b"", fport))] += 1
    return counts
