import base64
import io
import json
import random
from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from lorakit.codec import build_data_frame
from lorakit.traces import (
    PayloadClass, PayloadKind, ReceptionRecord, classify_frames, classify_payload, deduplicate,
    distance_error_report, histogram, ingest, parse_time, read_trace, reception_count_distribution,
    summary, write_trace,
)
from synth import T0, dev_addr, gps_trace, thousand_record_trace


def line(**overrides):
    obj = {
        "gateway_id": "gw-a", "time_utc": "2016-05-01T12:00:00.123Z", "freq_hz": 868100000,
        "sf": 7, "bw_hz": 125000, "rssi_dbm": -97.5, "snr_db": 7.25,
        "payload_b64": base64.b64encode(build_data_frame(b"\x01\x02\x03\x04", 1, b"hi", 1).serialize()).decode(),
    }
    obj.update(overrides)
    return json.dumps({k: v for k, v in obj.items() if v is not None})


def rec(gw="gw-a", t=0.0, payload=b"hi", fcnt=1, addr=b"\x01\x02\x03\x04", sf=7, rssi=-90.0):
    return ReceptionRecord(
        gateway_id=gw, time_utc=T0 + timedelta(seconds=t), freq_hz=868100000, sf=sf, bw_hz=125000,
        rssi_dbm=rssi, snr_db=5.0, raw_payload=build_data_frame(addr, fcnt, payload, 1).serialize(),
    )


# --- ingest ----------------------------------------------------------------------


def test_ingest_empty():
    assert ingest([]) == ([], 0)


def test_ingest_skips_malformed():
    lines = [line(), "{not json", line(gateway_id="gw-b"), line(rssi_dbm=-80)]
    records, skipped = ingest(lines)
    assert len(records) == 3 and skipped == 1
    assert [r.gateway_id for r in records] == ["gw-a", "gw-b", "gw-a"]


@pytest.mark.parametrize("bad", [
    line(sf=13), line(freq_hz=0), line(sf="7"), line(payload_b64="***"), line(time_utc="yesterday"),
    line(snr_db=None), json.dumps([1, 2]),
])
def test_ingest_rejects_bad_fields(bad):
    assert ingest([bad]) == ([], 1)


def test_ingest_ten_line_fixture_field_exact(tmp_path):
    payloads = [build_data_frame(b"\xaa\xbb\xcc\xdd", i, f"v{i}".encode(), 3).serialize() for i in range(10)]
    lines = []
    for i, p in enumerate(payloads):
        obj = {
            "gateway_id": f"gw-{i % 3}", "time_utc": f"2016-06-0{1 + i % 9}T0{i}:00:00.{100 + i}Z",
            "freq_hz": 868100000 + 200000 * (i % 3), "sf": 7 + i % 6, "bw_hz": 125000,
            "rssi_dbm": -100 + i, "snr_db": i / 4, "payload_b64": base64.b64encode(p).decode(),
        }
        if i % 2:
            obj.update(gw_lat=52.0 + i / 100, gw_lon=4.0 + i / 100)
        lines.append(json.dumps(obj))
    path = tmp_path / "trace.jsonl"
    path.write_text("\n".join(lines) + "\n")
    records, skipped = read_trace(path)
    assert skipped == 0 and len(records) == 10
    for i, r in enumerate(records):
        assert r.gateway_id == f"gw-{i % 3}"
        assert r.time_utc == parse_time(f"2016-06-0{1 + i % 9}T0{i}:00:00.{100 + i}+00:00")
        assert r.time_utc.microsecond == (100 + i) * 1000
        assert (r.freq_hz, r.sf, r.bw_hz) == (868100000 + 200000 * (i % 3), 7 + i % 6, 125000)
        assert (r.rssi_dbm, r.snr_db) == (-100 + i, i / 4)
        assert r.raw_payload == payloads[i]
        if i % 2:
            assert (r.gateway_location.lat_deg, r.gateway_location.lon_deg) == (52.0 + i / 100, 4.0 + i / 100)
        else:
            assert r.gateway_location is None
    out = tmp_path / "copy.jsonl"
    write_trace(out, records)
    assert read_trace(out) == (records, 0)


def test_unreadable_source():
    with pytest.raises(OSError):
        read_trace("/nonexistent/trace.jsonl")


# --- dedup -----------------------------------------------------------------------


def test_two_gateways_80ms_apart():
    frames = deduplicate([rec("gw-a", 0.0), rec("gw-b", 0.08)])
    assert len(frames) == 1 and len(frames[0].receptions) == 2
    assert frames[0].fcnt == 1 and frames[0].dev_addr == b"\x01\x02\x03\x04"


def test_counter_reuse_two_hours_apart():
    assert len(deduplicate([rec(t=0.0), rec(t=7200.0)])) == 2


def test_twenty_records_three_duplicated():
    records = [rec(t=10.0 * i, fcnt=i) for i in range(17)]
    records += [rec("gw-b", t=10.0 * i + 0.5, fcnt=i) for i in (2, 9, 15)]
    random.Random(0).shuffle(records)
    frames = deduplicate(records)
    assert len(frames) == 17
    assert reception_count_distribution(frames) == {1: 14, 2: 3}


def test_unparseable_payload_grouped_by_raw_bytes():
    junk = ReceptionRecord("gw-a", T0, 868100000, 7, 125000, -90.0, 1.0, b"\x01\x02")
    junk2 = ReceptionRecord("gw-b", T0 + timedelta(seconds=1), 868100000, 7, 125000, -91.0, 1.0, b"\x01\x02")
    frames = deduplicate([junk, junk2, rec()])
    assert sorted(len(f.receptions) for f in frames) == [1, 2]
    assert summary([junk, junk2]).unique_devices == 0


def test_dedup_idempotent_on_fixture():
    records, _ = thousand_record_trace()
    once = deduplicate(records)
    flat = [r for f in once for r in f.receptions]
    assert deduplicate(flat) == once


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5), st.floats(0, 100)), max_size=40), st.randoms())
def test_dedup_properties(plan, rnd):
    records = [rec(f"gw-{g}", t=t, fcnt=fc) for g, fc, t in plan]
    frames = deduplicate(records)
    assert sum(len(f.receptions) for f in frames) == len(records)
    flat = [r for f in frames for r in f.receptions]
    assert deduplicate(flat) == frames
    for f in frames:
        assert all(r.raw_payload == f.payload for r in f.receptions)
        assert all((r.time_utc - f.first.time_utc).total_seconds() <= 5.0 for r in f.receptions)
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert summary(shuffled) == summary(records)


# --- histograms -------------------------------------------------------------------


def test_single_record_histogram():
    h = histogram([rec(rssi=-100.0)], "rssi")
    assert h.counts == [1] and h.edges == [-100.0, -99.0]


def test_sf_mix_counts():
    records = [rec(sf=7, t=i) for i in range(5)] + [rec(sf=12, t=10 + i) for i in range(3)]
    h = histogram(records, "sf")
    assert dict(zip(h.labels, h.counts)) == {7: 5, 12: 3}


def test_pdf_requires_records():
    with pytest.raises(ValueError):
        histogram([], "rssi", pdf=True)
    assert histogram([], "rssi").counts == []


def test_unknown_metric():
    with pytest.raises(ValueError):
        histogram([rec()], "nonsense")


def test_explicit_edges_and_width():
    records = [rec(rssi=v, t=i) for i, v in enumerate([-120.0, -101.0, -100.0, -99.5, -60.0])]
    h = histogram(records, "rssi", [-130, -100, -50])
    assert h.counts == [2, 3]
    h = histogram(records, "rssi", 20)
    assert h.edges == [-120.0, -100.0, -80.0, -60.0, -40.0]
    assert h.counts == [2, 2, 0, 1]


def test_payload_size_per_unique_frame():
    records = [rec("gw-a", 0.0, b"abcd"), rec("gw-b", 0.1, b"abcd"), rec("gw-a", 50.0, b"xy", fcnt=2)]
    h = histogram(records, "payload_size")
    assert dict(zip(h.edges, h.counts)) == {2.0: 1, 3.0: 0, 4.0: 1}


def test_frame_unit_weighting():
    records = [rec("gw-a", 0.0, rssi=-90.0), rec("gw-b", 0.1, rssi=-110.0)]
    assert histogram(records, "rssi", unit="frame").total == 1
    assert histogram(records, "rssi").total == 2


def test_csv_has_metadata_line():
    buf = io.StringIO()
    histogram([rec()], "rssi", pdf=True).write_csv(buf)
    first, header = buf.getvalue().splitlines()[:2]
    assert first.startswith("# metric=rssi pdf=True") and "dedup_window_s=5.0" in first and "edges=" in first
    assert header == "bin_lo,bin_hi,count,value"


# --- the 1000-record fixture ---------------------------------------------------------


@pytest.fixture(scope="module")
def big():
    return thousand_record_trace()


def test_fixture_summary(big):
    records, truth = big
    s = summary(records)
    assert (s.receptions, s.unique_frames, s.unique_devices, s.gateways) == \
        (1000, 800, 12, 4) == (truth.receptions, truth.unique_frames, truth.devices, truth.gateways)
    assert s.reception_counts == dict(truth.reception_counts) == {1: 625, 2: 150, 3: 25}


def test_fixture_histograms(big):
    records, truth = big
    assert dict(zip(*[histogram(records, "sf").labels, histogram(records, "sf").counts])) == dict(truth.sf)
    freq = histogram(records, "freq")
    assert dict(zip(freq.labels, freq.counts)) == dict(truth.freq)
    rssi = histogram(records, "rssi")
    assert {lo: c for lo, c in zip(rssi.edges, rssi.counts) if c} == dict(truth.rssi)
    fpd = histogram(records, "frames_per_device")
    expected = [sum(1 for n in truth.frames_per_device.values() if lo <= n < hi)
                for lo, hi in zip(fpd.edges, fpd.edges[1:])]
    assert fpd.counts == expected and fpd.total == 12
    for metric in ("rssi", "snr", "sf", "freq", "payload_size", "frames_per_device"):
        h = histogram(records, metric, pdf=True)
        assert abs(sum(h.values) - 1) <= 1e-9


def test_fixture_payload_classes(big):
    records, _ = big
    assert classify_frames(deduplicate(records)) == {"Temperature": 800}


# --- classification ------------------------------------------------------------------


@pytest.mark.parametrize("payload,expected", [
    (b"hello", PayloadClass(PayloadKind.KNOWN_STRING, "hello")),
    (b"Hello!", PayloadClass(PayloadKind.KNOWN_STRING, "hello")),
    (b"test 3", PayloadClass(PayloadKind.KNOWN_STRING, "test")),
    (b"coffee", PayloadClass(PayloadKind.KNOWN_STRING, "coffee")),
    (b"foo", PayloadClass(PayloadKind.KNOWN_STRING, "foo")),
    (b"\x00\xff\x13", PayloadClass(PayloadKind.BINARY)),
    (b"", PayloadClass(PayloadKind.BINARY)),
    (b"52.0116,4.3571", PayloadClass(PayloadKind.GPS_LOCATION)),
    (b"lat 52.0116 lon 4.3571", PayloadClass(PayloadKind.GPS_LOCATION)),
    (b"Temp: 21.5", PayloadClass(PayloadKind.TEMPERATURE)),
    ("21.5°C".encode(), PayloadClass(PayloadKind.TEMPERATURE)),
    (b"hum=55", PayloadClass(PayloadKind.HUMIDITY)),
    (b"BAT 3.7V", PayloadClass(PayloadKind.BATTERY_LEVEL)),
    (b"lux:300", PayloadClass(PayloadKind.BRIGHTNESS)),
    (b"dist=120", PayloadClass(PayloadKind.DISTANCE)),
    (b"1,2.5,-3", PayloadClass(PayloadKind.COMMA_SEPARATED_DECIMALS)),
    (b"Good morning", PayloadClass(PayloadKind.OTHER_READABLE)),
])
def test_classify(payload, expected):
    assert classify_payload(payload) == expected


def test_classify_loramote_by_port_and_length():
    mote = bytes([1, 0x27, 0x10, 0x08, 0x34]) + bytes(11)
    assert classify_payload(mote, fport=2) == PayloadClass(PayloadKind.LORAMOTE)
    assert classify_payload(mote) == PayloadClass(PayloadKind.BINARY)


@given(st.binary(max_size=64), st.one_of(st.none(), st.integers(0, 255)))
def test_classify_total_and_deterministic(data, port):
    assert classify_payload(data, port) == classify_payload(data, port)


# --- distance error ---------------------------------------------------------------------


def test_distance_error_all_zero_on_inverse_fixture():
    rep = distance_error_report(deduplicate(gps_trace()))
    assert len(rep.errors) == 40
    assert rep.histogram.counts[rep.histogram.labels.index(0)] == 40
    assert rep.histogram.total == 40
    assert max(abs(e) for e in rep.errors) < 1e-6


def test_distance_error_positive_when_damped():
    rep = distance_error_report(deduplicate(gps_trace(damping_db=6.0)), lo=-100000, hi=100000)
    assert len(rep.errors) == 40 and all(e > 0 for e in rep.errors)


def test_distance_error_skips_missing_gateway():
    rep = distance_error_report(deduplicate(gps_trace(with_location=False)))
    assert rep.errors == [] and rep.skipped_no_gateway == 40


def test_distance_error_bins():
    rep = distance_error_report([])
    assert rep.histogram.labels == list(range(-100, 101))
    assert rep.histogram.edges[0] == -100.5 and rep.histogram.edges[-1] == 100.5


def test_summary_small_fixture():
    a, b = b"\x01\x00\x00\x01", b"\x02\x00\x00\x01"
    records = [
        rec("gw-a", 0.0, addr=a, fcnt=1), rec("gw-b", 0.1, addr=a, fcnt=1),
        rec("gw-a", 20.0, addr=a, fcnt=2), rec("gw-a", 40.0, addr=b, fcnt=1),
        rec("gw-b", 60.0, addr=b, fcnt=2), rec("gw-b", 80.0, addr=b, fcnt=3),
    ]
    s = summary(records)
    assert (s.receptions, s.unique_frames, s.unique_devices, s.gateways) == (6, 5, 2, 2)


def test_summary_empty():
    s = summary([])
    assert (s.receptions, s.unique_frames, s.unique_devices, s.gateways, s.reception_counts) == (0, 0, 0, 0, {})
