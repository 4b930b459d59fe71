"""Command-line entry point: ``lorakit <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .codec import GENERIC_KEY, FrameError, OpaqueFrame, decode_generic
from .pathloss import SignalObservation, estimate_distance
from .radio import (
    EU868, RadioConfig, RadioConfigError, RegionPlan, data_per_day, frame_airtime, frames_per_day,
)
from .simulator import SimConfig, sweep
from .traces import (
    DEFAULT_DEDUP_WINDOW_S, METRICS, RULESET_VERSION, classify_frames, deduplicate,
    distance_error_report, histogram, read_trace, summary,
)

log = logging.getLogger("lorakit")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    seed: int | None
    version: str = __version__
    outputs: list = field(default_factory=list)
    argv: list = field(default_factory=list)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def manifest_path(out: Path) -> Path:
    if out.is_dir():
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


# --- argument types -------------------------------------------------------------


def int_range(lo=None, hi=None):
    """``"7"``, ``"7..12"``, ``"0..230:10"`` or ``"100,200"`` -> list of ints."""

    def parse(text: str) -> list:
        try:
            if ".." in text:
                span, _, step = text.partition(":")
                a, b = span.split("..")
                values = list(range(int(a), int(b) + 1, int(step) if step else 1))
            else:
                values = [int(v) for v in text.split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer or range: {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError(f"empty range: {text!r}")
        for v in values:
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                raise argparse.ArgumentTypeError(f"{v} outside {lo}..{hi}")
        return values

    return parse


def bounded_int(lo):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}: {text!r}")
        return v

    return parse


def float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def non_negative_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return v


def u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def hex_key(text: str) -> bytes:
    try:
        key = bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError("key must be hex") from None
    if len(key) != 16:
        raise argparse.ArgumentTypeError("key must be 16 bytes")
    return key


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(round(x, 9))
    return str(x)


# --- output plumbing -------------------------------------------------------------


class Output:
    """Collects named text outputs; writes them to ``--out`` or stdout."""

    def __init__(self, args):
        self.args = args
        self.files = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def flush(self, parameters: dict) -> None:
        out = self.args.out
        if out is None:
            for text in self.files.values():
                sys.stdout.write(text)
            return
        out = Path(out)
        if len(self.files) > 1:
            out.mkdir(parents=True, exist_ok=True)
            targets = {name: out / name for name in self.files}
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
            targets = {name: out for name in self.files}
        for name, text in self.files.items():
            targets[name].write_text(text, encoding="utf-8")
        RunManifest(
            subcommand=self.args.command,
            parameters=parameters,
            seed=self.args.seed,
            outputs=sorted(str(p) for p in targets.values()),
            argv=list(self.args.argv),
        ).write(manifest_path(out))


def csv_text(header, rows, comment=None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def jsonable(params: dict) -> dict:
    return {k: (v.hex() if isinstance(v, bytes) else v) for k, v in params.items()
            if k not in ("func", "argv")}


# --- subcommands -----------------------------------------------------------------


def cmd_airtime(args, out: Output) -> None:
    payloads = args.sweep_payload or args.payload
    rows = []
    for sf in args.sf:
        cfg = RadioConfig(sf=sf, bw_hz=args.bw, cr=args.cr, n_preamble=args.preamble)
        for pl in payloads:
            rows.append((sf, args.bw, args.cr, pl, frame_airtime(cfg, pl) * 1000))
    if args.format == "text" and len(rows) == 1:
        out.add("airtime.txt", f"{rows[0][-1]:.3f} ms\n")
    else:
        out.add("airtime.csv", csv_text(["sf", "bw_hz", "cr", "payload_bytes", "airtime_ms"], rows))


def cmd_limits(args, out: Output) -> None:
    plan = RegionPlan(duty_cycle=args.duty)
    rows = []
    for sf in args.sf:
        cfg = RadioConfig(sf=sf, bw_hz=args.bw, cr=args.cr)
        cap = plan.max_payload_by_sf[sf]
        omitted = [pl for pl in args.payload if pl > cap]
        if omitted:
            log.warning("SF%d: omitting %d payload sizes above the %d byte limit", sf, len(omitted), cap)
        for pl in args.payload:
            if pl > cap:
                continue
            rows.append((sf, pl, frame_airtime(cfg, pl) * 1000,
                         frames_per_day(cfg, pl, plan), data_per_day(cfg, pl, plan)))
    out.add("limits.csv", csv_text(
        ["sf", "payload_bytes", "airtime_ms", "frames_per_day", "bytes_per_day"], rows,
        comment=f"duty_cycle={fmt(args.duty)} bw_hz={args.bw} cr={args.cr} per_channel=true",
    ))


SIM_SFS = (7, 8, 9, 10, 11, 12)


def sim_rows(reports):
    for r in reports:
        coll, loss = r.collision_rate_by_sf, r.loss_rate_by_sf
        counts = {k.value: v for k, v in r.fate_counts.items()}
        yield (
            r.packets_per_window, r.confirmed_fraction * 100, r.trials, r.uplinks,
            counts.get("delivered", 0), counts.get("collided", 0), counts.get("lost-gateway-busy", 0),
            r.collision_rate, r.loss_rate,
            *(coll.get(sf, 0.0) for sf in SIM_SFS), *(loss.get(sf, 0.0) for sf in SIM_SFS),
            r.acks_sent, r.acks_dropped, r.gateway_tx_time_s,
            r.gateway_airtime_fraction * 100, r.duty_violation,
        )


SIM_HEADER = [
    "n", "confirmed_pct", "trials", "uplinks", "delivered", "collided", "lost_gateway_busy",
    "collision_rate", "loss_rate",
    *(f"collision_rate_sf{sf}" for sf in SIM_SFS), *(f"loss_rate_sf{sf}" for sf in SIM_SFS),
    "acks_sent", "acks_dropped", "gateway_tx_time_s", "gateway_airtime_pct", "duty_violation",
]


def cmd_simulate(args, out: Output) -> None:
    base = SimConfig(
        packets_per_window=args.n[0],
        window_s=args.window,
        payload_bytes=args.payload,
        rx1_delay_s=args.rx1_delay,
        seed=args.seed if args.seed is not None else 0,
        trials=args.trials,
        ack_policy=args.ack_policy,
    )
    confirmed = [p / 100.0 for p in args.confirmed]
    if any(not 0 <= p <= 1 for p in confirmed):
        raise UsageError("--confirmed must lie in 0..100 (percent)")
    reports = sweep(base, args.n, confirmed)
    out.add("simulate.csv", csv_text(
        SIM_HEADER, sim_rows(reports),
        comment=f"seed={base.seed} window_s={fmt(base.window_s)} payload_bytes={base.payload_bytes} "
                f"rx1_delay_s={fmt(base.rx1_delay_s)} ack_policy={base.ack_policy} "
                f"duty_cycle={fmt(EU868.duty_cycle)}",
    ))


def cmd_distance(args, out: Output) -> None:
    if args.batch:
        rows = []
        with open(args.batch, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                try:
                    obs = SignalObservation(float(row["freq_mhz"]), float(row["rssi_dbm"]))
                except (KeyError, ValueError) as exc:
                    raise UsageError(f"bad batch row {row}: {exc}") from None
                rows.append((obs.freq_mhz, obs.level_db, estimate_distance(obs)))
        out.add("distance.csv", csv_text(["freq_mhz", "rssi_dbm", "distance_m"], rows))
        return
    if args.freq is None or args.rssi is None:
        raise UsageError("distance needs --freq and --rssi, or --batch")
    try:
        obs = SignalObservation(args.freq, args.rssi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    d = estimate_distance(obs)
    if args.format == "csv":
        out.add("distance.csv", csv_text(["freq_mhz", "rssi_dbm", "distance_m"], [(obs.freq_mhz, obs.level_db, d)]))
    else:
        out.add("distance.txt", f"{d:.3f} m\n")


def cmd_analyze(args, out: Output) -> None:
    records, skipped = read_trace(args.input)
    if skipped:
        log.warning("skipped %d malformed line(s)", skipped)
    s = summary(records, args.dedup_window)
    out.add("summary.csv", csv_text(
        ["statistic", "value"], [*s.rows(), ("skipped_lines", skipped)],
        comment=f"dedup_window_s={fmt(args.dedup_window)} ruleset={RULESET_VERSION}",
    ))
    metrics = args.metric or list(METRICS)
    for metric in metrics:
        h = histogram(records, metric, args.bin_width if metric not in ("frames_per_device",) else None,
                      pdf=args.pdf and bool(records), unit=args.unit, window_s=args.dedup_window)
        buf = io.StringIO()
        h.write_csv(buf)
        out.add(f"{metric}.csv", buf.getvalue())
    if not args.metric:
        frames = deduplicate(records, args.dedup_window)
        classes = classify_frames(frames)
        out.add("payload_classes.csv", csv_text(
            ["class", "frames"], sorted(classes.items()), comment=f"ruleset={RULESET_VERSION}"))
        rep = distance_error_report(frames)
        buf = io.StringIO()
        rep.histogram.params.update(skipped_no_gateway=rep.skipped_no_gateway,
                                    skipped_no_gps=rep.skipped_no_gps, out_of_range=rep.out_of_range)
        rep.histogram.write_csv(buf)
        out.add("distance_error.csv", buf.getvalue())


def parse_frame_arg(text: str) -> bytes:
    t = text.strip()
    if t.lower().startswith("0x"):
        t = t[2:]
    if len(t) % 2 == 0 and all(c in "0123456789abcdefABCDEF" for c in t):
        return bytes.fromhex(t)
    try:
        return base64.b64decode(t, validate=True)
    except binascii.Error:
        raise UsageError("frame must be hex or base64") from None


def cmd_decode(args, out: Output) -> None:
    raw = parse_frame_arg(args.frame)
    try:
        frame, plaintext, mic_ok = decode_generic(raw, args.key, args.app_key)
    except FrameError as exc:
        raise UsageError(f"parse error: {exc}") from None
    if isinstance(frame, OpaqueFrame):
        fields = [("mtype", frame.mtype.name), ("body_hex", frame.body.hex()), ("mic", frame.mic.hex())]
    else:
        fields = [
            ("mtype", frame.mtype.name), ("major", frame.major), ("dev_addr", frame.dev_addr_hex),
            ("fctrl", f"0x{frame.fctrl:02x}"), ("adr", frame.adr), ("ack", frame.ack), ("fcnt", frame.fcnt),
            ("fopts", frame.fopts.hex()), ("fport", "" if frame.fport is None else frame.fport),
            ("frm_payload", frame.frm_payload.hex()), ("mic", frame.mic.hex()),
            ("mic_ok", mic_ok), ("plaintext_hex", plaintext.hex()),
            ("plaintext", plaintext.decode("utf-8", errors="backslashreplace")),
        ]
    if args.format == "csv":
        out.add("decode.csv", csv_text(["field", "value"], fields))
    else:
        out.add("decode.txt", "".join(f"{k}: {fmt(v)}\n" for k, v in fields))


# --- parser ----------------------------------------------------------------------


def global_flags(suppress: bool) -> argparse.ArgumentParser:
    # accepted before or after the subcommand; the subcommand copies must not
    # clobber a value given up front, hence SUPPRESS there
    def default(v):
        return argparse.SUPPRESS if suppress else v

    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--out", default=default(None), help="output file (or directory for multi-file commands)")
    g.add_argument("--seed", type=u64, default=default(None), help="RNG seed (simulate)")
    g.add_argument("--format", choices=("text", "csv"), default=default("text"),
                   help="scalar results as a text line or a one-row CSV; tables are always CSV")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="lorakit", description=__doc__.splitlines()[0],
                                parents=[global_flags(suppress=False)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("airtime", parents=[common], help="LoRa time on air in ms")
    a.add_argument("--sf", type=int_range(7, 12), default=[7])
    a.add_argument("--bw", type=int, default=125000)
    a.add_argument("--cr", type=int, choices=range(1, 5), default=1)
    a.add_argument("--payload", type=int_range(0, 255), default=[13])
    a.add_argument("--sweep-payload", type=int_range(0, 255), default=None)
    a.add_argument("--preamble", type=bounded_int(0), default=8)
    a.set_defaults(func=cmd_airtime)

    lim = sub.add_parser("limits", parents=[common], help="frames and bytes per day per channel")
    lim.add_argument("--sf", type=int_range(7, 12), default=list(range(7, 13)))
    lim.add_argument("--payload", type=int_range(0, 255), default=list(range(0, 231)))
    lim.add_argument("--bw", type=int, default=125000)
    lim.add_argument("--cr", type=int, choices=range(1, 5), default=1)
    lim.add_argument("--duty", type=non_negative_float, default=EU868.duty_cycle)
    lim.set_defaults(func=cmd_limits)

    s = sub.add_parser("simulate", parents=[common], help="single-gateway collision simulation")
    s.add_argument("--n", type=int_range(0, None), default=[100], help="packets per window, list or range")
    s.add_argument("--window", type=float, default=60.0)
    s.add_argument("--confirmed", type=float_list, default=[0.0], help="percent of confirmed uplinks")
    s.add_argument("--trials", type=bounded_int(1), default=100)
    s.add_argument("--payload", type=int, default=1)
    s.add_argument("--rx1-delay", type=non_negative_float, default=1.0)
    s.add_argument("--ack-policy", choices=("received", "all"), default="received")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("distance", parents=[common], help="free-space distance estimate")
    d.add_argument("--freq", type=float, help="MHz")
    d.add_argument("--rssi", type=float, help="dB(m)")
    d.add_argument("--batch", help="CSV with freq_mhz,rssi_dbm columns")
    d.set_defaults(func=cmd_distance)

    an = sub.add_parser("analyze", parents=[common], help="trace statistics and histograms")
    an.add_argument("--input", required=True)
    an.add_argument("--metric", action="append", choices=METRICS)
    an.add_argument("--dedup-window", type=non_negative_float, default=DEFAULT_DEDUP_WINDOW_S)
    an.add_argument("--unit", choices=("reception", "frame"), default="reception")
    an.add_argument("--bin-width", type=float, default=None)
    an.add_argument("--pdf", action="store_true")
    an.set_defaults(func=cmd_analyze)

    dec = sub.add_parser("decode", parents=[common], help="decode a LoRaWAN frame")
    dec.add_argument("frame", help="PHY payload as hex or base64")
    dec.add_argument("--key", type=hex_key, default=GENERIC_KEY, help="NwkSKey (hex); also AppSKey unless given")
    dec.add_argument("--app-key", type=hex_key, default=None, help="AppSKey (hex)")
    dec.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    out = Output(args)
    try:
        args.func(args, out)
        out.flush(jsonable(vars(args)))
    except (UsageError, RadioConfigError) as exc:
        print(f"lorakit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"lorakit {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
