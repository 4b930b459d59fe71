"""Gateway downlink airtime for a grid of confirmed-frame shares.

Runs both ACK policies: ``received`` (only frames the gateway decoded get
an ACK) and ``all`` (every confirmed uplink triggers one), and prints where
the 1% duty cycle is exceeded.
"""

import argparse
import csv
import sys
from pathlib import Path

from lorakit.cli import main as lorakit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    for policy in ("received", "all"):
        out = Path(args.out_dir) / f"confirmed_{policy}.csv"
        rc = lorakit(["simulate", "--n", "100..1000:100", "--confirmed", "0.5,1,2,2.1,3,5",
                      "--trials", str(args.trials), "--seed", str(args.seed),
                      "--ack-policy", policy, "--out", str(out)])
        if rc:
            return rc
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        print(f"ack policy {policy}: {out}")
        print("  n     p%    gw airtime %  violation")
        for r in rows:
            if r["n"] in ("200", "700") or r["confirmed_pct"] == "2.1":
                print(f"  {r['n']:>4}  {float(r['confirmed_pct']):>4}  {float(r['gateway_airtime_pct']):>10.3f}"
                      f"     {r['duty_violation']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
