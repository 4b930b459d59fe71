"""Airtime per SF/payload plus frames and bytes per day under the 1% duty cycle."""

import argparse
import sys
from pathlib import Path

from lorakit.cli import main as lorakit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    args = ap.parse_args()
    out = Path(args.out_dir)

    rc = lorakit(["airtime", "--sweep-payload", "0..230", "--sf", "7..12", "--out", str(out / "airtime.csv")])
    rc = rc or lorakit(["limits", "--out", str(out / "limits.csv")])
    print(f"wrote {out / 'airtime.csv'} and {out / 'limits.csv'}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
