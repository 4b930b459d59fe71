"""Per-SF collision rate against packets per minute (unconfirmed traffic only)."""

import argparse
import sys
from pathlib import Path

from lorakit.cli import main as lorakit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out_dir) / "collisions.csv"

    rc = lorakit(["simulate", "--n", "100..1000:100", "--trials", str(args.trials),
                  "--seed", str(args.seed), "--out", str(out)])
    print(f"wrote {out}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
