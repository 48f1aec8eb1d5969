"""Minimal N reaching failure probability q at each horizon, on a geometric N ladder.

Runs the horizon sweep with shared horizons and early stopping, then prints the
minimal N per horizon and the least-squares fit against log(T / q).
"""
import sys

from pfhorizon.cli import main

LADDER = ",".join(str(round(16 * 2 ** (k / 4))) for k in range(8, 29))

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/scaling_ladder"]
    defaults = ["--N", LADDER, "--T", "100,1000,10000", "--replicates", "200",
                "--shared-horizons", "yes", "--early-stop", "yes"]
    sys.exit(main(["sweep", *defaults, *args]))
