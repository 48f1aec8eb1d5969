"""Failure probability of the bootstrap filter over a grid of N and horizon T.

Extra arguments are passed to ``pfhorizon sweep``; results go to ``results/horizon_sweep`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/horizon_sweep"]
    sys.exit(main(["sweep", *args]))
