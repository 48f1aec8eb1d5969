"""Sup-in-time SQMC error over a ladder of N, one scramble family per key.

Extra arguments are passed to ``pfhorizon sqmc-uniform``; results go to ``results/sqmc_uniform`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/sqmc_uniform"]
    sys.exit(main(["sqmc-uniform", *args]))
