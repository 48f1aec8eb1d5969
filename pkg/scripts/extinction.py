"""Frequency of steps with no predictive particle inside a small interval.

Extra arguments are passed to ``pfhorizon extinction``; results go to ``results/extinction`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/extinction"]
    sys.exit(main(["extinction", *args]))
