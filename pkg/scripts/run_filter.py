"""Error traces of the bootstrap filter and SQMC against the exact filter.

Extra arguments are passed to ``pfhorizon run``; results go to ``results/run_filter`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/run_filter"]
    sys.exit(main(["run", *args]))
