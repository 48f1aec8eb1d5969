"""One-step errors against the DKW tail (i.i.d.) and the net bound (scrambled).

Extra arguments are passed to ``pfhorizon dkw``; results go to ``results/dkw_bounds`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/dkw_bounds"]
    sys.exit(main(["dkw", *args]))
