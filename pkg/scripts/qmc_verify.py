"""Net property, discrepancy envelope and marginal uniformity of scrambled prefixes.

Extra arguments are passed to ``pfhorizon qmc-verify``; results go to ``results/qmc_verify`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/qmc_verify"]
    sys.exit(main(["qmc-verify", *args]))
