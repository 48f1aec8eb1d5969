"""Sup error of a perturbed exact filter recursion across a ladder of perturbation sizes.

Extra arguments are passed to ``pfhorizon perturb``; results go to ``results/perturb`` unless ``--out`` is given.
"""
import sys

from pfhorizon.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "results/perturb"]
    sys.exit(main(["perturb", *args]))
