"""Command-line entry point: ``pfhorizon <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 a checked guarantee was violated.
Configuration comes from an optional flat ``key = value`` file (``--config``), then
command-line flags override it.  ``PFHORIZON_WORKERS`` sets the worker count.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import experiments as ex
from .model import DEFAULT_PARAMS, ModelParams

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2

# per-subcommand defaults layered under the config file
DEFAULTS = {
    "run": {"N": "512", "T": "1000", "mode": "both"},
    "extinction": {"N": "4", "T": "1001", "replicates": "100", "mode": "iid"},
    "sweep": {"N": "64", "T": "100,1000,10000", "replicates": "200", "mode": "iid"},
    "sqmc-uniform": {"N": "256,512,1024,2048,4096", "T": "100000", "keys": "20", "mode": "scrambled"},
    "dkw": {"N": "500", "T": "5", "replicates": "1000", "keys": "20", "mode": "iid"},
    "perturb": {"T": "1000"},
    "qmc-verify": {"N": "16,32,64,128,256,512,1024,2048,4096", "keys": "20", "mode": "scrambled"},
}

_MODEL_KEYS = ("rho", "sigma", "c", "mu1", "sigma1_sq")
_INT_LISTS = ("N", "T")
_FLOAT_LISTS = ("kappas", "deltas")
_INTS = ("replicates", "keys", "seed", "t_split")
_FLOATS = ("kappa", "q", "z", "gamma", "a", "b") + _MODEL_KEYS
_BOOLS = ("with_discrepancy", "shared_horizons", "early_stop", "compare_iid")
KNOWN_KEYS = set(_INT_LISTS + _FLOAT_LISTS + _INTS + _FLOATS + _BOOLS + ("mode", "format", "out"))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KNOWN_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = v
    return out


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_LISTS:
            return tuple(int(float(x)) for x in raw.split(",") if x.strip())
        if key in _FLOAT_LISTS:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key in _INTS:
            return int(float(raw))
        if key in _FLOATS:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if key in _BOOLS:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError
            return low in ("1", "true", "yes")
    except ValueError:
        raise ex.ConfigError(key, f"cannot parse {raw!r}") from None
    return raw


def build_config(values: dict[str, str]) -> ex.ExperimentConfig:
    parsed = {k: _parse_value(k, v) for k, v in values.items()}
    model_kw = {k: parsed.pop(k) for k in _MODEL_KEYS if k in parsed}
    base = {f: getattr(DEFAULT_PARAMS, f) for f in _MODEL_KEYS}
    base.update(model_kw)
    try:
        model = ModelParams(**base)
    except ValueError as e:
        raise ex.ConfigError("model", str(e)) from None
    kw = {"model": model}
    a = parsed.pop("a", None)
    b = parsed.pop("b", None)
    if a is not None or b is not None:
        kw["interval"] = (a if a is not None else -0.1, b if b is not None else 0.1)
    if "seed" in parsed:
        kw["master_seed"] = parsed.pop("seed")
    if "format" in parsed:
        kw["fmt"] = parsed.pop("format")
    kw.update(parsed)
    return ex.ExperimentConfig(**kw)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pfhorizon", description="Particle filter and SQMC horizon experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in DEFAULTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--seed", help="master seed")
        sp.add_argument("--mode", choices=["iid", "scrambled", "both"])
        sp.add_argument("--out", help="output path prefix (omit to print the summary only)")
        sp.add_argument("--format", choices=["csv", "jsonl"])
        for k in sorted(KNOWN_KEYS - {"seed", "mode", "out", "format"}):
            sp.add_argument(f"--{k.replace('_', '-')}", dest=k, metavar=k.upper())
    return p


def _jsonable(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


def write_table(table: ex.Table, cfg: ex.ExperimentConfig, prefix: str | None, stem: str | None = None) -> dict:
    summary = {"schema_version": ex.SCHEMA_VERSION, "experiment": table.name,
               "master_seed": cfg.master_seed, "config": cfg.echo(),
               "summary": table.summary, "violations": table.violations}
    summary = _jsonable(summary)
    if prefix is None:
        return summary
    base = Path(prefix if stem is None else f"{prefix}_{stem}")
    base.parent.mkdir(parents=True, exist_ok=True)
    if cfg.fmt == "csv":
        path = base.with_name(base.name + ".csv")
        with open(path, "w", newline="") as fh:
            if table.rows:
                cols = list(dict.fromkeys(k for r in table.rows for k in r))
                w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
                w.writeheader()
                for r in table.rows:
                    w.writerow({k: _csv_cell(r.get(k)) for k in cols})
    else:
        path = base.with_name(base.name + ".jsonl")
        with open(path, "w") as fh:
            for r in table.rows:
                fh.write(json.dumps(_jsonable(r)) + "\n")
    with open(base.with_name(base.name + ".summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _csv_cell(v.item())
    return v


def run_command(command: str, cfg: ex.ExperimentConfig) -> list[tuple[ex.Table, str | None]]:
    if command == "run":
        traces = ex.run_traces(cfg)
        return [(ex.trace_table(tr, "run"), mode) for mode, tr in traces.items()]
    fn = {"extinction": ex.extinction, "sweep": ex.sweep, "sqmc-uniform": ex.sqmc_uniform,
          "dkw": ex.dkw, "perturb": ex.perturb, "qmc-verify": ex.qmc_verify}[command]
    return [(fn(cfg), None)]


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        values = dict(DEFAULTS[args.command])
        if args.config:
            values.update(read_config_file(args.config))
        for k in KNOWN_KEYS:
            v = getattr(args, k, None)
            if v is not None:
                values[k] = v
        cfg = build_config(values)
        ex.worker_count()
    except UsageError as e:
        print(f"pfhorizon: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ex.ConfigError as e:
        print(f"pfhorizon: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"pfhorizon: {e}", file=sys.stderr)
        return EXIT_USAGE
    results = run_command(args.command, cfg)
    violated = False
    for table, stem in results:
        summary = write_table(table, cfg, cfg.out, stem)
        print(json.dumps({"experiment": table.name, "part": stem, "summary": summary["summary"],
                          "violations": summary["violations"]}, sort_keys=True))
        violated |= bool(table.violations)
    return EXIT_VIOLATION if violated else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
