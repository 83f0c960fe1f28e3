"""Command-line entry point ``epictl``.

Exit codes: 0 success, 1 validation error (bad config, parameters or
input files), 2 runtime error (numerical failure, I/O).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import EpictlError, ValidationError
from .experiments import (PRESETS, build_config, dump_config_yaml, load_config, resolve_output_dir,
                          run_experiment)
from .measures import histogram_distribution, shared_edges, tv_all
from .network import DEFAULT_LEVEL_COUNTS

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.sim = dataclasses.replace(cfg.sim, seed=args.seed)
        cfg.network = dataclasses.replace(cfg.network, seed=args.seed)
    manifest = run_experiment(cfg, out_dir=args.out, backend=args.backend)
    print(f"wrote {len(manifest['manifest']['files']) + 1} files to {manifest['outputs']}")
    return EXIT_OK


def _cmd_preset(args) -> int:
    cfg = build_config({"experiment_kind": args.kind, "preset": args.name})
    text = dump_config_yaml(cfg)
    if args.print:
        sys.stdout.write(text)
    else:
        out = resolve_output_dir(cfg, args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.name}.yaml").write_text(text)
        print(f"wrote {out / (args.name + '.yaml')}")
    return EXIT_OK


def _cmd_network(args) -> int:
    section = {"nodes": args.nodes, "prob": args.prob, "updates": args.updates,
               "homophily": args.homophily, "activity": args.activity, "seed": args.seed}
    if args.levels:
        section["level_counts"] = [int(c) for c in args.levels.split(",")]
    elif args.nodes != sum(DEFAULT_LEVEL_COUNTS):
        raise ValidationError(f"--levels is required when --nodes != {sum(DEFAULT_LEVEL_COUNTS)}")
    cfg = build_config({"experiment_kind": "network_trace", "preset": "table1", "network": section})
    manifest = run_experiment(cfg, out_dir=args.out, backend=args.backend)
    s = manifest["manifest"]["summary"]
    print(f"modularity {s['initial_modularity']:.6f} -> {s['final_modularity']:.6f}; "
          f"density {s['initial_density']:.6f} -> {s['final_density']:.6f}; output in {manifest['outputs']}")
    return EXIT_OK


def _read_column(path: str, column: str | None):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise ValidationError(f"{path} has no data rows")
    names = list(rows[0].keys())
    if column is None:
        column = "prob" if "prob" in names else names[-1]
    if column not in names:
        raise ValidationError(f"{path} has no column {column!r}")
    try:
        return column, np.array([float(r[column]) for r in rows])
    except ValueError:
        raise ValidationError(f"{path}: column {column!r} is not numeric") from None


def _cmd_tv(args) -> int:
    col_a, a = _read_column(args.a, args.column)
    col_b, b = _read_column(args.b, args.column)
    if col_a == "prob" and col_b == "prob":
        if a.size != b.size:
            raise ValidationError("probability vectors must have the same length")
        p, q = a, b
    else:
        edges = shared_edges(a, b, args.bins)
        p, q = histogram_distribution(a, edges), histogram_distribution(b, edges)
    res = tv_all(p, q)
    print(json.dumps({"tv_sup": res.tv_sup, "tv_coupling": res.tv_coupling, "tv_partition": res.tv_partition}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epictl", description="Stochastic SIR control toolkit")
    parser.add_argument("--backend", choices=("numba", "numpy"), default=None,
                        help="kernel backend (default: EPICTL_BACKEND or numba)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a YAML/JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default: config, then EPICTL_OUT)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("preset", help="show or write a preset config")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--print", action="store_true", help="print the resolved config to stdout")
    p.add_argument("--kind", default="sir_ensemble", help="experiment_kind to put in the config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_preset)

    p = sub.add_parser("network", help="generate a network and run homophilous updates")
    p.add_argument("--nodes", type=int, default=100)
    p.add_argument("--prob", type=float, default=0.06)
    p.add_argument("--updates", type=int, default=1000)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--activity", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--levels", default=None, help="comma-separated node counts per immunity level")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_network)

    p = sub.add_parser("tv", help="total variation between two CSV distributions or samples")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--column", default=None, help="column to read (default: prob, else the last column)")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=_cmd_tv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EpictlError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
