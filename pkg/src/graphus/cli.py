"""Command-line entry point: ``graphus {generate,run,verify,approx-error}``.

Exit codes: 0 success, 1 run failure, 2 invalid config or infeasible parameters.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from graphus import __version__, kernels
from graphus.config import (
    dump_json,
    load_config,
    parse_approx_error,
    parse_experiment,
    parse_generate,
    parse_verify,
)
from graphus.csbm import sample
from graphus.errors import ConfigError, EnumerationLimitError, InfeasibleParametersError
from graphus.graph import save_dataset
from graphus.harness import FORMAT_VERSION, aggregate, curves_csv, run_experiment
from graphus.studies import approx_error_study, run_verification

log = logging.getLogger("graphus")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _require_config(args):
    if args.config is None:
        raise ConfigError(f"'{args.command}' needs --config")
    return load_config(args.config)


def _optional_config(args):
    return {} if args.config is None else load_config(args.config)


def cmd_generate(args) -> int:
    cfg = parse_generate(_require_config(args), args.seed_offset)
    g = sample(cfg.params, cfg.seed)
    out = Path(args.out)
    save_dataset(g, out)
    provenance = {"format_version": FORMAT_VERSION, "seed": cfg.seed, "params": cfg.params.to_dict(),
                  "graphus_version": __version__}
    atomic_write(out / "provenance.json", dump_json(provenance))
    log.info("wrote %d-node graph to %s", g.n, out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = parse_experiment(_require_config(args), args.seed_offset)
    out = Path(args.out)
    records, failures = run_experiment(cfg, jobs=args.jobs)
    atomic_write(out / "curves.csv", curves_csv(records))
    summary = {"format_version": FORMAT_VERSION, "baseline": cfg.baseline,
               "strategies": aggregate(records, cfg.baseline)}
    atomic_write(out / "summary.json", dump_json(summary))
    if failures:
        atomic_write(out / "failures.json", dump_json({"format_version": FORMAT_VERSION, "failures": failures}))
        log.error("%d of %d runs failed; see %s", len(failures), len(failures) + len(records),
                  out / "failures.json")
        return EXIT_FAILURE
    stale = out / "failures.json"
    if stale.exists():
        stale.unlink()
    log.info("wrote %d runs to %s", len(records), out)
    return EXIT_OK


def cmd_verify(args) -> int:
    data = _optional_config(args)
    cfg = parse_verify(data, args.seed_offset)
    max_terms = int((data.get("oracle") or {}).get("max_terms", 10**7))
    try:
        report = run_verification(cfg, max_terms=max_terms)
    except EnumerationLimitError as exc:
        raise ConfigError(f"{exc}; lower verify.max_nodes") from exc
    report["format_version"] = FORMAT_VERSION
    out = Path(args.out)
    target = out / "verify.json" if out.suffix != ".json" else out
    atomic_write(target, dump_json(report))
    log.info("max |log gap| %.3e, max CoV %.3e: %s", report["max_abs_log_gap"], report["max_cov"],
             "pass" if report["pass"] else "FAIL")
    return EXIT_OK if report["pass"] else EXIT_FAILURE


def cmd_approx_error(args) -> int:
    cfg, mf, max_terms = parse_approx_error(_optional_config(args), args.seed_offset)
    try:
        rows = approx_error_study(cfg, mf, max_terms)
    except EnumerationLimitError as exc:
        raise ConfigError(f"{exc}; lower approx_error.sizes") from exc
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["n", "sample", "median_err", "mean_err", "max_err"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    out = Path(args.out)
    target = out / "approx_error.csv" if out.suffix != ".csv" else out
    atomic_write(target, buf.getvalue())
    for r in rows:
        if r["sample"] == -1:
            log.info("n=%d median error %.4f", r["n"], r["median_err"])
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "verify": cmd_verify, "approx-error": cmd_approx_error}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON config file")
    common.add_argument("--out", type=Path, required=True, help="output directory (or file for verify/approx-error)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("--seed-offset", type=int, default=0, help="added to every seed in the config")
    common.add_argument("--verbose", "-v", action="count", default=0)
    parser = argparse.ArgumentParser(prog="graphus", description="Ground-truth uncertainty and active learning on CSBMs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="sample a CSBM graph into a dataset directory")
    sub.add_parser("run", parents=[common], help="run active-learning experiments")
    sub.add_parser("verify", parents=[common], help="check the exact uncertainty identities on random instances")
    sub.add_parser("approx-error", parents=[common], help="compare mean-field and exact marginals")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", kernels.BACKEND)
    if args.jobs < 1:
        print("graphus: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except InfeasibleParametersError as exc:
        print(f"graphus: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"graphus: error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
