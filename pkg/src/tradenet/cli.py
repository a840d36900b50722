"""Command line interface.

Subcommands mirror the pipeline stages (ingest, stats, detect,
detect-multi, compare, pca, probit) plus `pipeline` which runs the whole
chain from a flat key = value configuration file with command-line
overrides.  Exit code 0 only on fully successful runs.
"""

import argparse
import os
import sys

from .errors import TradenetError
from .glm import DEFAULT_COVARIATES, RTA_COVARIATES, load_covariates
from .graph import load_layers
from .ingest import ingest
from .pipeline import (
    RunConfig,
    parse_config,
    read_partitions_csv,
    read_stats_csv,
    run_pipeline,
    stage_compare,
    stage_detect,
    stage_detect_multi,
    stage_econ,
    stage_pca,
    stage_stats,
)
from .stats import StatsRecord


def _add_selection(parser):
    parser.add_argument("--years", default="", help="comma separated years")
    parser.add_argument("--commodities", default="", help="comma separated keys")


def _add_detector(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--restarts", type=int, default=10)
    parser.add_argument("--resolution", type=float, default=1.0)
    parser.add_argument("--max-iterations", type=int, default=20)
    parser.add_argument("--max-levels", type=int, default=20)
    parser.add_argument("--max-repetitions", type=int, default=50)
    parser.add_argument("--min-gain", type=float, default=1e-10)


def _selection(args):
    years = tuple(int(y) for y in args.years.split(",") if y.strip())
    commodities = tuple(c.strip() for c in args.commodities.split(",") if c.strip())
    return years or None, commodities or None


def _load(args):
    years, commodities = _selection(args)
    layers = load_layers(args.edges, years=years, commodities=commodities,
                         strict=False, diagnostics=[])
    if not layers:
        raise TradenetError("no layers match the year/commodity selection")
    return layers


def _config_from_args(args):
    cfg = RunConfig(
        edges=args.edges,
        outdir=args.out,
        seed=args.seed,
        restarts=args.restarts,
        resolution=args.resolution,
        max_iterations=args.max_iterations,
        max_levels=args.max_levels,
        max_repetitions=args.max_repetitions,
        min_gain=args.min_gain,
        coupling=getattr(args, "coupling", 1.0),
    )
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tradenet",
        description="Layered trade network statistics, communities, and models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert raw flows to the edge-list CSV")
    p.add_argument("--raw", required=True)
    p.add_argument("--factors", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="per-layer statistics and correlations")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--active-nodes", action="store_true",
                   help="use per-layer active node counts instead of the year universe")
    _add_selection(p)

    p = sub.add_parser("detect", help="per-layer community detection")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    _add_selection(p)
    _add_detector(p)

    p = sub.add_parser("detect-multi", help="multilayer community detection")
    p.add_argument("--edges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--coupling", type=float, default=1.0)
    _add_selection(p)
    _add_detector(p)

    p = sub.add_parser("compare", help="NMI matrices and Herfindahl table")
    p.add_argument("--edges", required=True)
    p.add_argument("--partitions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-inactive", action="store_true")
    _add_selection(p)

    p = sub.add_parser("pca", help="prune and decompose a stats table")
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.9)

    p = sub.add_parser("probit", help="co-membership probit/logit models")
    p.add_argument("--edges", required=True)
    p.add_argument("--partitions", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--link", choices=("probit", "logit"), default="probit")
    p.add_argument("--mode", choices=("cross_section", "panel"),
                   default="cross_section")
    p.add_argument("--panel-commodities", default="")
    p.add_argument("--rta", action="store_true",
                   help="specific regional agreement dummies instead of pooled FTA")
    p.add_argument("--include-inactive", action="store_true")
    _add_selection(p)

    p = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key")
    p.add_argument("--edges", default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (TradenetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args):
    if args.command == "ingest":
        report = ingest(args.raw, args.out, factors_path=args.factors)
        for message in report.diagnostics:
            print(message, file=sys.stderr)
        print(
            f"rows={report.rows_read} edges={report.edges_written} "
            f"no_factor={report.skipped_no_factor} zero={report.skipped_zero} "
            f"malformed={report.skipped_malformed} "
            f"self_loop={report.skipped_self_loop}"
        )
        return 0

    if args.command == "stats":
        layers = _load(args)
        os.makedirs(args.out, exist_ok=True)
        stage_stats(layers, args.out, active_only=args.active_nodes)
        return 0

    if args.command == "detect":
        layers = _load(args)
        os.makedirs(args.out, exist_ok=True)
        cfg = _config_from_args(args)
        stage_detect(layers, cfg.detector_config(), args.out)
        return 0

    if args.command == "detect-multi":
        layers = _load(args)
        os.makedirs(args.out, exist_ok=True)
        cfg = _config_from_args(args)
        stage_detect_multi(layers, cfg, args.out)
        return 0

    if args.command == "compare":
        layers = _load(args)
        os.makedirs(args.out, exist_ok=True)
        partitions = read_partitions_csv(args.partitions, layers)
        missing = sorted(set(layers) - set(partitions))
        if missing:
            raise TradenetError(f"partitions missing for layers: {missing}")
        stage_compare(layers, partitions, args.out,
                      inactive="keep" if args.include_inactive else "drop")
        return 0

    if args.command == "pca":
        keys, matrix = read_stats_csv(args.stats)
        os.makedirs(args.out, exist_ok=True)
        records = {
            key: StatsRecord(*matrix[i].tolist()) for i, key in enumerate(keys)
        }
        stage_pca(records, args.out, threshold=args.threshold)
        return 0

    if args.command == "probit":
        layers = _load(args)
        os.makedirs(args.out, exist_ok=True)
        partitions = read_partitions_csv(args.partitions, layers)
        missing = sorted(set(layers) - set(partitions))
        if missing:
            raise TradenetError(f"partitions missing for layers: {missing}")
        table = load_covariates(args.covariates, diagnostics=[])
        panel = tuple(
            c.strip() for c in args.panel_commodities.split(",") if c.strip()
        )
        covariates = RTA_COVARIATES if args.rta else DEFAULT_COVARIATES
        _, failures = stage_econ(
            layers, partitions, table, args.out,
            link=args.link, mode=args.mode, covariates=list(covariates),
            include_inactive=args.include_inactive,
            panel_commodities=panel or None,
        )
        for failure in failures:
            print(
                f"skipped {failure['commodity']} {failure['year']}: "
                f"{failure['error']}",
                file=sys.stderr,
            )
        return 0

    if args.command == "pipeline":
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise TradenetError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        for name in ("edges", "outdir", "seed", "threads"):
            value = getattr(args, name)
            if value is not None:
                overrides[name] = value
        try:
            config = parse_config(args.config, overrides)
        except ValueError as exc:
            raise TradenetError(str(exc)) from None
        run_pipeline(config)
        return 0

    raise TradenetError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
