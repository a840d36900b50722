"""Batch pipeline: ingestion, statistics, detection, comparison, PCA,
and co-membership regressions with reproducible configuration.

Every stage writes plain CSV with numbers at 12 significant digits; two
runs with the same configuration and seed produce byte-identical data
outputs (the manifest additionally records wall times, which vary).
"""

import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
import scipy

from . import __version__
from .community import DetectorConfig, detect
from .compare import herfindahl, nmi_matrix
from .errors import PipelineError, TradenetError
from .glm import (
    DEFAULT_COVARIATES,
    RTA_COVARIATES,
    fit_all_layers,
    load_covariates,
)
from .graph import MultiNetwork, Partition, load_layers, log_weights
from .multilayer import MultilayerConfig, detect_multilayer, diversification
from .pca import prune_and_pca
from .stats import STAT_COLUMNS, intensity_ratio, layer_stats, layer_weight_correlation
from .errors import UndefinedStatisticError

GLM_TOLERANCES = {"grad_tol": 1e-8, "loglik_tol": 1e-10, "max_iter": 100}


@dataclass
class RunConfig:
    edges: str = ""
    covariates: str = ""
    outdir: str = "out"
    years: tuple = ()
    commodities: tuple = ()
    seed: int = 0
    restarts: int = 10
    max_iterations: int = 20
    max_levels: int = 20
    max_repetitions: int = 50
    min_gain: float = 1e-10
    resolution: float = 1.0
    coupling: float = 1.0
    prune_threshold: float = 0.9
    active_nodes_only: bool = False
    include_inactive_pairs: bool = False
    link: str = "probit"
    econ_mode: str = "cross_section"
    panel_commodities: tuple = ()
    rta_dummies: bool = False
    threads: int = 1

    def detector_config(self):
        return DetectorConfig(
            resolution=self.resolution,
            restarts=self.restarts,
            max_iterations=self.max_iterations,
            max_levels=self.max_levels,
            max_repetitions=self.max_repetitions,
            min_gain=self.min_gain,
            rng_seed=self.seed,
        )


_TUPLE_FIELDS = {"years", "commodities", "panel_commodities"}
_BOOL_FIELDS = {"active_nodes_only", "include_inactive_pairs", "rta_dummies"}


def _coerce(name, value, kind):
    value = value.strip()
    if name in _TUPLE_FIELDS:
        items = [v.strip() for v in value.split(",") if v.strip()]
        if name == "years":
            return tuple(int(v) for v in items)
        return tuple(items)
    if name in _BOOL_FIELDS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    return kind(value)


def parse_config(path=None, overrides=None):
    """Flat key = value configuration file with override pairs on top."""
    defaults = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    values = {}

    def apply(name, raw, where):
        if name not in known:
            raise ValueError(f"{where}: unknown configuration key {name!r}")
        values[name] = _coerce(name, raw, type(getattr(defaults, name)))

    if path:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                name, raw = stripped.split("=", 1)
                apply(name.strip(), raw, f"{path}:{lineno}")
    for name, raw in (overrides or {}).items():
        apply(name, str(raw), "override")
    return RunConfig(**values)


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".12g")
    return str(x)


def _write_csv(path, header, rows, seed=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _data_lines(path):
    """Lines of a data CSV with `#` metadata comments stripped."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [line for line in fh if not line.startswith("#")]


def _sorted_keys(layers):
    return sorted(layers, key=lambda k: (k[1], k[0]))


def year_active_counts(layers):
    """Number of nodes active in each year across all its layers."""
    active = {}
    for (commodity, year), layer in layers.items():
        mask = active.setdefault(year, np.zeros(layer.n_nodes, dtype=bool))
        mask |= layer.active_mask()
    return {year: int(mask.sum()) for year, mask in active.items()}


def stage_stats(layers, outdir, active_only=False, seed=None):
    """Write stats.csv and per-year cross-layer weight correlations."""
    year_n = year_active_counts(layers)
    rows = []
    records = {}
    for key in _sorted_keys(layers):
        commodity, year = key
        layer = layers[key]
        n_nodes = None if active_only else year_n[year]
        rec = layer_stats(layer, n_nodes=n_nodes, active_only=active_only)
        try:
            ratio = intensity_ratio(layer)
        except UndefinedStatisticError:
            ratio = math.nan
        records[key] = rec
        rows.append([year, commodity, *rec.as_tuple(), ratio])
    _write_csv(
        os.path.join(outdir, "stats.csv"),
        ["year", "commodity", *STAT_COLUMNS, "intensity_ratio"],
        rows,
        seed=seed,
    )
    years = sorted({key[1] for key in layers})
    for year in years:
        keys = [k for k in _sorted_keys(layers) if k[1] == year]
        logs = [log_weights(layers[k]) for k in keys]
        corr = layer_weight_correlation(logs)
        header = ["commodity"] + [k[0] for k in keys]
        out_rows = [
            [keys[i][0], *corr[i].tolist()] for i in range(len(keys))
        ]
        _write_csv(
            os.path.join(outdir, f"corr_weights_{year}.csv"), header, out_rows,
            seed=seed,
        )
    return records


def stage_detect(layers, det_cfg, outdir, threads=1):
    """Detect communities per layer; write partitions and the Q log."""
    keys = _sorted_keys(layers)

    def run(key):
        return detect(layers[key], det_cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip(keys, pool.map(run, keys)))
    else:
        results = {key: run(key) for key in keys}
    rows = []
    for key in keys:
        commodity, year = key
        layer = layers[key]
        assignment = results[key].partition.assignment
        for node in range(layer.n_nodes):
            rows.append([year, commodity, layer.labels[node], int(assignment[node])])
    _write_csv(
        os.path.join(outdir, "partitions.csv"),
        ["year", "commodity", "node", "community"],
        rows,
        seed=det_cfg.rng_seed,
    )
    with open(
        os.path.join(outdir, "detection_log.jsonl"), "w", encoding="utf-8"
    ) as fh:
        fh.write(
            json.dumps(
                {"meta": "detection-log", "seed": det_cfg.rng_seed,
                 "restarts": det_cfg.restarts},
                sort_keys=True,
            )
            + "\n"
        )
        for key in keys:
            commodity, year = key
            for entry in results[key].restart_log:
                fh.write(
                    json.dumps(
                        {
                            "year": year,
                            "commodity": commodity,
                            "restart": entry["restart"],
                            "q": float(_fmt(entry["q"])),
                            "trajectory": [float(_fmt(q)) for q in entry["trajectory"]],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    return results


def stage_detect_multi(layers, config, outdir):
    """Multilayer detection per year; write partitions and diversification."""
    years = sorted({key[1] for key in layers})
    det = config.detector_config()
    ml_cfg = MultilayerConfig(coupling=config.coupling, resolution=config.resolution,
                              detector=det)
    part_rows = []
    div_rows = []
    hist_rows = []
    q_stars = {}
    for year in years:
        keys = [k for k in _sorted_keys(layers) if k[1] == year]
        net = MultiNetwork(
            [layers[k] for k in keys], coupling=config.coupling
        )
        mlp, q_star = detect_multilayer(net, ml_cfg)
        q_stars[year] = q_star
        labels = net.labels
        for x, key in enumerate(keys):
            for node in range(net.n_nodes):
                part_rows.append(
                    [year, labels[node], key[0], int(mlp.assignment[x, node])]
                )
        div = diversification(mlp)
        for node in range(net.n_nodes):
            div_rows.append([year, labels[node], int(div[node])])
        counts = np.bincount(div)
        for value in range(1, counts.size):
            if counts[value]:
                hist_rows.append([year, value, int(counts[value])])
    _write_csv(
        os.path.join(outdir, "multilayer_partitions.csv"),
        ["year", "node", "commodity", "community"],
        part_rows,
        seed=config.seed,
    )
    _write_csv(
        os.path.join(outdir, "diversification.csv"),
        ["year", "node", "diversification"],
        div_rows,
        seed=config.seed,
    )
    _write_csv(
        os.path.join(outdir, "diversification_hist.csv"),
        ["year", "diversification", "n_countries"],
        hist_rows,
        seed=config.seed,
    )
    return q_stars


def stage_compare(layers, partitions, outdir, inactive="drop", seed=None):
    """Write per-year pairwise NMI matrices and the Herfindahl table."""
    years = sorted({key[1] for key in layers})
    for year in years:
        keys = [k for k in _sorted_keys(layers) if k[1] == year]
        by_commodity = {k[0]: partitions[k] for k in keys}
        masks = {k[0]: layers[k].active_mask() for k in keys}
        names, matrix = nmi_matrix(by_commodity, masks, inactive=inactive)
        header = ["commodity"] + names
        rows = [[names[i], *matrix[i].tolist()] for i in range(len(names))]
        _write_csv(os.path.join(outdir, f"nmi_{year}.csv"), header, rows,
                   seed=seed)
    rows = []
    for key in _sorted_keys(layers):
        commodity, year = key
        partition = partitions[key]
        rows.append(
            [
                year,
                commodity,
                herfindahl(partition, normalized=False),
                herfindahl(partition, normalized=True),
                partition.n_communities,
            ]
        )
    _write_csv(
        os.path.join(outdir, "herfindahl.csv"),
        ["year", "commodity", "H", "H_normalized", "K"],
        rows,
        seed=seed,
    )


def stage_pca(stats_records, outdir, threshold=0.9, priority=None, seed=None):
    """Prune and decompose the layer-statistics matrix; write CSVs."""
    keys = sorted(stats_records, key=lambda k: (k[1], k[0]))
    matrix = []
    kept_keys = []
    skipped = []
    for key in keys:
        row = stats_records[key].as_tuple()
        if all(math.isfinite(v) for v in row):
            matrix.append(row)
            kept_keys.append(key)
        else:
            skipped.append(key)
    if len(matrix) < 2:
        raise PipelineError("pca: fewer than 2 layers with complete statistics")
    arr = np.array(matrix)
    names = list(STAT_COLUMNS)
    constant = [c for c in range(arr.shape[1]) if arr[:, c].std() == 0.0]
    dropped_constant = [names[c] for c in constant]
    if constant:
        keep = [c for c in range(arr.shape[1]) if c not in constant]
        if len(keep) < 2:
            raise PipelineError("pca: fewer than 2 varying statistics")
        arr = arr[:, keep]
        names = [names[c] for c in keep]
    result = prune_and_pca(arr, names, threshold=threshold, priority=priority)
    n_comp = result.loadings.shape[1]
    comp_names = [f"pc{i + 1}" for i in range(n_comp)]
    _write_csv(
        os.path.join(outdir, "pca_scores.csv"),
        ["year", "commodity", *comp_names],
        [
            [key[1], key[0], *result.scores[i].tolist()]
            for i, key in enumerate(kept_keys)
        ],
        seed=seed,
    )
    _write_csv(
        os.path.join(outdir, "pca_loadings.csv"),
        ["variable", *comp_names],
        [
            [name, *result.loadings[i].tolist()]
            for i, name in enumerate(result.kept_variables)
        ],
        seed=seed,
    )
    _write_csv(
        os.path.join(outdir, "pca_explained.csv"),
        ["component", "explained_variance_ratio"],
        [[comp_names[i], result.explained_variance_ratio[i]] for i in range(n_comp)],
        seed=seed,
    )
    return result, {"layers": skipped, "constant_columns": dropped_constant}


def stage_econ(layers, partitions, table, outdir, link="probit",
               mode="cross_section", covariates=None, include_inactive=False,
               panel_commodities=None, seed=None):
    """Fit co-membership models and write the tidy results table."""
    layer_partitions = {
        key: (partitions[key], layers[key]) for key in layers
    }
    results = fit_all_layers(
        layer_partitions,
        table,
        link=link,
        mode=mode,
        covariates=covariates,
        include_inactive=include_inactive,
        panel_commodities=panel_commodities,
    )
    rows = []
    failures = []
    for res in results:
        if res.fit is None:
            failures.append(
                {"commodity": res.commodity, "year": res.year, "error": res.error}
            )
            continue
        glm_fit = res.fit
        year_out = res.year if res.year is not None else ""
        ses = glm_fit.se
        zs = glm_fit.z
        for k, term in enumerate(glm_fit.columns):
            ame, ame_se = glm_fit.ame.get(term, (None, None))
            rows.append(
                [
                    res.commodity,
                    year_out,
                    term,
                    glm_fit.beta[k],
                    float(ses[k]),
                    "" if ame is None else ame,
                    "" if ame_se is None else ame_se,
                    float(zs[k]),
                    glm_fit.loglik,
                    glm_fit.aic,
                    glm_fit.n_obs,
                ]
            )
    _write_csv(
        os.path.join(outdir, "regressions.csv"),
        ["commodity", "year", "term", "estimate", "se", "ame", "ame_se", "z",
         "loglik", "aic", "n"],
        rows,
        seed=seed,
    )
    return results, failures


def run_pipeline(config, echo=None):
    """Run every stage end to end; returns the manifest dictionary.

    A hard stage failure raises :class:`PipelineError` naming the stage;
    per-row data problems are collected as diagnostics instead.
    """
    echo = echo or (lambda message: print(message, file=sys.stderr))
    os.makedirs(config.outdir, exist_ok=True)
    manifest = {
        "config": asdict(config),
        "seed": config.seed,
        "versions": {
            "tradenet": __version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "tolerances": {
            "min_gain": config.min_gain,
            "prune_threshold": config.prune_threshold,
            **GLM_TOLERANCES,
        },
        "stage_seconds": {},
        "skipped_stages": {},
        "diagnostics": {},
    }

    def timed(name, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except TradenetError:
            raise
        except Exception as exc:
            raise PipelineError(f"{name}: {exc}") from exc
        manifest["stage_seconds"][name] = time.perf_counter() - start
        return result

    diagnostics = []
    layers = timed(
        "load",
        load_layers,
        config.edges,
        years=config.years or None,
        commodities=config.commodities or None,
        strict=False,
        diagnostics=diagnostics,
    )
    manifest["diagnostics"]["load"] = diagnostics
    if not layers:
        raise PipelineError("load: no layers match the year/commodity selection")
    manifest["n_layers"] = len(layers)

    stats_records = timed(
        "stats", stage_stats, layers, config.outdir, config.active_nodes_only,
        config.seed,
    )
    detections = timed(
        "detect", stage_detect, layers, config.detector_config(), config.outdir,
        config.threads,
    )
    partitions = {key: detections[key].partition for key in layers}
    manifest["modularity"] = {
        f"{key[0]}:{key[1]}": float(_fmt(detections[key].modularity))
        for key in _sorted_keys(layers)
    }
    q_stars = timed("detect_multi", stage_detect_multi, layers, config, config.outdir)
    manifest["q_star"] = {str(y): float(_fmt(q)) for y, q in q_stars.items()}
    timed(
        "compare", stage_compare, layers, partitions, config.outdir,
        seed=config.seed,
    )
    complete = sum(
        1
        for rec in stats_records.values()
        if all(math.isfinite(v) for v in rec.as_tuple())
    )
    if complete >= 2:
        _, pca_skipped = timed(
            "pca", stage_pca, stats_records, config.outdir,
            config.prune_threshold, seed=config.seed,
        )
        manifest["diagnostics"]["pca_skipped_layers"] = [
            f"{k[0]}:{k[1]}" for k in pca_skipped["layers"]
        ]
        manifest["diagnostics"]["pca_constant_columns"] = pca_skipped[
            "constant_columns"
        ]
    else:
        reason = "fewer than 2 layers with complete statistics"
        manifest["skipped_stages"]["pca"] = reason
        echo(f"pca stage skipped: {reason}")

    if config.covariates and os.path.exists(config.covariates):
        cov_diag = []
        table = load_covariates(config.covariates, diagnostics=cov_diag)
        manifest["diagnostics"]["covariates"] = cov_diag
        covariates = RTA_COVARIATES if config.rta_dummies else DEFAULT_COVARIATES
        _, failures = timed(
            "econ",
            stage_econ,
            layers,
            partitions,
            table,
            config.outdir,
            config.link,
            config.econ_mode,
            list(covariates),
            config.include_inactive_pairs,
            config.panel_commodities or None,
            config.seed,
        )
        manifest["diagnostics"]["econ_failures"] = failures
    else:
        reason = (
            "no covariates file configured"
            if not config.covariates
            else f"covariates file not found: {config.covariates}"
        )
        manifest["skipped_stages"]["econ"] = reason
        echo(f"econ stage skipped: {reason}")

    with open(
        os.path.join(config.outdir, "manifest.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_partitions_csv(path, layers):
    """Read a partitions CSV back into per-layer Partition objects."""
    grouped = {}
    reader = csv.DictReader(_data_lines(path))
    for row in reader:
        key = (row["commodity"], int(row["year"]))
        grouped.setdefault(key, {})[row["node"]] = int(row["community"])
    out = {}
    for key, mapping in grouped.items():
        layer = layers.get(key)
        if layer is None:
            continue
        raw = [mapping[label] for label in layer.labels]
        out[key] = Partition.from_raw(raw)
    return out


def read_stats_csv(path):
    """Read stats.csv back into ((commodity, year) keys, matrix) form."""
    keys = []
    rows = []
    reader = csv.DictReader(_data_lines(path))
    for row in reader:
        keys.append((row["commodity"], int(row["year"])))
        rows.append([float(row[name]) for name in STAT_COLUMNS])
    return keys, np.array(rows)
