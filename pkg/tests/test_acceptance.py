"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines.  Criterion 11 needs a real 2011 trade extract and is skipped
unless the TRADENET_FAOSTAT_2011 environment variable points at an
edge-list CSV (see README).
"""

import filecmp
import functools
import json
import math
import os
import time

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

import tradenet as tn
from oracles import (
    best_multilayer_exhaustive,
    best_partition_exhaustive,
    modularity_direct,
    planted_blocks,
    q_star_direct,
    random_layer,
)
from tradenet import stats
from tradenet.community import DetectorConfig, detect, evaluate_modularity, \
    local_move_gain
from tradenet.compare import nmi
from tradenet.glm import DyadFrame, fit
from tradenet.graph import (
    MultiNetwork,
    Partition,
    build_layer,
    load_layers,
    log_weights,
)
from tradenet.multilayer import (
    MultilayerConfig,
    detect_multilayer,
    diversification,
    project,
)
from tradenet.pca import pca
from tradenet.pipeline import parse_config, run_pipeline


def criterion(num, name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                out = fn(*args, **kwargs)
            except pytest.skip.Exception:
                print(f"ACCEPTANCE {num:02d} {name}: SKIPPED")
                raise
            except BaseException:
                print(f"ACCEPTANCE {num:02d} {name}: FAIL")
                raise
            print(f"ACCEPTANCE {num:02d} {name}: PASS")
            return out

        return wrapper

    return deco


@criterion(1, "modularity-oracle")
def test_modularity_oracle_corpus():
    start = time.perf_counter()
    for inst in range(20):
        rng = np.random.default_rng([42, inst])
        n = int(rng.integers(4, 9))
        layer = random_layer(rng, n, density=float(rng.uniform(0.25, 0.7)))
        best_q, _ = best_partition_exhaustive(layer)
        res = detect(layer, DetectorConfig(restarts=10, rng_seed=42))
        assert abs(res.modularity - best_q) <= 1e-9, (
            f"instance {inst}: detect {res.modularity!r} vs optimum {best_q!r}"
        )
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"corpus enumeration took {elapsed:.1f}s"


@criterion(2, "move-gain-identity")
def test_move_gain_identity():
    failures = 0
    rng = np.random.default_rng(20240202)
    for _ in range(1000):
        n = int(rng.integers(3, 11))
        layer = random_layer(rng, n, density=float(rng.uniform(0.2, 0.8)))
        p = Partition.from_raw(rng.integers(0, max(2, n // 2), size=n))
        node = int(rng.integers(0, n))
        target = int(rng.integers(0, p.n_communities))
        gain = local_move_gain(layer, p, node, target)
        after = p.assignment.copy()
        after[node] = target
        full = modularity_direct(layer, after) - modularity_direct(
            layer, p.assignment
        )
        if abs(gain - full) > 1e-12:
            failures += 1
    assert failures == 0


@criterion(3, "planted-recovery")
def test_planted_recovery():
    start = time.perf_counter()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng([1000, seed])
        layer, planted = planted_blocks(
            rng, n=64, k=4, p_in=0.5, p_out=0.02, w_low=1.0, w_high=2.0
        )
        res = detect(layer, DetectorConfig(restarts=10, rng_seed=seed))
        score = nmi(res.partition, Partition.from_raw(planted))
        if score >= 0.95:
            hits += 1
    elapsed = time.perf_counter() - start
    assert hits >= 95, f"recovered only {hits}/100"
    assert elapsed < 10.0, f"recovery run took {elapsed:.1f}s"


def _planted_stack(rng, n=8, n_layers=3):
    labels = [f"n{i}" for i in range(n)]
    layers = []
    for x in range(n_layers):
        half = n // 2
        edges = []
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                same = (i < half) == (j < half)
                if rng.random() < (0.8 if same else 0.15):
                    edges.append(
                        (labels[i], labels[j], float(rng.uniform(1.0, 2.0)))
                    )
        layers.append(
            build_layer(edges, universe=labels, commodity=f"L{x}", year=2011)
        )
    return layers


@criterion(4, "multilayer-limits")
def test_multilayer_limits():
    for inst in range(20):
        rng = np.random.default_rng([4242, inst])
        layers = _planted_stack(rng)
        assert all(lay.active_mask().all() for lay in layers)
        net0 = MultiNetwork(layers, coupling=0.0)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=10, rng_seed=42))
        mlp, _ = detect_multilayer(net0, cfg)
        for x, lay in enumerate(layers):
            single = detect(lay, DetectorConfig(restarts=10, rng_seed=42))
            assert nmi(project(mlp, x), single.partition) == 1.0, (
                f"instance {inst} layer {x} projection differs"
            )
        theta = 10.0 * max(lay.volume for lay in layers)
        net_big = MultiNetwork(layers, coupling=theta)
        mlp_big, _ = detect_multilayer(net_big, cfg)
        assert (diversification(mlp_big) == 1).all()


@criterion(5, "q-star-oracle")
def test_q_star_oracle():
    for inst in range(5):
        rng = np.random.default_rng([5050, inst])
        labels = ["a", "b", "c"]
        layers = []
        for x in range(2):
            edges = []
            for i in range(3):
                for j in range(3):
                    if i != j and rng.random() < 0.7:
                        edges.append(
                            (labels[i], labels[j], float(rng.uniform(0.5, 2.0)))
                        )
            if not edges:
                edges.append((labels[0], labels[1], 1.0))
            layers.append(
                build_layer(edges, universe=labels, commodity=f"L{x}", year=1)
            )
        theta = float(rng.uniform(0.0, 1.5))
        net = MultiNetwork(layers, coupling=theta)
        # library evaluation matches the direct formula on every partition
        from oracles import set_partitions
        from tradenet.graph import MultilayerPartition

        best_direct = -np.inf
        for assign in set_partitions(6):
            a2d = np.array(assign).reshape(2, 3)
            direct = q_star_direct(net, a2d, theta)
            best_direct = max(best_direct, direct)
            mlp = MultilayerPartition(
                Partition.from_raw(np.array(assign)).assignment.reshape(2, 3),
                ("L0", "L1"),
            )
            lib = tn.evaluate_q_star(net, mlp)
            assert abs(lib - direct) <= 1e-9
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=10, rng_seed=42))
        _, q_detected = detect_multilayer(net, cfg)
        assert q_detected <= best_direct + 1e-9


@criterion(6, "nmi-suite")
def test_nmi_suite():
    rng = np.random.default_rng(606)
    for _ in range(50):
        n = int(rng.integers(2, 60))
        p = Partition.from_raw(rng.integers(0, 6, size=n))
        assert nmi(p, p) == 1.0
        perm = rng.permutation(p.n_communities)
        relabeled = Partition.from_raw(perm[p.assignment])
        assert nmi(p, relabeled) == 1.0
    pa = Partition.from_raw(np.random.default_rng(1).integers(0, 4, size=2000))
    pb = Partition.from_raw(np.random.default_rng(2).integers(0, 4, size=2000))
    assert nmi(pa, pb) < 0.05


@criterion(7, "probit-recovery")
def test_probit_recovery():
    beta_true = np.array([0.5, -1.0, 0.3])
    hits = 0
    worst_time = 0.0
    for seed in range(100):
        rng = np.random.default_rng([7000, seed])
        n = 10000
        x1, x2 = rng.normal(size=n), rng.normal(size=n)
        design = np.column_stack([np.ones(n), x1, x2])
        y = (rng.random(n) < ndtr(design @ beta_true)).astype(float)
        frame = DyadFrame(
            y=y, X=design, columns=["intercept", "x1", "x2"],
            covariates=["x1", "x2"],
        )
        start = time.perf_counter()
        res = fit(frame, "probit")
        worst_time = max(worst_time, time.perf_counter() - start)
        if (np.abs(res.beta - beta_true) < 3 * res.se).all():
            hits += 1
    assert hits >= 99, f"recovered {hits}/100"
    assert worst_time < 1.0, f"slowest fit {worst_time:.2f}s"
    # intercept-only closed forms
    for p_share in (0.2, 0.5, 0.73):
        m = 1000
        y = np.zeros(m)
        y[: int(p_share * m)] = 1.0
        p_hat = y.mean()
        frame = DyadFrame(
            y=y, X=np.ones((m, 1)), columns=["intercept"], covariates=[]
        )
        res = fit(frame, "probit")
        assert abs(res.beta[0] - ndtri(p_hat)) < 1e-10
        closed = m * (
            p_hat * math.log(p_hat) + (1 - p_hat) * math.log(1 - p_hat)
        )
        assert abs(res.loglik - closed) < 1e-10


@criterion(8, "pca-identities")
def test_pca_identities():
    rng = np.random.default_rng(808)
    m = rng.normal(size=(100, 6))
    names = list("abcdef")
    res = pca(m, names)
    eye = res.loadings.T @ res.loadings
    assert np.abs(eye - np.eye(6)).max() < 1e-9
    z = (m - m.mean(0)) / m.std(0, ddof=1)
    assert np.abs(res.scores @ res.loadings.T - z).max() < 1e-9
    scaled = pca(m * np.array([2.0, 0.5, 4.0, 8.0, 1.0, 0.25]), names)
    assert np.array_equal(res.loadings, scaled.loadings)
    assert np.array_equal(res.scores, scaled.scores)
    iso = pca(np.random.default_rng(3).normal(size=(5000, 3)), list("abc"))
    assert np.abs(iso.explained_variance_ratio - 1 / 3).max() < 0.05


@criterion(9, "statistics-examples-and-ranges")
def test_statistics_examples_and_ranges():
    # hand examples, frozen from their stated oracles
    layer = build_layer([("A", "B", 1), ("B", "A", 1), ("A", "C", 1)])
    assert stats.density(layer) == 0.5
    assert stats.bilateral_density(layer) == pytest.approx(2 / 3)
    assert stats.weighted_asymmetry(
        build_layer([("A", "B", 3.0), ("B", "A", 1.0)])
    ) == 0.4
    assert stats.lcc_size(
        build_layer([("A", "B", 1), ("B", "C", 1)], universe=list("ABCD"))
    ) == 3
    star_edges = []
    for leaf in "BCD":
        star_edges += [("A", leaf, 1.0), (leaf, "A", 1.0)]
    star = build_layer(star_edges)
    assert stats.centralization(star) == 1.0
    assert stats.assortativity(star, "binary") < 0
    cycle3 = build_layer([("A", "B", 1), ("B", "C", 1), ("C", "A", 1)])
    # matrix-power oracle for the clustering formula
    mat = np.zeros((3, 3))
    for i, j, _ in cycle3.edges():
        mat[i, j] = 1.0
    s = mat + mat.T
    oracle = float(
        (np.diag(np.linalg.matrix_power(s, 3)) / (2 * (2 * (2 - 1)))).mean()
    )
    assert stats.clustering(cycle3, "binary") == oracle == 0.5
    lw = log_weights(build_layer([("A", "B", math.exp(2)), ("B", "C", math.exp(3))]))
    mean, std = stats.weight_moments(lw)
    assert abs(mean - 2.5) < 1e-12 and abs(std - 0.5) < 1e-12
    assert stats.intensity_ratio(
        build_layer([("A", "B", 4.0), ("C", "B", 2.0), ("A", "C", 2.0)])
    ) == 1.0

    # range invariants over 10 000 random layers
    rng = np.random.default_rng(909)
    for _ in range(10000):
        n = int(rng.integers(2, 11))
        lay = random_layer(rng, n, density=float(rng.uniform(0.1, 0.9)))
        rec = stats.layer_stats(lay)
        assert 0.0 <= rec.density <= 1.0
        assert 0.0 <= rec.bilateral_density <= 1.0
        assert -1e-12 <= rec.weighted_asymmetry <= 1.0 + 1e-12
        assert 1 <= rec.lcc_size <= n
        for value in (rec.bin_assortativity, rec.wei_assortativity):
            if not math.isnan(value):
                assert -1.0 - 1e-12 <= value <= 1.0 + 1e-12
        for value in (rec.bin_clustering, rec.wei_clustering):
            if not math.isnan(value):
                assert -1e-12 <= value <= 1.0 + 1e-12


@criterion(10, "pipeline-determinism")
def test_pipeline_determinism(demo_dataset, tmp_path):
    outs = []
    for run in (1, 2):
        outdir = tmp_path / f"run{run}"
        cfg = parse_config(None, {
            "edges": demo_dataset["edges"],
            "covariates": demo_dataset["covars"],
            "outdir": str(outdir),
            "seed": "42",
            "restarts": "4",
        })
        run_pipeline(cfg)
        outs.append(outdir)
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    for name in names:
        a, b = outs[0] / name, outs[1] / name
        if name == "manifest.json":
            ma, mb = json.load(open(a)), json.load(open(b))
            ma.pop("stage_seconds")
            mb.pop("stage_seconds")
            ma["config"].pop("outdir")
            mb["config"].pop("outdir")
            assert ma == mb
        else:
            assert filecmp.cmp(a, b, shallow=False), f"{name} differs"


@criterion(11, "reported-band-conditional")
def test_reported_band_conditional():
    path = os.environ.get("TRADENET_FAOSTAT_2011")
    if not path:
        pytest.skip("set TRADENET_FAOSTAT_2011 to a 2011 edge-list CSV to run")
    layers = load_layers(path, years=[2011])
    assert layers, "no 2011 layers in the supplied extract"
    for (commodity, year), layer in sorted(layers.items()):
        res = detect(layer, DetectorConfig(restarts=10, rng_seed=42))
        k = res.partition.n_communities
        if commodity.lower().startswith("cassava"):
            assert res.modularity < 0.2, (
                f"cassava modularity {res.modularity:.3f} not negligible"
            )
            continue
        assert 0.2 <= res.modularity <= 0.5, (
            f"{commodity} {year}: modularity {res.modularity:.3f} outside band"
        )
        assert 3 <= k <= 10, f"{commodity} {year}: {k} communities"
