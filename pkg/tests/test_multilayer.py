import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import (
    best_multilayer_exhaustive,
    q_star_direct,
    random_layer,
    set_partitions,
)
from tradenet.community import DetectorConfig, detect, evaluate_modularity
from tradenet.compare import nmi
from tradenet.errors import UndefinedStatisticError
from tradenet.graph import MultilayerPartition, MultiNetwork, build_layer
from tradenet.multilayer import (
    MultilayerConfig,
    detect_multilayer,
    diversification,
    evaluate_q_star,
    project,
)


def stacked_layers(rng, n, n_layers, density=0.5):
    labels = [f"n{i}" for i in range(n)]
    out = []
    for x in range(n_layers):
        lay = random_layer(rng, n, density=density, labels=labels)
        lay.commodity = f"L{x}"
        out.append(lay)
    return out


class TestEvaluateQStar:
    def test_single_layer_reduces_to_modularity(self):
        rng = np.random.default_rng(1)
        lay = stacked_layers(rng, 6, 1)[0]
        net = MultiNetwork([lay], coupling=3.0)
        for assign in ([0, 0, 1, 1, 2, 2], [0] * 6, list(range(6))):
            p = MultilayerPartition(np.array([assign]), ("L0",))
            from tradenet.graph import Partition

            q_single = evaluate_modularity(lay, Partition.from_raw(assign))
            assert evaluate_q_star(net, p) == pytest.approx(q_single, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_theta_zero_volume_weighted_combination(self, seed):
        rng = np.random.default_rng(seed)
        layers = stacked_layers(rng, 5, 2)
        net = MultiNetwork(layers, coupling=0.0)
        from tradenet.graph import Partition

        raw = np.concatenate(
            [rng.integers(0, 3, size=5), 3 + rng.integers(0, 3, size=5)]
        )
        a = Partition.from_raw(raw).assignment.reshape(2, 5)
        mlp = MultilayerPartition(a, ("L0", "L1"))

        q0 = evaluate_modularity(layers[0], Partition.from_raw(a[0]))
        q1 = evaluate_modularity(layers[1], Partition.from_raw(a[1]))
        v0, v1 = layers[0].volume, layers[1].volume
        expect = (v0 * q0 + v1 * q1) / (v0 + v1)
        assert evaluate_q_star(net, mlp) == pytest.approx(expect, abs=1e-12)

    def test_all_in_one_coupling_contribution(self):
        # 3 nodes, 2 layers: enumeration oracle for the one-community case
        rng = np.random.default_rng(3)
        layers = stacked_layers(rng, 3, 2, density=0.7)
        theta = 1.5
        net = MultiNetwork(layers, coupling=theta)
        a = np.zeros((2, 3), dtype=int)
        mlp = MultilayerPartition(a, ("L0", "L1"))
        got = evaluate_q_star(net, mlp)
        assert got == pytest.approx(q_star_direct(net, a, theta), abs=1e-12)
        # intra terms vanish at resolution 1; only coupling remains
        norm = layers[0].volume + layers[1].volume + theta * 3 * 2 * 1
        assert got == pytest.approx(theta * 3 * 2 / norm, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_direct_formula(self, seed):
        rng = np.random.default_rng(seed)
        layers = stacked_layers(rng, 4, 2)
        theta = float(rng.uniform(0, 2))
        net = MultiNetwork(layers, coupling=theta)
        flat = rng.integers(0, 4, size=8)
        from tradenet.graph import Partition

        a = Partition.from_raw(flat).assignment.reshape(2, 4)
        mlp = MultilayerPartition(a, ("L0", "L1"))
        assert evaluate_q_star(net, mlp) == pytest.approx(
            q_star_direct(net, a, theta), abs=1e-12
        )

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        layers = stacked_layers(rng, 4, 2)
        net = MultiNetwork(layers)
        bad = MultilayerPartition(np.zeros((1, 4), dtype=int), ("L0",))
        with pytest.raises(ValueError):
            evaluate_q_star(net, bad)


class TestDetectMultilayer:
    def test_theta_zero_matches_single_layer(self):
        rng = np.random.default_rng(10)
        layers = stacked_layers(rng, 7, 3)
        net = MultiNetwork(layers, coupling=0.0)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=10, rng_seed=42))
        mlp, _ = detect_multilayer(net, cfg)
        for x, lay in enumerate(layers):
            single = detect(lay, DetectorConfig(restarts=10, rng_seed=42))
            assert nmi(project(mlp, x), single.partition) == 1.0

    def test_huge_theta_merges_copies(self):
        rng = np.random.default_rng(11)
        layers = stacked_layers(rng, 6, 3)
        theta = 10.0 * max(lay.volume for lay in layers)
        net = MultiNetwork(layers, coupling=theta)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=5, rng_seed=1))
        mlp, _ = detect_multilayer(net, cfg)
        assert (diversification(mlp) == 1).all()

    def test_identical_layers_symmetric_projection(self):
        rng = np.random.default_rng(12)
        labels = [f"n{i}" for i in range(6)]
        base = random_layer(rng, 6, density=0.6, labels=labels)
        twin = build_layer(list(base.labeled_edges()), universe=labels)
        base.commodity, twin.commodity = "L0", "L1"
        net = MultiNetwork([base, twin], coupling=1.0)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=5, rng_seed=3))
        mlp, _ = detect_multilayer(net, cfg)
        assert np.array_equal(mlp.assignment[0], mlp.assignment[1])

    @settings(max_examples=8)
    @given(st.integers(0, 2**32 - 1))
    def test_bounded_by_exhaustive_max(self, seed):
        rng = np.random.default_rng(seed)
        layers = stacked_layers(rng, 3, 2, density=0.6)
        theta = float(rng.uniform(0, 1.5))
        net = MultiNetwork(layers, coupling=theta)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=10, rng_seed=42))
        mlp, q = detect_multilayer(net, cfg)
        best_q, _ = best_multilayer_exhaustive(net, theta)
        assert q <= best_q + 1e-9
        assert q == pytest.approx(evaluate_q_star(net, mlp), abs=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        layers = stacked_layers(rng, 8, 2)
        net = MultiNetwork(layers, coupling=0.7)
        cfg = MultilayerConfig(detector=DetectorConfig(restarts=4, rng_seed=77))
        a, qa = detect_multilayer(net, cfg)
        b, qb = detect_multilayer(net, cfg)
        assert np.array_equal(a.assignment, b.assignment)
        assert qa == qb

    def test_empty_network_error(self):
        empty = build_layer([], universe=["A", "B"])
        net = MultiNetwork([empty])
        with pytest.raises(UndefinedStatisticError):
            detect_multilayer(net, MultilayerConfig())

    def test_config_coupling_override(self):
        rng = np.random.default_rng(15)
        layers = stacked_layers(rng, 5, 2)
        net = MultiNetwork(layers, coupling=0.0)
        theta = 10.0 * max(lay.volume for lay in layers)
        cfg = MultilayerConfig(
            coupling=theta, detector=DetectorConfig(restarts=3, rng_seed=5)
        )
        mlp, _ = detect_multilayer(net, cfg)
        assert (diversification(mlp) == 1).all()


class TestProjection:
    def test_project_and_diversification(self):
        a = np.array([[0, 1, 2], [0, 1, 0]])
        mlp = MultilayerPartition(a, ("x", "y"))
        assert project(mlp, "x").assignment.tolist() == [0, 1, 2]
        assert project(mlp, 1).assignment.tolist() == [0, 1, 0]
        assert diversification(mlp).tolist() == [1, 1, 2]
        with pytest.raises(KeyError):
            project(mlp, "zzz")

    def test_same_everywhere_and_distinct_everywhere(self):
        same = MultilayerPartition(np.zeros((4, 3), dtype=int), tuple("abcd"))
        assert (diversification(same) == 1).all()
        distinct = MultilayerPartition(
            np.arange(12).reshape(4, 3), tuple("abcd")
        )
        assert (diversification(distinct) == 4).all()

    def test_histogram_sums_to_n(self):
        rng = np.random.default_rng(2)
        flat = rng.integers(0, 5, size=12)
        from tradenet.graph import Partition

        a = Partition.from_raw(flat).assignment.reshape(3, 4)
        mlp = MultilayerPartition(a, ("a", "b", "c"))
        div = diversification(mlp)
        assert np.bincount(div).sum() == 4
