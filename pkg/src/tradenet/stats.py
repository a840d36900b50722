"""Per-layer network statistics and cross-layer weight correlations.

The suite covers binary and weighted connectivity, reciprocity,
centralization, assortativity, clustering, and log-weight moments, plus
the import/export intensity ratio.  Undefined values raise
:class:`UndefinedStatisticError`; :func:`layer_stats` converts them to
NaN sentinels so a full record can always be assembled.
"""

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import UndefinedStatisticError
from .graph import degrees, log_weights, strengths

STAT_COLUMNS = (
    "density",
    "bilateral_density",
    "weighted_asymmetry",
    "lcc_size",
    "centralization",
    "bin_assortativity",
    "wei_assortativity",
    "bin_clustering",
    "wei_clustering",
    "mean_log_weight",
    "std_log_weight",
)


@dataclass
class StatsRecord:
    density: float
    bilateral_density: float
    weighted_asymmetry: float
    lcc_size: int
    centralization: float
    bin_assortativity: float
    wei_assortativity: float
    bin_clustering: float
    wei_clustering: float
    mean_log_weight: float
    std_log_weight: float

    def as_tuple(self):
        return tuple(getattr(self, f.name) for f in fields(self))


def _effective_n(layer, n_nodes, active_only):
    if active_only:
        return int(layer.active_mask().sum())
    if n_nodes is not None:
        n_active = int(layer.active_mask().sum())
        if n_nodes < n_active:
            raise ValueError("n_nodes override smaller than active node count")
        return int(n_nodes)
    return layer.n_nodes


def density(layer, n_nodes=None, active_only=False):
    """Edge count over the N(N-1) possible directed edges."""
    n = _effective_n(layer, n_nodes, active_only)
    if n < 2:
        raise UndefinedStatisticError("density undefined for fewer than 2 nodes")
    return layer.n_edges / (n * (n - 1))


def bilateral_density(layer):
    """Share of edges whose reverse edge also exists; 0 with no edges."""
    if layer.n_edges == 0:
        return 0.0
    recip = sum(
        1
        for i, nbrs in enumerate(layer.out_nbrs)
        for j in nbrs
        if j != i and i in layer.out_nbrs[j]
    )
    return recip / layer.n_edges


def _asymmetry_sums(layer):
    # den = sum over unordered dyads of (x_ij^2 + x_ji^2); cross = sum of x_ij*x_ji
    den = 0.0
    cross = 0.0
    for i, nbrs in enumerate(layer.out_nbrs):
        for j, w in nbrs.items():
            if j == i:
                continue
            den += w * w
            if i < j:
                back = layer.out_nbrs[j].get(i)
                if back is not None:
                    cross += w * back
    return den, cross


def weighted_asymmetry(layer):
    """Normalized squared difference of reciprocal flows.

    sum_{i<j} (x_ij - x_ji)^2 / sum_{i<j} (x_ij^2 + x_ji^2), missing
    edges as 0; returns 0 for an empty layer.
    """
    den, cross = _asymmetry_sums(layer)
    if den == 0.0:
        return 0.0
    return (den - 2.0 * cross) / den


def weighted_reciprocity(layer):
    """Complement of :func:`weighted_asymmetry` from the same sums."""
    den, cross = _asymmetry_sums(layer)
    if den == 0.0:
        return 0.0
    return 2.0 * cross / den


def lcc_size(layer):
    """Node count of the largest weakly connected component (>= 1)."""
    n = layer.n_nodes
    if n == 0:
        raise UndefinedStatisticError("lcc undefined on an empty universe")
    seen = [False] * n
    best = 1
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        size = 1
        stack = [start]
        while stack:
            v = stack.pop()
            for nbr in layer.out_nbrs[v]:
                if not seen[nbr]:
                    seen[nbr] = True
                    size += 1
                    stack.append(nbr)
            for nbr in layer.in_nbrs[v]:
                if not seen[nbr]:
                    seen[nbr] = True
                    size += 1
                    stack.append(nbr)
        best = max(best, size)
    return best


def centralization(layer, n_nodes=None, active_only=False):
    """Freeman-style centralization on total degree.

    sum_i (k_max - k_i) / ((N-1)(2N-4)); the normalizer is the value
    attained by a directed in-out star.  Returns 0 when N < 3.
    """
    k_in, k_out, _ = degrees(layer)
    k_tot = k_in + k_out
    if active_only:
        k_tot = k_tot[k_tot > 0]
    n = _effective_n(layer, n_nodes, active_only)
    if n < 3:
        return 0.0
    k_max = int(k_tot.max()) if k_tot.size else 0
    total = float((k_max - k_tot).sum()) + k_max * (n - len(k_tot))
    return total / ((n - 1) * (2 * n - 4))


def _pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise UndefinedStatisticError("zero variance in correlation input")
    return float(xc @ yc) / math.sqrt(vx * vy)


def assortativity(layer, mode="binary"):
    """Correlation between average nearest-neighbor degree (or strength)
    and a node's own total degree (or strength).

    Nodes with zero total degree are excluded; fewer than 3 remaining
    nodes or zero variance raises :class:`UndefinedStatisticError`.
    """
    if mode == "binary":
        k_in, k_out, _ = degrees(layer)
        tot = (k_in + k_out).astype(float)
    elif mode == "weighted":
        s_in, s_out = strengths(layer)
        tot = s_in + s_out
    else:
        raise ValueError(f"unknown mode {mode!r}")
    nodes = [i for i in range(layer.n_nodes) if tot[i] > 0]
    if len(nodes) < 3:
        raise UndefinedStatisticError("assortativity needs at least 3 connected nodes")
    annd = []
    own = []
    for i in nodes:
        acc = 0.0
        if mode == "binary":
            for j in layer.out_nbrs[i]:
                if j != i:
                    acc += tot[j]
            for j in layer.in_nbrs[i]:
                if j != i:
                    acc += tot[j]
        else:
            for j, w in layer.out_nbrs[i].items():
                if j != i:
                    acc += w * tot[j]
            for j, w in layer.in_nbrs[i].items():
                if j != i:
                    acc += w * tot[j]
        annd.append(acc / tot[i])
        own.append(tot[i])
    return _pearson(own, annd)


def clustering(layer, mode="binary"):
    """Mean directed clustering coefficient over nodes where defined.

    C_i = [(M + M^T)^3]_ii / (2 [d_i (d_i - 1) - 2 k_bilateral_i]) with
    d_i the total degree; in weighted mode M holds cube roots of weights
    normalized by the layer maximum.  Nodes whose denominator vanishes
    are excluded; an edgeless layer raises
    :class:`UndefinedStatisticError`.
    """
    if layer.n_edges == 0:
        raise UndefinedStatisticError("clustering undefined on an edgeless layer")
    n = layer.n_nodes
    m = np.zeros((n, n))
    if mode == "binary":
        for i, j, _ in layer.edges():
            if i != j:
                m[i, j] = 1.0
    elif mode == "weighted":
        w_max = max(w for _, _, w in layer.edges())
        for i, j, w in layer.edges():
            if i != j:
                m[i, j] = (w / w_max) ** (1.0 / 3.0)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s = m + m.T
    diag = np.einsum("ij,jk,ki->i", s, s, s)
    k_in, k_out, k_bi = degrees(layer)
    d = k_in + k_out
    denom = 2.0 * (d * (d - 1) - 2 * k_bi)
    valid = denom > 0
    if not valid.any():
        raise UndefinedStatisticError("no node has a defined clustering coefficient")
    return float((diag[valid] / denom[valid]).mean())


def weight_moments(log_layer):
    """Population mean and std of the edge weights of a log layer."""
    ws = [w for _, _, w in log_layer.edges()]
    if not ws:
        raise UndefinedStatisticError("weight moments undefined without edges")
    arr = np.array(ws)
    return float(arr.mean()), float(arr.std())


def intensity_ratio(layer):
    """Mean import intensity (s_in/k_in) over mean export intensity."""
    s_in, s_out = strengths(layer)
    k_in, k_out, _ = degrees(layer)
    importers = k_in > 0
    exporters = k_out > 0
    if not importers.any() or not exporters.any():
        raise UndefinedStatisticError("intensity ratio undefined without flows")
    mean_in = float((s_in[importers] / k_in[importers]).mean())
    mean_out = float((s_out[exporters] / k_out[exporters]).mean())
    return mean_in / mean_out


def layer_weight_correlation(layers):
    """Pairwise Pearson correlation of weights over directed dyads.

    Intended for log layers.  Only dyads carrying an edge in both layers
    of a pair enter (absent edges are missing data, not zeros).  Entries
    without enough complete dyads, or with zero variance, are NaN.  The
    diagonal is exactly 1.
    """
    layers = list(layers)
    maps = []
    for lay in layers:
        maps.append({(i, j): w for i, j, w in lay.edges()})
    k = len(layers)
    out = np.full((k, k), np.nan)
    np.fill_diagonal(out, 1.0)
    for a in range(k):
        for b in range(a + 1, k):
            common = maps[a].keys() & maps[b].keys()
            if len(common) < 2:
                continue
            keys = sorted(common)
            xa = [maps[a][key] for key in keys]
            xb = [maps[b][key] for key in keys]
            try:
                r = _pearson(xa, xb)
            except UndefinedStatisticError:
                continue
            out[a, b] = out[b, a] = r
    return out


def layer_stats(layer, n_nodes=None, active_only=False):
    """Full :class:`StatsRecord`, NaN where a statistic is undefined."""

    def guarded(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UndefinedStatisticError:
            return math.nan

    if layer.n_edges > 0:
        mean_lw, std_lw = weight_moments(log_weights(layer))
    else:
        mean_lw, std_lw = math.nan, math.nan
    return StatsRecord(
        density=guarded(density, layer, n_nodes=n_nodes, active_only=active_only),
        bilateral_density=bilateral_density(layer),
        weighted_asymmetry=weighted_asymmetry(layer),
        lcc_size=lcc_size(layer),
        centralization=centralization(
            layer, n_nodes=n_nodes, active_only=active_only
        ),
        bin_assortativity=guarded(assortativity, layer, "binary"),
        wei_assortativity=guarded(assortativity, layer, "weighted"),
        bin_clustering=guarded(clustering, layer, "binary"),
        wei_clustering=guarded(clustering, layer, "weighted"),
        mean_log_weight=mean_lw,
        std_log_weight=std_lw,
    )
