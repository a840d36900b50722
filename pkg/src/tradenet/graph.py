"""Data model for layered directed weighted networks.

A :class:`Layer` is the directed weighted graph of one commodity in one
year over a fixed node universe.  Several layers of the same year form a
:class:`MultiNetwork` in which each node is coupled to its own copies in
every other layer.  Community assignments are carried by
:class:`Partition` (one layer) and :class:`MultilayerPartition`
(node-layer pairs).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import EdgeDataError

EDGE_CSV_HEADER = ("year", "commodity", "src", "dst", "weight")


class Layer:
    """Immutable directed weighted graph with dense integer node ids.

    Adjacency is stored in both out- and in-neighbor views so that
    strength and degree lookups in either direction are O(deg).  Layers
    built from raw data never carry self-loops; coarse-grained layers
    produced by community detection may (intra-community weight becomes a
    self-loop).
    """

    __slots__ = (
        "commodity",
        "year",
        "labels",
        "index",
        "out_nbrs",
        "in_nbrs",
        "n_edges",
        "volume",
        "_s_out",
        "_s_in",
    )

    def __init__(self, labels, indexed_edges, commodity="", year=0):
        self.labels = tuple(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise EdgeDataError("duplicate node labels in universe")
        self.commodity = commodity
        self.year = int(year)
        n = len(self.labels)
        out_nbrs = [{} for _ in range(n)]
        in_nbrs = [{} for _ in range(n)]
        for i, j, w in indexed_edges:
            if not (0 <= i < n and 0 <= j < n):
                raise EdgeDataError(f"edge ({i},{j}) outside node range 0..{n - 1}")
            out_nbrs[i][j] = out_nbrs[i].get(j, 0.0) + float(w)
            in_nbrs[j][i] = in_nbrs[j].get(i, 0.0) + float(w)
        self.out_nbrs = out_nbrs
        self.in_nbrs = in_nbrs
        self.n_edges = sum(len(d) for d in out_nbrs)
        s_out = np.zeros(n)
        s_in = np.zeros(n)
        for i, nbrs in enumerate(out_nbrs):
            for j, w in nbrs.items():
                s_out[i] += w
                s_in[j] += w
        self._s_out = s_out
        self._s_in = s_in
        self.volume = float(s_out.sum())

    @property
    def n_nodes(self):
        return len(self.labels)

    @property
    def key(self):
        return (self.commodity, self.year)

    def weight(self, i, j):
        """Weight of the directed edge i -> j, 0.0 if absent."""
        return self.out_nbrs[i].get(j, 0.0)

    def edges(self):
        """Yield (src_index, dst_index, weight) sorted by (src, dst)."""
        for i, nbrs in enumerate(self.out_nbrs):
            for j in sorted(nbrs):
                yield i, j, nbrs[j]

    def labeled_edges(self):
        """Yield (src_label, dst_label, weight) sorted by index pair."""
        for i, j, w in self.edges():
            yield self.labels[i], self.labels[j], w

    def active_mask(self):
        """Boolean array marking nodes with at least one edge."""
        return (self._s_out > 0) | (self._s_in > 0)

    def __repr__(self):
        return (
            f"Layer({self.commodity!r}, {self.year}, n_nodes={self.n_nodes}, "
            f"n_edges={self.n_edges})"
        )


def build_layer(edges, universe=None, commodity="", year=0, strict=True,
                diagnostics=None):
    """Build a layer from (src_label, dst_label, weight) triples.

    Duplicate (src, dst) entries are summed.  The node universe is the
    sorted union of ``universe`` and every label seen on an accepted
    edge, so the index mapping is stable under edge reordering.

    Rows with a self-loop or a nonpositive/non-finite weight are
    rejected.  With ``strict`` (the default) the first bad row raises
    :class:`EdgeDataError`; otherwise bad rows are skipped and a message
    per row is appended to ``diagnostics`` when a list is supplied.
    """
    accepted = []
    labels_seen = set(universe) if universe is not None else set()
    for k, (src, dst, w) in enumerate(edges):
        problem = None
        w = float(w)
        if src == dst:
            problem = f"self-loop on {src!r}"
        elif not math.isfinite(w):
            problem = f"non-finite weight {w!r} on ({src!r}, {dst!r})"
        elif w <= 0:
            problem = f"nonpositive weight {w!r} on ({src!r}, {dst!r})"
        if problem is not None:
            if strict:
                raise EdgeDataError(f"row {k}: {problem}")
            if diagnostics is not None:
                diagnostics.append(f"row {k}: {problem}")
            continue
        labels_seen.add(src)
        labels_seen.add(dst)
        accepted.append((src, dst, w))
    labels = sorted(labels_seen)
    index = {lab: i for i, lab in enumerate(labels)}
    return Layer(
        labels,
        ((index[s], index[d], w) for s, d, w in accepted),
        commodity=commodity,
        year=year,
    )


def log_weights(layer):
    """Replace every weight with its natural log; topology unchanged.

    Requires strictly positive weights.  The result may carry weights
    <= 0 (inputs <= 1); downstream consumers must tolerate that.
    """
    edges = []
    for i, j, w in layer.edges():
        if w <= 0:
            raise EdgeDataError(f"cannot log nonpositive weight on ({i},{j})")
        edges.append((i, j, math.log(w)))
    return Layer(layer.labels, edges, commodity=layer.commodity, year=layer.year)


def strengths(layer):
    """Per-node (s_in, s_out) arrays; self-loops count toward both."""
    return layer._s_in.copy(), layer._s_out.copy()


def degrees(layer):
    """Per-node (k_in, k_out, k_bilateral) arrays.

    k_bilateral counts partners j != i with edges in both directions.
    """
    n = layer.n_nodes
    k_in = np.zeros(n, dtype=int)
    k_out = np.zeros(n, dtype=int)
    k_bi = np.zeros(n, dtype=int)
    for i in range(n):
        k_out[i] = len(layer.out_nbrs[i]) - (1 if i in layer.out_nbrs[i] else 0)
        k_in[i] = len(layer.in_nbrs[i]) - (1 if i in layer.in_nbrs[i] else 0)
        k_bi[i] = sum(1 for j in layer.out_nbrs[i] if j != i and j in layer.in_nbrs[i])
    return k_in, k_out, k_bi


@dataclass(frozen=True)
class Partition:
    """Non-overlapping community assignment with dense ids 0..K-1."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "assignment", a)
        if a.size and (a.min() < 0 or np.unique(a).size != a.max() + 1):
            raise ValueError("community ids must be dense 0..K-1")

    @classmethod
    def from_raw(cls, raw):
        """Relabel arbitrary ids densely, by order of first appearance."""
        raw = np.asarray(raw)
        seen = {}
        dense = np.empty(raw.size, dtype=int)
        for pos, c in enumerate(raw.tolist()):
            if c not in seen:
                seen[c] = len(seen)
            dense[pos] = seen[c]
        return cls(dense)

    @property
    def n_nodes(self):
        return self.assignment.size

    @property
    def n_communities(self):
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    def sizes(self):
        """Community sizes indexed by community id."""
        return np.bincount(self.assignment, minlength=self.n_communities)

    def restrict(self, nodes):
        """Partition over the given node subset, ids renumbered densely."""
        return Partition.from_raw(self.assignment[np.asarray(nodes, dtype=int)])

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.assignment, other.assignment)


@dataclass(frozen=True)
class MultiNetwork:
    """Stack of layers over one node universe, coupled node-to-self.

    ``coupling`` is the uniform weight of the undirected link joining a
    node to its own copy in every other layer.
    """

    layers: tuple
    coupling: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("MultiNetwork requires at least one layer")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")
        labels = self.layers[0].labels
        for lay in self.layers[1:]:
            if lay.labels != labels:
                raise ValueError("all layers must share one node universe")

    @property
    def n_nodes(self):
        return self.layers[0].n_nodes

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def labels(self):
        return self.layers[0].labels

    @property
    def layer_keys(self):
        return tuple(lay.commodity for lay in self.layers)


@dataclass(frozen=True)
class MultilayerPartition:
    """Community assignment of every (node, layer) pair, dense ids.

    ``assignment`` has shape (n_layers, n_nodes); row x is the slice of
    layer ``layer_keys[x]``.
    """

    assignment: np.ndarray
    layer_keys: tuple

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "layer_keys", tuple(self.layer_keys))
        if a.ndim != 2 or a.shape[0] != len(self.layer_keys):
            raise ValueError("assignment must be (n_layers, n_nodes)")
        flat = a.ravel()
        if flat.size and (flat.min() < 0 or np.unique(flat).size != flat.max() + 1):
            raise ValueError("community ids must be dense 0..K-1")

    @property
    def n_layers(self):
        return self.assignment.shape[0]

    @property
    def n_nodes(self):
        return self.assignment.shape[1]

    @property
    def n_communities(self):
        return int(self.assignment.max()) + 1 if self.assignment.size else 0


def read_edge_csv(path, strict=True, diagnostics=None):
    """Read edge rows from a `year,commodity,src,dst,weight` CSV.

    Returns a list of (year, commodity, src, dst, weight) tuples.  Bad
    rows raise :class:`EdgeDataError` when ``strict``, otherwise they are
    skipped with a line-numbered message appended to ``diagnostics``.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EDGE_CSV_HEADER:
            raise EdgeDataError(
                f"{path}: expected header {','.join(EDGE_CSV_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            try:
                year = int(row[0])
                commodity = row[1].strip()
                src = row[2].strip()
                dst = row[3].strip()
                weight = float(row[4])
            except (IndexError, ValueError) as exc:
                if strict:
                    raise EdgeDataError(f"{path}:{lineno}: malformed row: {exc}")
                if diagnostics is not None:
                    diagnostics.append(f"{path}:{lineno}: malformed row: {exc}")
                continue
            rows.append((year, commodity, src, dst, weight))
    return rows


def load_layers(path, years=None, commodities=None, strict=True,
                diagnostics=None):
    """Load layers from an edge CSV, keyed by (commodity, year).

    The node universe is the union of labels over the whole file (all
    years and commodities), so partitions of different layers are
    directly comparable.  ``years`` / ``commodities`` filter which layers
    are materialized without shrinking the universe.
    """
    rows = read_edge_csv(path, strict=strict, diagnostics=diagnostics)
    labels = set()
    for _, _, src, dst, _ in rows:
        labels.add(src)
        labels.add(dst)
    universe = sorted(labels)
    wanted_years = set(years) if years is not None else None
    wanted_comms = set(commodities) if commodities is not None else None
    grouped = {}
    for year, commodity, src, dst, weight in rows:
        if wanted_years is not None and year not in wanted_years:
            continue
        if wanted_comms is not None and commodity not in wanted_comms:
            continue
        grouped.setdefault((commodity, year), []).append((src, dst, weight))
    layers = {}
    for key in sorted(grouped, key=lambda k: (k[1], k[0])):
        commodity, year = key
        layers[key] = build_layer(
            grouped[key], universe=universe, commodity=commodity, year=year,
            strict=strict, diagnostics=diagnostics,
        )
    return layers


def write_edge_csv(path, layers):
    """Dump layers back to the edge CSV format (exact float round trip)."""
    items = sorted(layers.values(), key=lambda l: (l.year, l.commodity))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_CSV_HEADER)
        for layer in items:
            for src, dst, w in layer.labeled_edges():
                writer.writerow([layer.year, layer.commodity, src, dst, repr(w)])
