"""Directed weighted modularity and its multilevel local-search maximizer.

Modularity of a partition is the intra-community weight share minus its
expectation under the strength-preserving directed null model,

    Q = (1/X) sum_ij (x_ij - gamma * s_out_i * s_in_j / X) delta(c_i, c_j)

with X the layer volume.  The maximizer runs seeded restarts of a
two-stage heuristic: repeated vertex-move sweeps followed by coarsening
(communities become super-nodes, intra weight becomes self-loops),
recursed until no merge improves Q, then multilevel refinement that
unrolls the coarsening levels from coarsest to finest re-running vertex
moves at each level.

The internal engine works on a generic factored objective so the
multilayer variant can reuse it: every node carries one or more
(slot, p_out, p_in) null factors and the null term inside a community is
the slot-wise product of the community's factor sums.  A plain layer uses
a single slot with p_out = gamma * s_out / X and p_in = s_in.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedStatisticError
from .graph import Layer, Partition, strengths


@dataclass
class DetectorConfig:
    resolution: float = 1.0
    restarts: int = 10
    max_iterations: int = 20
    max_levels: int = 20
    max_repetitions: int = 50
    min_gain: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("restarts", "max_iterations", "max_levels", "max_repetitions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.min_gain <= 0:
            raise ValueError("min_gain must be > 0")


@dataclass
class DetectionResult:
    partition: Partition
    modularity: float
    restarts_run: int
    best_restart: int
    restart_log: list = field(default_factory=list)


def evaluate_modularity(layer, partition, resolution=1.0):
    """Directed weighted modularity of a partition; O(E + K).

    Self-loops (present on coarse graphs) always count as intra-community
    weight, which makes the value invariant under coarsening.
    """
    if layer.volume <= 0:
        raise UndefinedStatisticError("modularity undefined on an empty layer")
    a = partition.assignment
    if a.size != layer.n_nodes:
        raise ValueError("partition does not cover the layer's nodes")
    x = layer.volume
    intra = 0.0
    for i, nbrs in enumerate(layer.out_nbrs):
        ci = a[i]
        for j, w in nbrs.items():
            if ci == a[j]:
                intra += w
    s_in, s_out = strengths(layer)
    k = partition.n_communities
    big_out = np.bincount(a, weights=s_out, minlength=k)
    big_in = np.bincount(a, weights=s_in, minlength=k)
    return (intra - resolution * float(big_out @ big_in) / x) / x


def local_move_gain(layer, partition, node, target_community, resolution=1.0):
    """Exact modularity change of moving one node to a target community.

    Equals evaluate_modularity(after) - evaluate_modularity(before) at
    the same resolution; the target must be an existing community id.
    """
    a = partition.assignment
    own = int(a[node])
    k = partition.n_communities
    if not 0 <= target_community < k:
        raise ValueError("target community does not exist")
    if target_community == own:
        return 0.0
    x = layer.volume
    if x <= 0:
        raise UndefinedStatisticError("modularity undefined on an empty layer")
    s_in, s_out = strengths(layer)
    big_out = np.bincount(a, weights=s_out, minlength=k)
    big_in = np.bincount(a, weights=s_in, minlength=k)
    w_own = 0.0
    w_tgt = 0.0
    for j, w in layer.out_nbrs[node].items():
        if j == node:
            continue
        if a[j] == own:
            w_own += w
        elif a[j] == target_community:
            w_tgt += w
    for j, w in layer.in_nbrs[node].items():
        if j == node:
            continue
        if a[j] == own:
            w_own += w
        elif a[j] == target_community:
            w_tgt += w
    res_in_own = big_in[own] - s_in[node]
    res_out_own = big_out[own] - s_out[node]
    null = (
        s_out[node] * (big_in[target_community] - res_in_own)
        + s_in[node] * (big_out[target_community] - res_out_own)
    )
    return (w_tgt - w_own) / x - resolution * null / (x * x)


def coarsen(layer, partition):
    """Collapse communities into super-nodes.

    Edge weights between member nodes are summed; intra-community weight
    becomes a self-loop, so modularity of the induced singleton partition
    on the coarse layer equals modularity of ``partition`` on ``layer``.
    """
    a = partition.assignment
    k = partition.n_communities
    acc = {}
    for i, nbrs in enumerate(layer.out_nbrs):
        ci = int(a[i])
        for j, w in nbrs.items():
            key = (ci, int(a[j]))
            acc[key] = acc.get(key, 0.0) + w
    labels = [f"c{c}" for c in range(k)]
    return Layer(
        labels,
        ((i, j, w) for (i, j), w in sorted(acc.items())),
        commodity=layer.commodity,
        year=layer.year,
    )


# ---------------------------------------------------------------------------
# Internal engine
# ---------------------------------------------------------------------------


class _Objective:
    """Coarsenable quality function over a directed weighted graph.

    value(P) = (intra_weight(P) - sum_c sum_f Pout(c,f) * Pin(c,f)) / norm

    where per-node null factors live in ``pnull[u]`` as (slot, p_out,
    p_in) triples and Pout/Pin are their per-community, per-slot sums.
    """

    __slots__ = ("n", "out_nbrs", "in_nbrs", "pnull", "norm", "n_slots")

    def __init__(self, n, out_nbrs, in_nbrs, pnull, norm, n_slots):
        self.n = n
        self.out_nbrs = out_nbrs
        self.in_nbrs = in_nbrs
        self.pnull = pnull
        self.norm = norm
        self.n_slots = n_slots


def _objective_from_layer(layer, resolution):
    x = layer.volume
    s_in, s_out = strengths(layer)
    pnull = [
        [(0, resolution * s_out[i] / x, float(s_in[i]))] for i in range(layer.n_nodes)
    ]
    out_nbrs = [dict(d) for d in layer.out_nbrs]
    in_nbrs = [dict(d) for d in layer.in_nbrs]
    return _Objective(layer.n_nodes, out_nbrs, in_nbrs, pnull, x, 1)


def _objective_value(obj, assign):
    intra = 0.0
    for u, nbrs in enumerate(obj.out_nbrs):
        cu = assign[u]
        for v, w in nbrs.items():
            if cu == assign[v]:
                intra += w
    k = max(assign) + 1 if obj.n else 0
    pout = [[0.0] * obj.n_slots for _ in range(k)]
    pin = [[0.0] * obj.n_slots for _ in range(k)]
    for u in range(obj.n):
        c = assign[u]
        for f, po, pi in obj.pnull[u]:
            pout[c][f] += po
            pin[c][f] += pi
    null = 0.0
    for c in range(k):
        row_o = pout[c]
        row_i = pin[c]
        for f in range(obj.n_slots):
            null += row_o[f] * row_i[f]
    return (intra - null) / obj.norm


def _dense(assign):
    seen = {}
    out = [0] * len(assign)
    for pos, c in enumerate(assign):
        if c not in seen:
            seen[c] = len(seen)
        out[pos] = seen[c]
    return out, len(seen)


def _local_moves(obj, assign, rng, min_gain, max_sweeps):
    """Vertex-move sweeps in seeded random order until no move gains.

    Accepts a move only when its gain exceeds ``min_gain``; among
    equal-score targets the lowest community id wins (candidates are
    visited in ascending id order).  A node may also detach into a fresh
    community when leaving its own is itself an improvement.
    """
    n = obj.n
    comm = list(assign)
    n_comm = max(comm) + 1 if n else 0
    pout = [[0.0] * obj.n_slots for _ in range(n_comm)]
    pin = [[0.0] * obj.n_slots for _ in range(n_comm)]
    size = [0] * n_comm
    for u in range(n):
        c = comm[u]
        size[c] += 1
        for f, po, pi in obj.pnull[u]:
            pout[c][f] += po
            pin[c][f] += pi
    moved_any = False
    scaled_gain = min_gain * obj.norm  # compare unnormalized scores
    for _ in range(max_sweeps):
        moved_in_sweep = False
        for u in rng.permutation(n).tolist():
            own = comm[u]
            wsum = {}
            for v, w in obj.out_nbrs[u].items():
                if v != u:
                    cv = comm[v]
                    wsum[cv] = wsum.get(cv, 0.0) + w
            for v, w in obj.in_nbrs[u].items():
                if v != u:
                    cv = comm[v]
                    wsum[cv] = wsum.get(cv, 0.0) + w
            pn = obj.pnull[u]
            # virtually remove u from its community
            row_o = pout[own]
            row_i = pin[own]
            for f, po, pi in pn:
                row_o[f] -= po
                row_i[f] -= pi
            size[own] -= 1

            def score(c):
                s = wsum.get(c, 0.0)
                ro = pout[c]
                ri = pin[c]
                for f, po, pi in pn:
                    s -= po * ri[f] + pi * ro[f]
                return s

            # candidates must beat staying by more than min_gain; among
            # admissible targets the highest score wins, exact ties going
            # to the lowest community id (ascending scan, strict >)
            best_c = own
            best_s = score(own) + scaled_gain
            for c in sorted(wsum):
                if c == own:
                    continue
                s = score(c)
                if s > best_s:
                    best_c = c
                    best_s = s
            # detaching into a fresh community scores exactly 0; the fresh
            # id is the highest so it loses exact ties
            if 0.0 > best_s and size[own] > 0:
                best_c = -1
            if best_c == own:
                row_o = pout[own]
                row_i = pin[own]
                for f, po, pi in pn:
                    row_o[f] += po
                    row_i[f] += pi
                size[own] += 1
                continue
            if best_c == -1:
                best_c = n_comm
                n_comm += 1
                pout.append([0.0] * obj.n_slots)
                pin.append([0.0] * obj.n_slots)
                size.append(0)
            comm[u] = best_c
            size[best_c] += 1
            row_o = pout[best_c]
            row_i = pin[best_c]
            for f, po, pi in pn:
                row_o[f] += po
                row_i[f] += pi
            moved_in_sweep = True
            moved_any = True
        if not moved_in_sweep:
            break
    return comm, moved_any


def _coarsen_objective(obj, assign, k):
    out_nbrs = [{} for _ in range(k)]
    in_nbrs = [{} for _ in range(k)]
    acc_null = [{} for _ in range(k)]
    for u in range(obj.n):
        cu = assign[u]
        row = out_nbrs[cu]
        for v, w in obj.out_nbrs[u].items():
            cv = assign[v]
            row[cv] = row.get(cv, 0.0) + w
        nacc = acc_null[cu]
        for f, po, pi in obj.pnull[u]:
            old = nacc.get(f)
            if old is None:
                nacc[f] = (po, pi)
            else:
                nacc[f] = (old[0] + po, old[1] + pi)
    for cu, row in enumerate(out_nbrs):
        for cv, w in row.items():
            in_nbrs[cv][cu] = w
    pnull = [
        [(f, po, pi) for f, (po, pi) in sorted(nacc.items())] for nacc in acc_null
    ]
    return _Objective(k, out_nbrs, in_nbrs, pnull, obj.norm, obj.n_slots)


def _multilevel_pass(obj0, assign0, rng, cfg):
    """One coarsening stage plus multilevel refinement; returns level-0 ids."""
    objs = [obj0]
    merges = []  # merges[l] maps nodes of objs[l] to nodes of objs[l+1]
    current = list(assign0)
    while True:
        moved_assign, _ = _local_moves(
            objs[-1], current, rng, cfg.min_gain, cfg.max_repetitions
        )
        dense, k = _dense(moved_assign)
        if k == objs[-1].n or len(objs) > cfg.max_levels:
            top = dense
            break
        merges.append(dense)
        objs.append(_coarsen_objective(objs[-1], dense, k))
        current = list(range(k))
    comm = top
    for level in range(len(merges) - 1, -1, -1):
        projected = [comm[c] for c in merges[level]]
        refined, _ = _local_moves(
            objs[level], projected, rng, cfg.min_gain, cfg.max_repetitions
        )
        comm, _ = _dense(refined)
    return _dense(comm)[0]


def _run_restart(obj, rng, cfg):
    assign = list(range(obj.n))
    q = _objective_value(obj, assign)
    trace = [q]
    for _ in range(cfg.max_iterations):
        candidate = _multilevel_pass(obj, assign, rng, cfg)
        q_new = _objective_value(obj, candidate)
        if q_new <= q + cfg.min_gain:
            if q_new > q:
                assign, q = candidate, q_new
                trace.append(q)
            break
        assign, q = candidate, q_new
        trace.append(q)
    return assign, q, trace


def _restart_rng(seed, restart):
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, restart])
    )


def detect(layer, config=None):
    """Maximize modularity over seeded restarts; deterministic per seed.

    Returns the best partition across restarts (ties to the earlier
    restart).  If the search ends below the all-in-one baseline the
    baseline partition is returned instead (``best_restart`` is -1), so
    the reported modularity is never negative at resolution 1.
    """
    cfg = config or DetectorConfig()
    if layer.volume <= 0:
        raise UndefinedStatisticError("detection requires a layer with volume > 0")
    obj = _objective_from_layer(layer, cfg.resolution)
    best_assign = None
    best_q = -np.inf
    best_restart = -1
    log = []
    for r in range(cfg.restarts):
        rng = _restart_rng(cfg.rng_seed, r)
        assign, q, trace = _run_restart(obj, rng, cfg)
        log.append({"restart": r, "q": q, "trajectory": trace})
        if q > best_q:
            best_assign, best_q, best_restart = assign, q, r
    all_in_one = [0] * layer.n_nodes
    if best_q < _objective_value(obj, all_in_one):
        best_assign = all_in_one
        best_restart = -1
    partition = Partition.from_raw(best_assign)
    return DetectionResult(
        partition=partition,
        modularity=evaluate_modularity(layer, partition, cfg.resolution),
        restarts_run=cfg.restarts,
        best_restart=best_restart,
        restart_log=log,
    )
