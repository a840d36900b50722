"""Partition similarity and community-size concentration."""

import math

import numpy as np


def confusion_matrix(pa, pb):
    """Counts f_ij of nodes in cluster i of ``pa`` and cluster j of ``pb``."""
    if pa.n_nodes != pb.n_nodes:
        raise ValueError("partitions must cover the same node universe")
    out = np.zeros((pa.n_communities, pb.n_communities), dtype=int)
    np.add.at(out, (pa.assignment, pb.assignment), 1)
    return out


def nmi(pa, pb):
    """Normalized mutual information via the confusion matrix.

    1 for identical partitions, 0 for independent ones.  Natural logs
    (the base cancels).  When both marginals are degenerate (single
    cluster each) the value is 1.0 if the partitions are equal and NaN
    otherwise.
    """
    f = confusion_matrix(pa, pb)
    total = f.sum()
    if total == 0:
        return math.nan
    # identical block structure short-circuits to exactly 1.0
    if f.shape[0] == f.shape[1] and (np.count_nonzero(f) == f.shape[0]):
        if ((f > 0).sum(axis=0) == 1).all() and ((f > 0).sum(axis=1) == 1).all():
            return 1.0
    row = f.sum(axis=1)
    col = f.sum(axis=0)
    # fsum is exactly rounded, so the value is independent of summation
    # order and nmi(a, b) == nmi(b, a) holds bit-for-bit
    denom = math.fsum(
        m * math.log(m / total)
        for marg in (row, col)
        for m in marg.tolist()
        if m > 0
    )
    if denom == 0.0:
        # both partitions are all-in-one; equal by construction
        return 1.0 if np.array_equal(pa.assignment, pb.assignment) else math.nan
    num = math.fsum(
        f[i, j] * math.log(f[i, j] * total / (row[i] * col[j]))
        for i in range(f.shape[0])
        for j in range(f.shape[1])
        if f[i, j] > 0
    )
    return -2.0 * num / denom


def herfindahl(partition, normalized=True):
    """Concentration of the community size distribution.

    H = sum of squared size shares; the normalized form rescales so an
    even split over K communities scores 0 (a single community scores 1).
    """
    sizes = partition.sizes()
    n = sizes.sum()
    if n == 0:
        raise ValueError("empty partition")
    shares = sizes / n
    h = float((shares**2).sum())
    if not normalized:
        return h
    k = sizes.size
    if k == 1:
        return 1.0
    return (h - 1.0 / k) / (1.0 - 1.0 / k)


def size_distribution(partition):
    """Community sizes in descending order (singletons included)."""
    return sorted(partition.sizes().tolist(), reverse=True)


def community_count(partition):
    return partition.n_communities


def align_partitions(pa, pb, active_a=None, active_b=None, inactive="drop"):
    """Prepare two partitions of one universe for comparison.

    With ``inactive="drop"`` (default) both are restricted to nodes
    active in both masks; with ``inactive="keep"`` they are compared over
    the full universe (inactive nodes stay as whatever the detector left
    them, normally singletons).
    """
    if inactive == "keep" or (active_a is None and active_b is None):
        return pa, pb
    if inactive != "drop":
        raise ValueError("inactive must be 'drop' or 'keep'")
    mask = np.ones(pa.n_nodes, dtype=bool)
    if active_a is not None:
        mask &= np.asarray(active_a, dtype=bool)
    if active_b is not None:
        mask &= np.asarray(active_b, dtype=bool)
    nodes = np.flatnonzero(mask)
    return pa.restrict(nodes), pb.restrict(nodes)


def nmi_matrix(partitions, active_masks=None, inactive="drop"):
    """Pairwise NMI over a keyed mapping of partitions.

    Returns (keys, matrix) with NaN where a pair is undefined (e.g. no
    commonly active nodes).
    """
    keys = sorted(partitions)
    k = len(keys)
    out = np.full((k, k), np.nan)
    for ai in range(k):
        out[ai, ai] = 1.0
        for bi in range(ai + 1, k):
            pa, pb = partitions[keys[ai]], partitions[keys[bi]]
            ma = active_masks.get(keys[ai]) if active_masks else None
            mb = active_masks.get(keys[bi]) if active_masks else None
            ra, rb = align_partitions(pa, pb, ma, mb, inactive=inactive)
            if ra.n_nodes == 0:
                continue
            out[ai, bi] = out[bi, ai] = nmi(ra, rb)
    return keys, out
