"""Correlation-based variable pruning and principal component analysis.

Variables are standardized to unit variance before the decomposition
(inverse-variance weighting), i.e. this is PCA of the correlation
matrix, invariant to any per-variable affine rescaling of the inputs.
The eigendecomposition is a self-contained cyclic Jacobi sweep, which is
deterministic and exact enough for the small matrices involved (at most
a few dozen statistics).
"""

from dataclasses import dataclass

import numpy as np

# Keep-first ordering used to decide which member of a highly correlated
# pair is dropped; redundant weighted variants come last.
DEFAULT_PRIORITY = (
    "density",
    "bilateral_density",
    "lcc_size",
    "centralization",
    "bin_assortativity",
    "mean_log_weight",
    "std_log_weight",
    "intensity_ratio",
    "wei_assortativity",
    "weighted_asymmetry",
    "bin_clustering",
    "wei_clustering",
)


@dataclass
class PcaResult:
    loadings: np.ndarray  # variables x components
    scores: np.ndarray  # observations x components
    explained_variance_ratio: np.ndarray
    kept_variables: list
    dropped_variables: list  # (name, partner, abs_correlation)


def _column_order(names, priority):
    ranked = {name: pos for pos, name in enumerate(priority)}
    fallback = len(ranked)
    return sorted(
        range(len(names)), key=lambda c: (ranked.get(names[c], fallback), c)
    )


def prune(matrix, names, threshold=0.9, priority=None):
    """Drop the lower-priority variable of each |r| > threshold pair.

    Pairs are scanned greedily in priority order (already dropped
    variables are skipped).  Returns (kept_names, dropped) where dropped
    lists (name, partner_kept, |r|).  Constant columns never trigger a
    drop here; PCA rejects them later by name.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[1] != len(names):
        raise ValueError("one name per column required")
    order = _column_order(names, priority if priority is not None else DEFAULT_PRIORITY)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(matrix, rowvar=False)
    dropped_idx = set()
    dropped = []
    for pos_a, a in enumerate(order):
        if a in dropped_idx:
            continue
        for b in order[pos_a + 1 :]:
            if b in dropped_idx:
                continue
            r = abs(corr[a, b])
            if np.isfinite(r) and r > threshold:
                dropped_idx.add(b)
                dropped.append((names[b], names[a], float(r)))
    kept = [name for c, name in enumerate(names) if c not in dropped_idx]
    return kept, dropped


def _jacobi_eigh(a, tol=1e-13, max_sweeps=64):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (values, vectors) with vectors in columns, unsorted.
    """
    a = np.array(a, dtype=float)
    p = a.shape[0]
    v = np.eye(p)
    for _ in range(max_sweeps):
        sq = a**2
        off = np.sqrt(max(float(sq.sum() - np.diag(sq).sum()), 0.0))
        if off <= tol * max(1.0, np.abs(np.diag(a)).max()):
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                if abs(a[i, j]) <= 1e-300 or abs(a[i, j]) <= 1e-20 * max(
                    abs(a[i, i]), abs(a[j, j]), 1.0
                ):
                    continue
                diff = a[j, j] - a[i, i]
                if diff == 0.0:
                    t = 1.0
                else:
                    phi = diff / (2.0 * a[i, j])
                    if abs(phi) > 1e150:  # phi**2 would overflow
                        t = 1.0 / (2.0 * phi)
                    else:
                        t = 1.0 / (abs(phi) + np.sqrt(phi * phi + 1.0))
                        if phi < 0.0:
                            t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_i = c * a[:, i] - s * a[:, j]
                rot_j = s * a[:, i] + c * a[:, j]
                a[:, i], a[:, j] = rot_i, rot_j
                rot_i = c * a[i, :] - s * a[j, :]
                rot_j = s * a[i, :] + c * a[j, :]
                a[i, :], a[j, :] = rot_i, rot_j
                rot_i = c * v[:, i] - s * v[:, j]
                rot_j = s * v[:, i] + c * v[:, j]
                v[:, i], v[:, j] = rot_i, rot_j
    return np.diag(a).copy(), v


def _fix_signs(vectors):
    out = vectors.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            out[:, c] = -col
    return out


def pca(matrix, names):
    """Correlation PCA of an observations x variables matrix.

    Components are ordered by decreasing eigenvalue; each loading vector
    is signed so its largest-magnitude entry is positive.  Scores are the
    standardized data projected on the loadings, so
    ``scores @ loadings.T`` reproduces the standardized matrix.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2 or matrix.shape[1] < 2:
        raise ValueError("PCA needs at least 2 rows and 2 columns")
    if len(names) != matrix.shape[1]:
        raise ValueError("one name per column required")
    if not np.isfinite(matrix).all():
        raise ValueError("PCA input must not contain undefined entries")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0, ddof=1)
    for c, s in enumerate(std):
        if s == 0.0:
            raise ValueError(f"constant column {names[c]!r} cannot be standardized")
    z = (matrix - mean) / std
    corr = (z.T @ z) / (matrix.shape[0] - 1)
    corr = (corr + corr.T) / 2.0
    values, vectors = _jacobi_eigh(corr)
    order = np.argsort(-values, kind="stable")
    values = np.clip(values[order], 0.0, None)
    loadings = _fix_signs(vectors[:, order])
    p = matrix.shape[1]
    return PcaResult(
        loadings=loadings,
        scores=z @ loadings,
        explained_variance_ratio=values / p,
        kept_variables=list(names),
        dropped_variables=[],
    )


def prune_and_pca(matrix, names, threshold=0.9, priority=None):
    """Prune highly correlated variables, then run PCA on the rest."""
    kept, dropped = prune(matrix, names, threshold=threshold, priority=priority)
    cols = [list(names).index(name) for name in kept]
    result = pca(np.asarray(matrix, dtype=float)[:, cols], kept)
    result.dropped_variables = dropped
    return result
