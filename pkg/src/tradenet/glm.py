"""Community co-membership indicators and probit/logit estimation.

The regression unit is the unordered country pair: the response is 1
when both countries sit in the same community of a layer.  Covariates
follow the usual gravity-style set (combined economic size and income in
logs, trade agreement and geography dummies, log distance, colonial and
language ties).  Fits maximize the binomial likelihood by Newton-Raphson
with step halving; standard errors come from the inverse observed
information, and marginal effects are averaged over observations with
delta-method standard errors.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr
from scipy.special import expit, log_expit, log_ndtr, ndtr

from .errors import (
    ConvergenceError,
    RankDeficiencyError,
    SeparationError,
    TradenetError,
)

COVARIATE_CSV_COLUMNS = (
    "year",
    "iso3_i",
    "iso3_j",
    "gdp_i",
    "gdp_j",
    "gdppc_i",
    "gdppc_j",
    "dist_km",
    "contiguity",
    "region",
    "fta",
    "nafta",
    "afta",
    "comesa",
    "efta",
    "eu",
    "mercosur",
    "col_rel",
    "com_col",
    "same_country",
    "com_lang",
    "com_ethno",
)

# Derived model columns; combined GDP measures and distance enter in logs.
DEFAULT_COVARIATES = (
    "log_gdp_product",
    "log_gdppc_product",
    "fta",
    "contiguity",
    "log_distance",
    "region",
    "col_rel",
    "com_col",
    "same_country",
    "com_lang",
    "com_ethno",
)

RTA_DUMMIES = ("nafta", "afta", "comesa", "efta", "eu", "mercosur")

# Alternative specification: the pooled FTA dummy replaced by the six
# specific regional agreement dummies.
RTA_COVARIATES = (
    "log_gdp_product",
    "log_gdppc_product",
    "nafta",
    "afta",
    "comesa",
    "efta",
    "eu",
    "mercosur",
    "contiguity",
    "log_distance",
    "region",
    "col_rel",
    "com_col",
    "same_country",
    "com_lang",
    "com_ethno",
)

_PASSTHROUGH = (
    "contiguity",
    "region",
    "fta",
    "nafta",
    "afta",
    "comesa",
    "efta",
    "eu",
    "mercosur",
    "col_rel",
    "com_col",
    "same_country",
    "com_lang",
    "com_ethno",
)


def load_covariates(path, diagnostics=None):
    """Read the pair-level covariate CSV into a (year, i, j) -> dict table.

    Pair keys are normalized to i < j by label.  Rows with nonpositive
    GDP or distance (whose logs are undefined) or unparsable numbers are
    skipped, with a message per row appended to ``diagnostics``.
    """
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(COVARIATE_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing covariate columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                year = int(row["year"])
                a, b = row["iso3_i"].strip(), row["iso3_j"].strip()
                gdp = float(row["gdp_i"]) * float(row["gdp_j"])
                gdppc = float(row["gdppc_i"]) * float(row["gdppc_j"])
                dist = float(row["dist_km"])
                if gdp <= 0 or gdppc <= 0 or dist <= 0:
                    raise ValueError("nonpositive GDP or distance")
                derived = {
                    "log_gdp_product": math.log(gdp),
                    "log_gdppc_product": math.log(gdppc),
                    "log_distance": math.log(dist),
                }
                for name in _PASSTHROUGH:
                    derived[name] = float(row[name])
            except (KeyError, ValueError) as exc:
                if diagnostics is not None:
                    diagnostics.append(f"{path}:{lineno}: skipped row: {exc}")
                continue
            if a > b:
                a, b = b, a
            table[(year, a, b)] = derived
    return table


@dataclass
class DyadFrame:
    """Design matrix over unordered country pairs.

    ``columns`` names the design columns (intercept first), of which
    ``covariates`` are the substantive ones reported with marginal
    effects and ``fixed_effects`` are year/country dummy blocks.
    """

    y: np.ndarray
    X: np.ndarray
    columns: list
    covariates: list
    fixed_effects: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    years: np.ndarray | None = None
    excluded: list = field(default_factory=list)

    @property
    def n_rows(self):
        return self.y.size


def _pair_rows(partition, layer, table, covariates, include_inactive):
    active = layer.active_mask()
    labels = layer.labels
    nodes = [
        i for i in range(layer.n_nodes) if include_inactive or active[i]
    ]
    assignment = partition.assignment
    rows = []
    excluded = []
    for ai in range(len(nodes)):
        i = nodes[ai]
        for bj in range(ai + 1, len(nodes)):
            j = nodes[bj]
            la, lb = labels[i], labels[j]
            if la > lb:
                la, lb = lb, la
            cov = table.get((layer.year, la, lb))
            if cov is None:
                excluded.append((layer.year, la, lb))
                continue
            y = 1.0 if assignment[i] == assignment[j] else 0.0
            rows.append((la, lb, layer.year, y, [cov[name] for name in covariates]))
    return rows, excluded


def build_dyads(partition, layer, table, covariates=None, include_inactive=False):
    """Cross-section dyad frame for one layer.

    Only countries active in the layer enter by default; pairs without a
    covariate row are excluded and reported in ``frame.excluded``.
    """
    covariates = list(covariates if covariates is not None else DEFAULT_COVARIATES)
    rows, excluded = _pair_rows(partition, layer, table, covariates, include_inactive)
    y = np.array([r[3] for r in rows])
    design = np.column_stack(
        [np.ones(len(rows))] + [np.array([r[4][k] for r in rows]) for k in range(len(covariates))]
    ) if rows else np.zeros((0, 1 + len(covariates)))
    return DyadFrame(
        y=y,
        X=design,
        columns=["intercept"] + covariates,
        covariates=covariates,
        pairs=[(r[0], r[1]) for r in rows],
        years=np.array([r[2] for r in rows]) if rows else None,
        excluded=excluded,
    )


def build_panel_dyads(by_year, table, covariates=None, include_inactive=False):
    """Pooled panel frame with year dummies and country presence dummies.

    ``by_year`` maps year -> (partition, layer) for one commodity.  A
    country dummy is 1 when the country is either member of the pair;
    the first year and the first country (sorted) are the dropped
    reference categories.
    """
    covariates = list(covariates if covariates is not None else DEFAULT_COVARIATES)
    all_rows = []
    excluded = []
    for year in sorted(by_year):
        partition, layer = by_year[year]
        rows, excl = _pair_rows(partition, layer, table, covariates, include_inactive)
        all_rows.extend(rows)
        excluded.extend(excl)
    if not all_rows:
        return DyadFrame(
            y=np.zeros(0),
            X=np.zeros((0, 1 + len(covariates))),
            columns=["intercept"] + covariates,
            covariates=covariates,
            excluded=excluded,
        )
    years = sorted({r[2] for r in all_rows})
    countries = sorted({lab for r in all_rows for lab in (r[0], r[1])})
    year_cols = [f"year_{y}" for y in years[1:]]
    cty_cols = [f"cty_{c}" for c in countries[1:]]
    n = len(all_rows)
    X = np.zeros((n, 1 + len(covariates) + len(year_cols) + len(cty_cols)))
    X[:, 0] = 1.0
    y = np.zeros(n)
    for r_i, (la, lb, yr, resp, vals) in enumerate(all_rows):
        y[r_i] = resp
        X[r_i, 1 : 1 + len(covariates)] = vals
        if yr != years[0]:
            X[r_i, 1 + len(covariates) + years[1:].index(yr)] = 1.0
        base = 1 + len(covariates) + len(year_cols)
        for lab in (la, lb):
            if lab != countries[0]:
                X[r_i, base + countries[1:].index(lab)] = 1.0
    return DyadFrame(
        y=y,
        X=X,
        columns=["intercept"] + covariates + year_cols + cty_cols,
        covariates=covariates,
        fixed_effects=year_cols + cty_cols,
        pairs=[(r[0], r[1]) for r in all_rows],
        years=np.array([r[2] for r in all_rows]),
        excluded=excluded,
    )


@dataclass
class GlmFit:
    link: str
    columns: list
    beta: np.ndarray
    cov: np.ndarray
    loglik: float
    n_obs: int
    n_iter: int
    converged: bool
    max_score: float
    dropped_columns: list = field(default_factory=list)
    ame: dict = field(default_factory=dict)  # name -> (effect, se)

    @property
    def se(self):
        return np.sqrt(np.diag(self.cov))

    @property
    def z(self):
        return self.beta / self.se

    @property
    def aic(self):
        return 2.0 * self.beta.size - 2.0 * self.loglik


def _probit_parts(eta, y):
    q = 2.0 * y - 1.0
    qe = q * eta
    ll = float(log_ndtr(qe).sum())
    # lam = q * phi(q eta) / Phi(q eta), computed in log space for stability
    lam = q * np.exp(-0.5 * qe * qe - 0.5 * math.log(2.0 * math.pi) - log_ndtr(qe))
    w = lam * (lam + eta)
    return ll, lam, w


def _logit_parts(eta, y):
    q = 2.0 * y - 1.0
    ll = float(log_expit(q * eta).sum())
    p = expit(eta)
    return ll, y - p, p * (1.0 - p)


def _loglik_only(link, eta, y):
    q = 2.0 * y - 1.0
    if link == "probit":
        return float(log_ndtr(q * eta).sum())
    return float(log_expit(q * eta).sum())


def _dependent_columns(X):
    """Indices of columns linearly dependent on earlier ones.

    Unpivoted QR: a negligible R diagonal at position k means column k
    lies in the span of columns 0..k-1, so column order doubles as a
    protection order (intercept and continuous covariates first).
    """
    if X.shape[0] < X.shape[1]:
        return list(range(X.shape[0], X.shape[1]))
    r = qr(X, mode="economic")[1]
    diag = np.abs(np.diag(r))
    norms = np.sqrt((X**2).sum(axis=0))
    tol = max(X.shape) * np.finfo(float).eps * np.maximum(norms, 1.0)
    return [k for k in range(X.shape[1]) if diag[k] <= tol[k]]


def _drop_collinear(X, columns):
    """Drop dependent dummy columns; error if others are dependent.

    Returns (X_kept, kept_names, dropped_names).  A column is droppable
    when it is 0/1-valued and not the intercept; dependence involving
    the intercept or a continuous covariate raises
    :class:`RankDeficiencyError` naming the columns.
    """
    dependent = _dependent_columns(X)
    if not dependent:
        return X, list(columns), []
    blockers = [
        columns[k]
        for k in dependent
        if columns[k] == "intercept"
        or not np.all((X[:, k] == 0.0) | (X[:, k] == 1.0))
    ]
    if blockers:
        raise RankDeficiencyError(blockers)
    keep = [k for k in range(X.shape[1]) if k not in set(dependent)]
    dropped = [columns[k] for k in dependent]
    X_kept = X[:, keep]
    if _dependent_columns(X_kept):
        raise RankDeficiencyError(dropped + ["<residual rank deficiency>"])
    return X_kept, [columns[k] for k in keep], dropped


def fit(frame, link="probit", max_iter=100, grad_tol=1e-8, loglik_tol=1e-10):
    """Maximum-likelihood probit or logit fit of a dyad frame.

    Newton-Raphson with step halving; converged when the largest score
    component falls below ``grad_tol`` and the log-likelihood change
    below ``loglik_tol``.  Raises :class:`SeparationError` when a
    standardized coefficient diverges while the likelihood still
    improves (perfect separation) or the response has a single class,
    and :class:`RankDeficiencyError` for collinear designs.
    """
    if link not in ("probit", "logit"):
        raise ValueError(f"unknown link {link!r}")
    X = np.asarray(frame.X, dtype=float)
    y = np.asarray(frame.y, dtype=float)
    if y.size == 0:
        raise ValueError("empty frame")
    if y.min() == y.max():
        raise SeparationError("response has a single class")
    X, columns, dropped = _drop_collinear(X, list(frame.columns))
    scales = X.std(axis=0)
    parts = _probit_parts if link == "probit" else _logit_parts
    beta = np.zeros(X.shape[1])
    ll, resid, w = parts(X @ beta, y)
    for it in range(1, max_iter + 1):
        score = X.T @ resid
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix is singular") from None
        scale = 1.0
        cand = ll_new = None
        for _ in range(40):
            trial = beta + scale * step
            ll_trial = _loglik_only(link, X @ trial, y)
            if ll_trial > ll:
                cand, ll_new = trial, ll_trial
                break
            scale *= 0.5
        if cand is None:
            # no strict improvement at any scale: accept the full step at
            # the fp noise floor so the score can keep shrinking
            trial = beta + step
            ll_trial = _loglik_only(link, X @ trial, y)
            if ll_trial >= ll - 1e-12 * (1.0 + abs(ll)):
                cand, ll_new = trial, ll_trial
            else:
                cand, ll_new = beta, ll
        improved = ll_new > ll
        delta = ll_new - ll
        beta, ll = cand, ll_new
        _, resid, w = parts(X @ beta, y)
        score_now = X.T @ resid
        max_score = float(np.abs(score_now).max())
        if improved and float(np.max(np.abs(beta) * scales)) > 50.0:
            raise SeparationError(
                "coefficient diverging with improving likelihood "
                "(perfect separation suspected)"
            )
        if max_score < grad_tol and abs(delta) < loglik_tol:
            cov = np.linalg.inv((X * w[:, None]).T @ X)
            result = GlmFit(
                link=link,
                columns=columns,
                beta=beta,
                cov=cov,
                loglik=ll,
                n_obs=int(y.size),
                n_iter=it,
                converged=True,
                max_score=max_score,
                dropped_columns=dropped,
            )
            result.ame = marginal_effects(result, frame)
            return result
    raise ConvergenceError(
        f"{link} fit did not converge within {max_iter} iterations"
    )


def _density_funcs(link):
    if link == "probit":
        def f(eta):
            return np.exp(-0.5 * eta * eta) / math.sqrt(2.0 * math.pi)

        def fprime(eta):
            return -eta * f(eta)

        return ndtr, f, fprime

    def f(eta):
        p = expit(eta)
        return p * (1.0 - p)

    def fprime(eta):
        p = expit(eta)
        return p * (1.0 - p) * (1.0 - 2.0 * p)

    return expit, f, fprime


def marginal_effects(glm_fit, frame):
    """Average marginal effects of the substantive covariates.

    Continuous covariates use the mean of density(x beta) * beta_k;
    binary ones use the mean discrete difference F(x | d=1) - F(x | d=0).
    Standard errors are delta-method from the fit covariance.  Fixed
    effect dummies and the intercept are not reported.
    """
    cdf, pdf, pdf_prime = _density_funcs(glm_fit.link)
    # restrict to the columns actually fitted (collinear dummies dropped)
    col_idx = [frame.columns.index(name) for name in glm_fit.columns]
    X = np.asarray(frame.X, dtype=float)[:, col_idx]
    beta = glm_fit.beta
    eta = X @ beta
    out = {}
    for name in frame.covariates:
        if name not in glm_fit.columns:
            continue
        k = glm_fit.columns.index(name)
        col = X[:, k]
        if np.all((col == 0.0) | (col == 1.0)):
            x1 = X.copy()
            x0 = X.copy()
            x1[:, k] = 1.0
            x0[:, k] = 0.0
            eta1 = x1 @ beta
            eta0 = x0 @ beta
            effect = float((cdf(eta1) - cdf(eta0)).mean())
            grad = (pdf(eta1)[:, None] * x1 - pdf(eta0)[:, None] * x0).mean(axis=0)
        else:
            dens = pdf(eta)
            effect = float(dens.mean() * beta[k])
            grad = (pdf_prime(eta)[:, None] * X).mean(axis=0) * beta[k]
            grad[k] += dens.mean()
        var = float(grad @ glm_fit.cov @ grad)
        out[name] = (effect, math.sqrt(max(var, 0.0)))
    return out


@dataclass
class LayerFitResult:
    commodity: str
    year: int | None  # None for pooled panel fits
    fit: GlmFit | None
    frame: DyadFrame | None
    error: str | None = None


def fit_all_layers(layer_partitions, table, link="probit", mode="cross_section",
                   covariates=None, include_inactive=False,
                   panel_commodities=None):
    """Fit every layer (cross-section) or every commodity pool (panel).

    ``layer_partitions`` maps (commodity, year) -> (Partition, Layer).
    Degenerate layers (single response class, separation, rank problems)
    are recorded with their error message and the run continues.
    """
    results = []
    if mode == "cross_section":
        for key in sorted(layer_partitions, key=lambda k: (k[1], k[0])):
            commodity, year = key
            partition, layer = layer_partitions[key]
            try:
                frame = build_dyads(
                    partition, layer, table,
                    covariates=covariates, include_inactive=include_inactive,
                )
                if frame.n_rows == 0:
                    raise ValueError("no pairs with covariate coverage")
                glm_fit = fit(frame, link=link)
            except (TradenetError, ValueError) as exc:
                results.append(LayerFitResult(commodity, year, None, None, str(exc)))
                continue
            results.append(LayerFitResult(commodity, year, glm_fit, frame))
    elif mode == "panel":
        commodities = sorted({key[0] for key in layer_partitions})
        if panel_commodities is not None:
            commodities = [c for c in commodities if c in set(panel_commodities)]
        for commodity in commodities:
            by_year = {
                year: layer_partitions[(c, year)]
                for c, year in layer_partitions
                if c == commodity
            }
            try:
                frame = build_panel_dyads(
                    by_year, table,
                    covariates=covariates, include_inactive=include_inactive,
                )
                if frame.n_rows == 0:
                    raise ValueError("no pairs with covariate coverage")
                glm_fit = fit(frame, link=link)
            except (TradenetError, ValueError) as exc:
                results.append(LayerFitResult(commodity, None, None, None, str(exc)))
                continue
            results.append(LayerFitResult(commodity, None, glm_fit, frame))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return results
