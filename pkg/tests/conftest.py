import csv
import itertools

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "suite", deadline=None, max_examples=60, derandomize=True
)
hypothesis.settings.load_profile("suite")


COUNTRIES = [f"C{i:02d}" for i in range(12)]


def _write_edges(path, rng):
    rows = []
    for year in (2001, 2011):
        for com in ("maize", "rice", "wheat"):
            half = len(COUNTRIES) // 2
            for i, a in enumerate(COUNTRIES):
                for j, b in enumerate(COUNTRIES):
                    if i == j:
                        continue
                    same = (i < half) == (j < half)
                    p = 0.5 if same else 0.08
                    if com == "rice":
                        p *= 0.8
                    if rng.random() < p:
                        rows.append(
                            [year, com, a, b, float(rng.uniform(1e6, 5e8))]
                        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "commodity", "src", "dst", "weight"])
        writer.writerows(rows)


def _write_covars(path, rng):
    header = [
        "year", "iso3_i", "iso3_j", "gdp_i", "gdp_j", "gdppc_i", "gdppc_j",
        "dist_km", "contiguity", "region", "fta", "nafta", "afta", "comesa",
        "efta", "eu", "mercosur", "col_rel", "com_col", "same_country",
        "com_lang", "com_ethno",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for year in (2001, 2011):
            for a, b in itertools.combinations(COUNTRIES, 2):
                writer.writerow(
                    [
                        year, a, b,
                        rng.uniform(1e9, 1e12), rng.uniform(1e9, 1e12),
                        rng.uniform(500, 80000), rng.uniform(500, 80000),
                        rng.uniform(100, 15000),
                        int(rng.random() < 0.15), int(rng.random() < 0.3),
                        int(rng.random() < 0.25), 0, 0, 0, 0,
                        int(rng.random() < 0.2), 0,
                        int(rng.random() < 0.05), int(rng.random() < 0.1), 0,
                        int(rng.random() < 0.2), int(rng.random() < 0.1),
                    ]
                )


@pytest.fixture(scope="session")
def demo_dataset(tmp_path_factory):
    """Synthetic edges + covariates CSVs shared across CLI tests."""
    root = tmp_path_factory.mktemp("demo")
    rng = np.random.default_rng(7)
    edges = root / "edges.csv"
    covars = root / "covars.csv"
    _write_edges(edges, rng)
    _write_covars(covars, rng)
    return {"root": root, "edges": str(edges), "covars": str(covars)}
