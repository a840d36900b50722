"""Raw flow ingestion: physical quantities to kcal edge lists.

Raw rows carry an item code and a physical quantity; a factor table maps
each item code to its primary commodity group and a kcal-per-unit
factor.  Flows convert as quantity * factor and sum into the primary
group per directed country pair and year.  Rows without a factor, with
zero quantity, or malformed are skipped and counted, never fatal.

Without a factor table the raw file must already be in the edge-list
format; rows are then aggregated (duplicates summed) unchanged.
"""

import csv
from dataclasses import dataclass, field

from .graph import EDGE_CSV_HEADER

FACTOR_CSV_HEADER = ("item_code", "group", "kcal_per_unit")
RAW_CSV_HEADER = ("year", "src", "dst", "item_code", "quantity")


@dataclass
class IngestReport:
    rows_read: int = 0
    edges_written: int = 0
    skipped_no_factor: int = 0
    skipped_zero: int = 0
    skipped_malformed: int = 0
    skipped_self_loop: int = 0
    diagnostics: list = field(default_factory=list)


def load_factors(path):
    """Read the item_code -> (group, kcal_per_unit) table."""
    factors = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FACTOR_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(FACTOR_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            try:
                code = row[0].strip()
                group = row[1].strip()
                kcal = float(row[2])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed factor row: {exc}")
            factors[code] = (group, kcal)
    return factors


def ingest(raw_path, out_path, factors_path=None):
    """Convert a raw flow CSV into the canonical edge-list CSV.

    Returns an :class:`IngestReport`; per-row problems are recorded with
    line numbers and never abort the run.
    """
    factors = load_factors(factors_path) if factors_path else None
    report = IngestReport()
    acc = {}

    def add(year, commodity, src, dst, kcal, lineno):
        if src == dst:
            report.skipped_self_loop += 1
            report.diagnostics.append(f"{raw_path}:{lineno}: self-loop on {src!r}")
            return
        if kcal <= 0:
            report.skipped_zero += 1
            return
        key = (year, commodity, src, dst)
        acc[key] = acc.get(key, 0.0) + kcal

    with open(raw_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        header = tuple(h.strip() for h in header) if header else ()
        if factors is not None and header != RAW_CSV_HEADER:
            raise ValueError(f"{raw_path}: expected header {','.join(RAW_CSV_HEADER)}")
        if factors is None and header != EDGE_CSV_HEADER:
            raise ValueError(f"{raw_path}: expected header {','.join(EDGE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            report.rows_read += 1
            try:
                if factors is not None:
                    year = int(row[0])
                    src, dst = row[1].strip(), row[2].strip()
                    code = row[3].strip()
                    quantity = float(row[4])
                    hit = factors.get(code)
                    if hit is None:
                        report.skipped_no_factor += 1
                        report.diagnostics.append(
                            f"{raw_path}:{lineno}: no factor for item code {code!r}"
                        )
                        continue
                    group, kcal_per_unit = hit
                    add(year, group, src, dst, quantity * kcal_per_unit, lineno)
                else:
                    year = int(row[0])
                    commodity = row[1].strip()
                    src, dst = row[2].strip(), row[3].strip()
                    weight = float(row[4])
                    add(year, commodity, src, dst, weight, lineno)
            except (IndexError, ValueError) as exc:
                report.skipped_malformed += 1
                report.diagnostics.append(f"{raw_path}:{lineno}: malformed row: {exc}")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_CSV_HEADER)
        for (year, commodity, src, dst) in sorted(acc):
            writer.writerow(
                [year, commodity, src, dst, repr(acc[(year, commodity, src, dst)])]
            )
            report.edges_written += 1
    return report
