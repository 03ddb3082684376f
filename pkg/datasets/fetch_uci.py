#!/usr/bin/env python3
"""Normalize user-supplied UCI benchmark files into this repo's CSV format.

Two regression benchmarks cannot be redistributed inside the repository, so
provisioning them is a manual step:

  Boston housing   raw file `housing.data` (whitespace-separated, 506 rows,
                   13 features + MEDV target).  Historical sources:
                     http://lib.stat.cmu.edu/datasets/boston
                     https://archive.ics.uci.edu/ml/machine-learning-databases/housing/housing.data
  Wine quality     raw file `winequality-red.csv` (semicolon-separated with
  (red)            header, 1599 rows, 11 features + quality).  Source:
                     https://archive.ics.uci.edu/ml/machine-learning-databases/wine-quality/winequality-red.csv

Download one of those files yourself, then run e.g.:

  python3 datasets/fetch_uci.py boston --raw ~/Downloads/housing.data
  python3 datasets/fetch_uci.py wine   --raw ~/Downloads/winequality-red.csv

The script validates the raw file's structure (row/column counts, numeric
fields, value ranges of well-known columns) and writes the normalized
comma-delimited table next to this script (boston.csv / winequality_red.csv)
matching the checked-in *.schema.json descriptors.  Content hashes are not
pinned because this repository was built without network access to the
source files; structural validation below is the integrity check.
"""
from __future__ import annotations

import argparse
import os
import sys

BOSTON_COLUMNS = [
    "CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE",
    "DIS", "RAD", "TAX", "PTRATIO", "B", "LSTAT", "MEDV",
]
WINE_COLUMNS = [
    "fixed acidity", "volatile acidity", "citric acid", "residual sugar",
    "chlorides", "free sulfur dioxide", "total sulfur dioxide", "density",
    "pH", "sulphates", "alcohol", "quality",
]


def _fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)
    sys.exit(1)


def _parse_row(cells: list[str], lineno: int, expected: int) -> list[float]:
    if len(cells) != expected:
        _fail(f"row {lineno} has {len(cells)} fields, expected {expected}")
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        _fail(f"row {lineno}: {exc}")
    raise AssertionError  # unreachable


def _write_csv(path: str, header: list[str], rows: list[list[float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    print(f"wrote {path}: {len(rows)} rows, {len(header) - 1} features")


def normalize_boston(raw_path: str, out_dir: str) -> None:
    """housing.data: whitespace-separated, no header, 506 x 14."""
    with open(raw_path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    rows = [_parse_row(ln.split(), i, 14) for i, ln in enumerate(lines, 1)]
    if len(rows) != 506:
        _fail(f"expected 506 data rows, got {len(rows)}")
    medv = [r[13] for r in rows]
    chas = {r[3] for r in rows}
    if not (set(chas) <= {0.0, 1.0}):
        _fail(f"CHAS column should be binary 0/1, saw values {sorted(chas)[:5]}")
    if not (min(medv) >= 1.0 and max(medv) <= 60.0):
        _fail(f"MEDV range [{min(medv)}, {max(medv)}] outside the expected [1, 60]")
    _write_csv(os.path.join(out_dir, "boston.csv"), BOSTON_COLUMNS, rows)


def normalize_wine(raw_path: str, out_dir: str) -> None:
    """winequality-red.csv: semicolon-separated, quoted header, 1599 x 12."""
    with open(raw_path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    header = [c.strip().strip('"') for c in lines[0].split(";")]
    if header != WINE_COLUMNS:
        _fail(f"unexpected header {header}; expected {WINE_COLUMNS}")
    rows = [_parse_row(ln.split(";"), i, 12) for i, ln in enumerate(lines[1:], 2)]
    if len(rows) != 1599:
        _fail(f"expected 1599 data rows, got {len(rows)}")
    quality = [r[11] for r in rows]
    if not all(q == int(q) and 0 <= q <= 10 for q in quality):
        _fail("quality column should be integer scores in [0, 10]")
    out_header = [c.replace(" ", "_") for c in WINE_COLUMNS]
    _write_csv(os.path.join(out_dir, "winequality_red.csv"), out_header, rows)


def main() -> None:
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("dataset", choices=["boston", "wine"])
    parser.add_argument("--raw", required=True, help="path to the downloaded raw file")
    parser.add_argument(
        "--out-dir", default=os.path.dirname(os.path.abspath(__file__)),
        help="directory to write the normalized CSV into",
    )
    args = parser.parse_args()
    if not os.path.exists(args.raw):
        _fail(f"raw file not found: {args.raw}")
    if args.dataset == "boston":
        normalize_boston(args.raw, args.out_dir)
    else:
        normalize_wine(args.raw, args.out_dir)


if __name__ == "__main__":
    main()
