#!/usr/bin/env python3
"""Regenerate the two checked-in synthetic regression tables.

Both tables are smooth low-dimensional functions of a handful of latent
directions plus noise, written at full float precision with fixed seeds so
regeneration is bit-identical.  They stand in for regression benchmarks of
the same shape when the real files are not present:

  synthetic_boston.csv   506 rows x 13 features  (house-price-table shape)
  synthetic_concrete.csv 1030 rows x 8 features  (concrete-strength shape)

Each row's target mixes a sinusoid, a saturating ramp, and an interaction
term of standardized latent projections, so a trigonometric feature model
has real signal to find, while column means/scales are deliberately
heterogeneous so standardization matters.
"""
from __future__ import annotations

import argparse
import os

import numpy as np


def _make_table(seed: int, n_rows: int, n_cols: int, base: float, swing: float,
                noise: float) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    col_mean = rng.uniform(-5.0, 50.0, size=n_cols)
    col_scale = rng.uniform(0.5, 20.0, size=n_cols)
    z = rng.standard_normal((n_rows, n_cols))
    x = col_mean + col_scale * z

    u1 = rng.standard_normal(n_cols)
    u1 /= np.linalg.norm(u1)
    u2 = rng.standard_normal(n_cols)
    u2 -= u1 * (u1 @ u2)
    u2 /= np.linalg.norm(u2)
    p1 = z @ u1
    p2 = z @ u2

    signal = np.sin(1.5 * p1) + np.tanh(p2) + 0.25 * p1 * p2
    y = base + swing * signal + noise * rng.standard_normal(n_rows)
    return x, y


def _write_csv(path: str, x: np.ndarray, y: np.ndarray) -> None:
    n_cols = x.shape[1]
    header = ",".join([f"x{j}" for j in range(n_cols)] + ["target"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row, target in zip(x, y):
            cells = [f"{v:.17g}" for v in row] + [f"{target:.17g}"]
            fh.write(",".join(cells) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir", default=os.path.dirname(os.path.abspath(__file__)),
        help="directory to write the CSV files into",
    )
    args = parser.parse_args()

    x, y = _make_table(seed=20260816, n_rows=506, n_cols=13,
                       base=22.0, swing=9.0, noise=1.5)
    _write_csv(os.path.join(args.out_dir, "synthetic_boston.csv"), x, y)

    x, y = _make_table(seed=8161030, n_rows=1030, n_cols=8,
                       base=35.0, swing=14.0, noise=2.5)
    _write_csv(os.path.join(args.out_dir, "synthetic_concrete.csv"), x, y)

    print("wrote synthetic_boston.csv (506x13+target) and "
          "synthetic_concrete.csv (1030x8+target)")


if __name__ == "__main__":
    main()
