#!/usr/bin/env python3
"""Export the breast-cancer diagnostic table bundled with scikit-learn.

Writes wdbc.csv: 569 rows, 30 numeric feature columns at full float
precision, and a final `diagnosis` column holding the original M/B tokens
(scikit-learn encodes malignant as class 0, benign as class 1).  The
companion wdbc.schema.json pins the token-to-index mapping {B: 0, M: 1} so
reported misclassification rates are stable regardless of token order.
"""
from __future__ import annotations

import argparse
import os

from sklearn.datasets import load_breast_cancer


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out-dir", default=os.path.dirname(os.path.abspath(__file__)),
        help="directory to write wdbc.csv into",
    )
    args = parser.parse_args()

    bunch = load_breast_cancer()
    features = bunch.data            # (569, 30)
    labels = bunch.target            # 0 = malignant, 1 = benign
    names = [str(n).replace(" ", "_") for n in bunch.feature_names]
    token = {0: "M", 1: "B"}

    path = os.path.join(args.out_dir, "wdbc.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names + ["diagnosis"]) + "\n")
        for row, lab in zip(features, labels):
            cells = [f"{v:.17g}" for v in row] + [token[int(lab)]]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {path}: {features.shape[0]} rows, "
          f"{features.shape[1]} features, 2 classes")


if __name__ == "__main__":
    main()
