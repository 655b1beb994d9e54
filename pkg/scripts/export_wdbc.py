"""Write the WDBC table bundled with scikit-learn in UCI ``wdbc.data`` layout.

The scikit-learn copy carries the 569 rows and 30 features of the UCI file
but drops the patient ids, so ids here are the zero-padded row numbers.

    python scripts/export_wdbc.py data/wdbc.data
"""

from __future__ import annotations

import sys
from pathlib import Path


def main(out: str) -> None:
    from sklearn.datasets import load_breast_cancer

    features, target = load_breast_cancer(return_X_y=True)
    lines = []
    for i, (row, t) in enumerate(zip(features, target)):
        # sklearn: 0 = malignant, 1 = benign
        diagnosis = "M" if t == 0 else "B"
        values = ",".join(repr(float(v)) for v in row)
        lines.append(f"{i:06d},{diagnosis},{values}")
    Path(out).write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(lines)} rows)")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/wdbc.data")
