"""Writer for the match CSV that external matchers hand to the engine."""

import csv
from pathlib import Path

HEADER = ("x1", "y1", "x2", "y2", "score")


def write_match_csv(path, rows):
    """Write (x1, y1, x2, y2[, score]) rows as 0-based pixel coordinates.

    The score column is written only when every row carries one.
    """
    rows = [tuple(r) for r in rows]
    with_score = bool(rows) and all(len(r) == 5 and r[4] is not None for r in rows)
    header = HEADER if with_score else HEADER[:4]
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r[: len(header)]])
