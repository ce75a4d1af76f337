"""Summarise convergence CSVs as fitted slopes over the last three levels.

    python scripts/rate_table.py out/convergence_*.csv
"""
import csv
import sys
from collections import defaultdict

from vemcip.verification import fitted_rate


def load(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def main(paths):
    print(f"{'file':28s} {'family':6s} {'k':>2s} {'H1':>6s} {'L2':>6s} {'CIP':>6s}")
    for path in paths:
        groups = defaultdict(list)
        for row in load(path):
            if row["eH1"] != "nan":
                groups[row["family"], int(row["k"])].append(row)
        for (family, k), rows in sorted(groups.items()):
            rows = rows[-3:]
            h = [float(r["h"]) for r in rows]
            s = [fitted_rate(h, [float(r[key]) for r in rows]) for key in ("eH1", "eL2", "ecip")]
            name = path.rsplit("/", 1)[-1]
            print(f"{name:28s} {family:6s} {k:2d} {s[0]:6.2f} {s[1]:6.2f} {s[2]:6.2f}")


if __name__ == "__main__":
    main(sys.argv[1:])
