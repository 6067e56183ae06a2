"""Regenerates src/studentized_range_table.inc (upper quantiles of the studentized range)."""
import math
import sys

from scipy.stats import studentized_range

ALPHAS = (0.05, 0.01)
KS = range(2, 16)
DFS = list(range(1, 21)) + [24, 30, 40, 60, 120]


def main(out):
    with open(out, "w") as f:
        f.write("// Generated by tools/gen_qtable.py. Do not edit.\n")
        f.write("// Rows: df ladder (last row is df = infinity); columns: k = 2..15.\n")
        f.write("inline constexpr int kLadderDf[] = {%s};\n" % ", ".join(map(str, DFS)))
        for alpha in ALPHAS:
            name = "kQ%02d" % round(alpha * 100)
            f.write("inline constexpr double %s[][%d] = {\n" % (name, len(KS)))
            for df in DFS + [math.inf]:
                row = [studentized_range.ppf(1 - alpha, k, df if df != math.inf else 1e7) for k in KS]
                f.write("    {%s},\n" % ", ".join("%.4f" % q for q in row))
            f.write("};\n")


if __name__ == "__main__":
    main(sys.argv[1])
