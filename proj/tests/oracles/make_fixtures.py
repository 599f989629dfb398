"""Regenerates the frozen test fixtures in tests/data.

Reference values come from scipy and statsmodels; table fixtures are read
from the appendix tables of paper.md. Run from the repository root:

    python3 tests/oracles/make_fixtures.py
"""
import csv
import json
import re
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.multivariate.manova import MANOVA

ROOT = Path(__file__).resolve().parents[2]
DATA = ROOT / "tests" / "data"


def f_quantiles():
    rng = np.random.default_rng(20240611)
    rows = []
    dfs = [(1, 1), (2, 5), (2, 97), (2, 4997), (3, 10), (4, 4), (5, 2), (10, 30), (1, 200), (7, 3)]
    for i in range(20):
        d1, d2 = dfs[i % len(dfs)]
        if i >= 10:
            d1, d2 = d1 + 0.5, d2 + 1.5
        p = float(rng.choice([1e-4, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999999]))
        x = float(stats.f.ppf(p, d1, d2))
        rows.append({"p": p, "d1": d1, "d2": d2, "x": x, "cdf": float(stats.f.cdf(x, d1, d2)),
                     "sf": float(stats.f.sf(x, d1, d2))})
    (DATA / "f_quantiles.json").write_text(json.dumps(rows, indent=1) + "\n")


def manova_oracle():
    rng = np.random.default_rng(77)
    out = []
    for i in range(20):
        n1, n2 = int(rng.integers(4, 40)), int(rng.integers(4, 40))
        shift = rng.normal(0, 0.6, size=2) * (i % 4)
        cov = np.array([[1.0, 0.3 * (i % 3 - 1)], [0.3 * (i % 3 - 1), 1.0 + 0.2 * (i % 5)]])
        a = rng.multivariate_normal([0, 0], cov, size=n1) * 150.0
        b = rng.multivariate_normal(shift, cov, size=n2) * 150.0
        df = pd.DataFrame({"x": np.r_[a[:, 0], b[:, 0]], "y": np.r_[a[:, 1], b[:, 1]],
                           "g": ["a"] * n1 + ["b"] * n2})
        res = MANOVA.from_formula("x + y ~ g", data=df).mv_test().results["g"]["stat"]
        pick = lambda name: {"value": float(res.loc[name, "Value"]), "f": float(res.loc[name, "F Value"]),
                             "df1": float(res.loc[name, "Num DF"]), "df2": float(res.loc[name, "Den DF"]),
                             "p": float(res.loc[name, "Pr > F"])}
        out.append({"a": a.tolist(), "b": b.tolist(),
                    "wilks": pick("Wilks' lambda"), "pillai": pick("Pillai's trace"),
                    "hotelling": pick("Hotelling-Lawley trace"), "roy": pick("Roy's greatest root")})
    (DATA / "manova_oracle.json").write_text(json.dumps(out) + "\n")


def latex_rows(block):
    rows = []
    for line in block.splitlines():
        line = line.strip()
        if not line.endswith("\\\\") or "&" not in line or "multicolumn" in line:
            continue
        cells = [c.strip() for c in line[:-2].split("&")]
        rows.append(cells)
    return rows


def table_block(text, label):
    end = text.index("\\label{" + label + "}")
    start = text.rindex("\\begin{table}", 0, end)
    return text[start:end]


def ranking_tables(text):
    for label, name in [("tab:FullRank-Table", "table_driveable.csv"),
                        ("tab:FullRank-Table_public", "table_public.csv")]:
        rows = latex_rows(table_block(text, label))
        with open(DATA / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["city", "provider", "emd", "kl", "emd_rank", "kl_rank"])
            for r in rows:
                if r[0] == "City":
                    continue
                w.writerow([re.sub(r"\s+", " ", r[0]).strip(), r[1], r[2], r[3], r[4], r[5]])


def appendix_manova(text):
    with open(DATA / "appendix_manova.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table", "city", "wilks", "wilks_p", "pillai", "pillai_p", "hotelling", "hotelling_p",
                    "roy", "roy_p"])
        for label in ["tab:sig-gsv-drive", "tab:sig-gsv-public", "tab:sig-mly-drive", "tab:sig-mly-public"]:
            for r in latex_rows(table_block(text, label)):
                if not r[0].isdigit():
                    continue
                w.writerow([label.split(":")[1]] + r[1:])


def mly_emd_coverage(text):
    # Coverage percentages for the Mapillary cities are only plotted in the
    # figures, which are not available as data; the column stays empty.
    rows = latex_rows(table_block(text, "tab:FullRank-Table"))
    with open(DATA / "mly_emd_coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["city", "provider", "emd", "coverage_pct"])
        for r in rows:
            if len(r) > 1 and r[1] == "MLY":
                w.writerow([r[0], "MLY", r[2], ""])


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    text = (ROOT / "paper.md").read_text()
    f_quantiles()
    manova_oracle()
    ranking_tables(text)
    appendix_manova(text)
    mly_emd_coverage(text)


if __name__ == "__main__":
    main()
