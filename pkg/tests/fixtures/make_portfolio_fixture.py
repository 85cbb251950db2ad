"""Regenerate the synthetic two-stock, eleven-ETF return fixture.

Run from the repository root::

    python3 tests/fixtures/make_portfolio_fixture.py

Factors are iid standard normal in standardized units; each stock is an NSVt
regression on them with the average CVX / XOM coefficients of the sector-ETF
study (XLE 0.765 / 0.780) and noise scaled so the stock has unit variance.
Everything is multiplied by 1e-3 to look like two-minute returns.
"""
import datetime as dt
import os

import numpy as np

from nsvt.model import NsvtParams, simulate_nsvt

FACTORS = ["XLF", "XLE", "OIH", "XLK", "XLP", "XLV", "XLU", "GDX", "XLI", "IYE", "XME"]
BETA = {
    "CVX": [0.024, 0.765, -0.076, 0.040, 0.059, 0.026, 0.052, -0.023, -0.049, 0.006, 0.000],
    "XOM": [0.014, 0.780, -0.086, 0.059, 0.069, 0.038, 0.021, -0.020, -0.056, 0.005, 0.014],
}
NU, RHO = 5.0, 0.7
DAYS = ["2019-06-03", "2019-06-04", "2019-06-05", "2019-06-06", "2019-06-07", "2019-06-10"]
BARS_PER_DAY = 120
SCALE = 1e-3
SEED = 20190603

HERE = os.path.dirname(os.path.abspath(__file__))


def noise_sigma2(beta):
    # Unit marginal variance: beta'beta + sigma2 nu / (nu - 2) = 1.
    return (1.0 - float(np.dot(beta, beta))) * (NU - 2) / NU


def timestamps():
    out = []
    for day in DAYS:
        start = dt.datetime.fromisoformat(day + "T09:30:00")
        out += [start + dt.timedelta(minutes=2 * (k + 1)) for k in range(BARS_PER_DAY)]
    return out


def build():
    n = len(DAYS) * BARS_PER_DAY
    seeds = np.random.SeedSequence(SEED).spawn(3)
    X = np.random.default_rng(seeds[0]).standard_normal((n, len(FACTORS)))
    cols = {}
    for k, (name, beta) in enumerate(BETA.items()):
        params = NsvtParams(beta, noise_sigma2(beta), NU, RHO)
        cols[name] = simulate_nsvt(params, X, seed=seeds[k + 1])
    stocks = np.column_stack([cols["CVX"], cols["XOM"]])
    return timestamps(), SCALE * np.hstack([stocks, X])


def main():
    stamps, values = build()
    path = os.path.join(HERE, "portfolio", "returns.csv")
    with open(path, "w") as fh:
        fh.write(",".join(["timestamp", "CVX", "XOM", *FACTORS]) + "\n")
        for t, row in zip(stamps, values):
            fh.write(t.isoformat() + "," + ",".join(format(v, ".17g") for v in row) + "\n")
    print(f"wrote {len(stamps)} rows to {path}")


if __name__ == "__main__":
    main()
