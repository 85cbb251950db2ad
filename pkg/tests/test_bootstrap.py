import csv
import json

import numpy as np
import pytest
from jsonschema import Draft202012Validator
from scipy import stats

from nsvt import bootstrap
from nsvt.bootstrap import parametric_bootstrap, replicate_seed
from nsvt.errors import DomainError, NonConvergenceError
from nsvt.model import NsvtParams
from nsvt.serialize import load_schema


def _design(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([np.ones(n), rng.standard_normal(n)])


FITTED = NsvtParams([1.0, -0.5], 0.5, 5.0, 0.7)


@pytest.fixture(scope="module")
def small():
    return parametric_bootstrap(FITTED, _design(300), B=12, seed=11, workers=1)


def test_zero_replicates_rejected():
    with pytest.raises(DomainError):
        parametric_bootstrap(FITTED, _design(50), B=0)


@pytest.mark.parametrize("kwargs", [dict(level=0.0), dict(level=1.0), dict(estimator="MLE"), dict(B=2.5)])
def test_bad_arguments(kwargs):
    with pytest.raises(DomainError):
        parametric_bootstrap(FITTED, _design(50), **{"B": 3, **kwargs})


def test_fitted_must_be_params():
    with pytest.raises(DomainError):
        parametric_bootstrap(FITTED.to_vector(), _design(50), B=3)


def test_all_failures_raise():
    with pytest.raises(NonConvergenceError):
        parametric_bootstrap(FITTED, _design(200), B=3, options={"max_iter": 1})


def test_failures_are_dropped_and_counted(monkeypatch):
    real = bootstrap.fit_clem
    calls = []

    def flaky(data, **kwargs):
        calls.append(1)
        if len(calls) % 3 == 0:
            raise NonConvergenceError("injected")
        return real(data, **kwargs)

    monkeypatch.setattr(bootstrap, "fit_clem", flaky)
    res = parametric_bootstrap(FITTED, _design(200), B=6, seed=1, workers=1)
    assert res.failures == 2
    assert np.isnan(res.replicates[[2, 5]]).all()
    good = res.replicates[np.isfinite(res.replicates).all(axis=1)]
    np.testing.assert_allclose(res.se, good.std(axis=0, ddof=1), rtol=1e-15)


def test_shapes_and_interval_order(small):
    assert small.replicates.shape == (12, FITTED.p + 3)
    assert small.B == 12 and small.failures <= small.B
    assert small.names == ["beta_1", "beta_2", "sigma2", "nu", "rho"]
    assert np.all(small.ci_normal[:, 0] <= small.ci_normal[:, 1])
    assert np.all(small.ci_percentile[:, 0] <= small.ci_percentile[:, 1])
    # CLEM replicates keep nu at the fitted value
    assert np.all(small.replicates[:, 3] == FITTED.nu)


def test_percentile_endpoints_are_order_statistics(small):
    good = small.replicates[np.isfinite(small.replicates).all(axis=1)]
    for k in range(good.shape[1]):
        col = np.sort(good[:, k])
        lo, hi = small.ci_percentile[k]
        assert lo in col and hi in col
        # inverted-cdf quantiles: ceil(B q)-th order statistic
        b = col.size
        assert lo == col[int(np.ceil(b * 0.025)) - 1]
        assert hi == col[int(np.ceil(b * 0.975)) - 1]


def test_normal_interval_width(small):
    z = stats.norm.ppf(0.975)
    width = small.ci_normal[:, 1] - small.ci_normal[:, 0]
    np.testing.assert_allclose(width, 2 * z * small.se, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(small.ci_normal.mean(axis=1), FITTED.to_vector(), rtol=1e-12)


def test_reproducible_and_worker_independent(small):
    again = parametric_bootstrap(FITTED, _design(300), B=12, seed=11, workers=2)
    assert np.array_equal(small.replicates, again.replicates, equal_nan=True)
    assert np.array_equal(small.ci_percentile, again.ci_percentile)


def test_growing_b_keeps_earlier_replicates(small):
    fewer = parametric_bootstrap(FITTED, _design(300), B=5, seed=11, workers=1)
    assert np.array_equal(fewer.replicates, small.replicates[:5])


def test_replicate_seeds_distinct():
    states = {replicate_seed(0, b).generate_state(2).tobytes() for b in range(1000)}
    assert len(states) == 1000


def test_cl_estimator():
    res = parametric_bootstrap(FITTED, _design(300), B=4, estimator="CL", seed=2, workers=1)
    assert res.estimator == "CL" and res.failures == 0
    assert np.all(np.diff(res.replicates[:, 3]) != 0)


def test_se_shrinks_with_sample_size():
    se = [parametric_bootstrap(FITTED, _design(n), B=30, seed=5, workers=1).se[0] for n in (500, 2000)]
    assert se[1] < se[0]


def test_csv_and_json(small, tmp_path):
    small.to_csv(tmp_path / "reps.csv")
    with open(tmp_path / "reps.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12 and rows[0]["replicate"] == "0"
    assert float(rows[3]["rho"]) == small.replicates[3, 4]
    small.to_json(tmp_path / "summary.json")
    with open(tmp_path / "summary.json") as fh:
        summary = json.load(fh)
    Draft202012Validator(load_schema("bootstrap_summary")).validate(summary)
    assert summary["parameters"]["rho"]["ci_percentile"] == list(small.ci_percentile[4])


def test_covers(small):
    lo, hi = small.ci_percentile[4]
    assert bootstrap.covers(small, (lo + hi) / 2)
    assert not bootstrap.covers(small, hi + 1)
