import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from htnsim import harness
from htnsim.engine import FP, SLQ
from htnsim.errors import EmptySample, SlqLimitUndefined
from htnsim.harness import (
    ExperimentPlan,
    binomial_interval,
    compare_marginals,
    ks_distance,
    nash_experiment,
    rsp_experiment,
    violation_fraction,
)
from htnsim.io import report_csv
from htnsim.model import model_from_arrays

from conftest import cstar


def test_ks_examples():
    assert ks_distance([1, 2, 3], [2, 3, 4]) == pytest.approx(1 / 3)
    assert ks_distance([0, 0], [1, 1]) == 1.0
    assert ks_distance([3, 1, 2, 2], [2, 1, 2, 3]) == 0.0


def test_ks_empty():
    with pytest.raises(EmptySample):
        ks_distance([], [1.0])
    with pytest.raises(EmptySample):
        ks_distance([1.0], np.array([]))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(-5, 5), min_size=1, max_size=40),
    st.lists(st.integers(-5, 5), min_size=1, max_size=40),
)
def test_ks_against_scipy_and_symmetric(a, b):
    d = ks_distance(a, b)
    assert d == ks_distance(b, a)
    assert d == pytest.approx(ks_2samp(a, b, method="asymp").statistic, abs=1e-12)
    assert (d == 0) == (sorted(a) == sorted(b) or _same_cdf(a, b))


def _same_cdf(a, b):
    pts = sorted(set(a) | set(b))
    return all(sum(x <= p for x in a) * len(b) == sum(x <= p for x in b) * len(a) for p in pts)


def test_binomial_interval():
    lo, hi = binomial_interval(5, 100)
    assert lo < 0.05 < hi
    assert hi - 0.05 == pytest.approx(1.959963984540054 * np.sqrt(0.05 * 0.95 / 100))
    assert binomial_interval(0, 50) == (0.0, 0.0)
    assert binomial_interval(50, 50) == (1.0, 1.0)


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(cstar(), FP, [100, 25])
    with pytest.raises(ValueError):
        ExperimentPlan(cstar(), FP, [25], replications=0)
    with pytest.raises(ValueError):
        ExperimentPlan(cstar(), FP, [25], eps=0.0)
    assert ExperimentPlan(cstar(), FP, [25], horizon=3.0).T == 3.0


def test_rsp_report_reproducible():
    plan = ExperimentPlan(cstar(), SLQ, [25, 100], replications=3, horizon=2.0, seed=11, workers=1)
    a, b = rsp_experiment(plan), rsp_experiment(plan)
    assert report_csv(a) == report_csv(b)
    assert a.summary() == b.summary()
    assert len(a.runs) == 6 and not a.failures


def test_rsp_report_quantiles_ordered():
    plan = ExperimentPlan(cstar(), FP, [25, 100], replications=8, horizon=2.0, seed=3, workers=1)
    rep = rsp_experiment(plan)
    for n in plan.n_list:
        for metric, cls in (("gamma", 1), ("gamma", 2), ("max_Qhat", 2), ("reneg_count", 1), ("ssc", None)):
            assert rep.value(metric, n, cls, "median") <= rep.value(metric, n, cls, "p90")


def test_rsp_degenerate_single_class():
    m = model_from_arrays([1.0], [1.0], [1e6])
    rep = rsp_experiment(ExperimentPlan(m, FP, [25], replications=2, horizon=0.05, seed=0, workers=1))
    assert np.isfinite(rep.value("gamma", 25, 1))
    assert rep.value("reneg_count", 25, 1, "p90") == 0


def test_process_pool_matches_serial():
    plan = ExperimentPlan(cstar(), FP, [25], replications=4, horizon=1.0, seed=2, workers=1)
    serial = rsp_experiment(plan)
    plan.workers = 2
    assert report_csv(rsp_experiment(plan)) == report_csv(serial)


def test_nash_fraction_monotone_in_eps():
    gaps = [-0.3, 0.0, 0.05, 0.1, 0.4, 0.9]
    fr = [violation_fraction(gaps, e) for e in (0.01, 0.05, 0.2, 0.5, 1.0)]
    assert fr == sorted(fr, reverse=True)
    assert fr[-1] == 0.0


def test_nash_experiment_bounds_and_eps():
    base = dict(model=cstar(), policy=FP, n_list=[25], replications=2, horizon=2.0, seed=5, deviators=6, workers=1)
    small = nash_experiment(ExperimentPlan(eps=0.01, **base))
    big = nash_experiment(ExperimentPlan(eps=100.0, **base))
    assert [r["gap"] for r in small.runs] == [r["gap"] for r in big.runs]
    assert big.value("nash_violation_fraction", 25, None, "value") == 0.0
    f = small.value("nash_violation_fraction", 25, None, "value")
    assert 0.0 <= small.value("nash_violation_fraction", 25, None, "ci95_low") <= f
    assert f <= small.value("nash_violation_fraction", 25, None, "ci95_high") <= 1.0
    assert small.value("nash_deviators", 25, None, "count") == 12
    assert {r["class"] for r in small.runs} == {1, 2}


def test_nash_post_horizon_deviator(monkeypatch):
    monkeypatch.setattr(harness, "sample_deviators", lambda ref, plan, n, rep: [(1, 10**6)])
    plan = ExperimentPlan(cstar(), SLQ, [25], replications=1, horizon=1.0, seed=0, deviators=1, eps=1e-9, workers=1)
    rep = nash_experiment(plan)
    assert rep.runs[0]["gap"] == 0.0
    assert rep.value("nash_violation_fraction", 25, None, "value") == 0.0


def test_deviators_drawn_from_pre_horizon_arrivals():
    from htnsim.engine import Scenario, arrivals_by, run

    plan = ExperimentPlan(cstar(), FP, [100], horizon=2.0, seed=8, deviators=40)
    ref = run(plan.model, FP, Scenario.reference(), 100, 2.0, 8, 0)
    devs = harness.sample_deviators(ref, plan, 100, 0)
    assert [i for i, _ in devs] == [1, 2] * 20
    for i, j in devs:
        assert 1 <= j <= arrivals_by(ref, i, 2.0)
    assert devs == harness.sample_deviators(ref, plan, 100, 0)


def test_compare_marginals_small():
    plan = ExperimentPlan(cstar(), FP, [25], replications=20, horizon=2.0, seed=1, n_paths=50, dt=1e-2,
                          comparison_times=(1.0, 2.0), workers=1)
    a = compare_marginals(plan)
    assert report_csv(a) == report_csv(compare_marginals(plan))
    for t in ("t=1", "t=2"):
        for i in (1, 2):
            assert 0.0 <= a.value("ks", 25, i, t) <= 1.0


def test_compare_slq_requires_unique_minimum():
    tied = model_from_arrays([0.5, 0.5], [1.0, 1.0], [0.6, 0.6])
    with pytest.raises(SlqLimitUndefined):
        compare_marginals(ExperimentPlan(tied, SLQ, [25], n_paths=5, workers=1))


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("HTN_THREADS", "3")
    assert harness.default_workers() == 3
    monkeypatch.delenv("HTN_THREADS")
    assert harness.default_workers() >= 1
