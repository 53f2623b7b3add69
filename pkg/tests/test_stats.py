import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from market_rl.stats import (SampleSummary, explained_variance, one_sample_t_test, quartiles,
                             regularized_incomplete_beta, student_t_cdf, student_t_sf, welch_t_test)

scipy_stats = pytest.importorskip("scipy.stats")


def test_explained_variance_examples():
    r = np.array([1.0, 2.0, 3.0, 5.0])
    assert explained_variance(r, r) == 1.0
    assert explained_variance(r, np.full(4, 2.0)) == pytest.approx(0.0, abs=1e-15)
    assert explained_variance([1, 2, 3], [1, 1, 3]) == pytest.approx(2 / 3, abs=1e-15)
    assert explained_variance([4, 4, 4], [1, 2, 3]) is None
    with pytest.raises(ValueError):
        explained_variance([1, 2], [1])


def test_welch_identical_groups():
    a = SampleSummary(10, 3.0, 2.0)
    res = welch_t_test(a, a)
    assert res.t_statistic == 0.0 and res.p_value == 0.5


def test_welch_hand_example():
    res = welch_t_test(SampleSummary(10, 1.0, 1.0), SampleSummary(10, 0.0, 1.0))
    assert res.t_statistic == pytest.approx(1 / math.sqrt(0.2), abs=1e-6)
    assert res.t_statistic == pytest.approx(2.2360, abs=1e-4)
    assert res.degrees_of_freedom == pytest.approx(18.0, abs=1e-12)


def test_welch_antisymmetry():
    a, b = SampleSummary(7, 2.5, 4.0), SampleSummary(12, 1.0, 0.5)
    ab, ba = welch_t_test(a, b), welch_t_test(b, a)
    assert ab.t_statistic == -ba.t_statistic
    assert ab.p_value == pytest.approx(1 - ba.p_value, abs=1e-14)


def test_one_sample_examples():
    assert one_sample_t_test(SampleSummary(5, 3.0, 1.0), mu0=3.0).t_statistic == 0.0
    res = one_sample_t_test(SampleSummary(10, 1942.89, 1476.0 ** 2))
    assert res.t_statistic == pytest.approx(1942.89 / (1476 / math.sqrt(10)), abs=1e-6)
    assert res.t_statistic == pytest.approx(4.162, abs=1e-3)
    assert res.degrees_of_freedom == 9


def test_tests_need_two_samples():
    with pytest.raises(ValueError):
        welch_t_test(SampleSummary(1, 0, 0), SampleSummary(5, 0, 1))
    with pytest.raises(ValueError):
        one_sample_t_test(SampleSummary(1, 0, 0))


def test_summary_of_samples():
    s = SampleSummary.of([1.0, 2.0, 3.0, 6.0])
    assert (s.n, s.mean, s.variance) == (4, 3.0, pytest.approx(14 / 3))
    with pytest.raises(ValueError):
        SampleSummary.of([])


def test_cdf_closed_forms():
    assert student_t_cdf(0.0, 3.0) == 0.5
    assert student_t_cdf(1.0, 1.0) == pytest.approx(0.75, abs=1e-10)
    for x in (-30.0, -2.0, -0.3, 0.7, 5.0, 1e4):
        assert student_t_cdf(x, 1.0) == pytest.approx(0.5 + math.atan(x) / math.pi, abs=1e-10)
    # dof 2 also has a closed form
    for x in (-4.0, 0.5, 3.0):
        assert student_t_cdf(x, 2.0) == pytest.approx(0.5 + x / (2 * math.sqrt(2 + x * x)), abs=1e-12)


def test_cdf_normal_limit():
    assert student_t_cdf(1.96, 1e6) == pytest.approx(0.975002, abs=1e-4)
    assert student_t_cdf(1.96, 1e6) == pytest.approx(0.5 * (1 + math.erf(1.96 / math.sqrt(2))), abs=1e-5)


def test_cdf_against_scipy_grid():
    worst = 0.0
    for dof in (0.5, 1, 2.06, 3, 9, 15.99, 30, 300, 1e4, 1e6):
        for x in np.linspace(-40, 40, 161):
            worst = max(worst, abs(student_t_cdf(float(x), dof) - scipy_stats.t.cdf(x, dof)))
    assert worst < 1e-11


def test_far_tail_relative_accuracy():
    for x, dof in ((33.13, 10.0), (11.4, 2.07), (60.0, 18.0)):
        assert student_t_sf(x, dof) == pytest.approx(scipy_stats.t.sf(x, dof), rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.05, 500), b=st.floats(0.05, 500), x=st.floats(0, 1))
def test_incomplete_beta_matches_scipy(a, b, x):
    from scipy.special import betainc
    assert regularized_incomplete_beta(a, b, x) == pytest.approx(betainc(a, b, x), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-50, 50), dof=st.floats(0.2, 1e5))
def test_cdf_symmetric_and_monotone(x, dof):
    assert student_t_cdf(x, dof) + student_t_cdf(-x, dof) == pytest.approx(1.0, abs=1e-12)
    assert student_t_cdf(x + 0.5, dof) >= student_t_cdf(x, dof)


def test_cdf_argument_errors():
    with pytest.raises(ValueError):
        student_t_cdf(1.0, 0.0)
    assert student_t_cdf(math.inf, 4) == 1.0 and student_t_cdf(-math.inf, 4) == 0.0
    with pytest.raises(ValueError):
        regularized_incomplete_beta(1.0, 1.0, 1.5)


def test_welch_matches_scipy_on_samples():
    rng = np.random.default_rng(0)
    a, b = rng.normal(2, 3, 12), rng.normal(0, 1, 8)
    ours = welch_t_test(SampleSummary.of(a), SampleSummary.of(b))
    ref = scipy_stats.ttest_ind(a, b, equal_var=False, alternative="greater")
    assert ours.t_statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_quartiles():
    q = quartiles([1, 2, 3, 4, 5])
    assert q == {"min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}
