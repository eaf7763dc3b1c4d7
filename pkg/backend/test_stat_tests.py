from itertools import product

import numpy as np
import pytest
from scipy import stats

from stat_tests import (TestResult, bca_bootstrap_ci, credit_share, hodges_lehmann, holm_bonferroni,
                        paired_bootstrap_test, pearson, percentile_bootstrap_ci, sign_agreement, transfer_gap,
                        welch_t, wilcoxon_ci_hl, wilcoxon_signed_rank, wilson_interval)


def test_wilson_interval_closed_form():
    lo, hi = wilson_interval(5, 10)
    assert lo == pytest.approx(0.2366, abs=1e-3)
    assert hi == pytest.approx(0.7634, abs=1e-3)
    z = stats.norm.ppf(0.975)
    for wins, n in [(3, 17), (40, 50), (1, 100)]:
        p = wins / n
        center = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        got = wilson_interval(wins, n)
        assert got[0] == pytest.approx(center - half, abs=1e-9)
        assert got[1] == pytest.approx(center + half, abs=1e-9)


def test_wilson_interval_edges():
    assert wilson_interval(0, 20)[0] == 0.0
    assert wilson_interval(20, 20)[1] == 1.0
    with pytest.raises(ValueError):
        wilson_interval(3, 0)
    with pytest.raises(ValueError):
        wilson_interval(11, 10)


def test_paired_bootstrap_extremes():
    x = np.random.default_rng(0).uniform(size=10)
    assert paired_bootstrap_test(x, x, B=2000).p_value >= 0.9
    res = paired_bootstrap_test(x + 1.0 + np.arange(10), x, B=2000)
    assert res.p_value <= 0.001
    assert res.ci[0] > 0
    assert res.extra['n'] == 10
    with pytest.raises(ValueError):
        paired_bootstrap_test([1.0, 2.0], [1.0])


def test_paired_bootstrap_is_seeded():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=20), rng.normal(size=20)
    assert paired_bootstrap_test(x, y, B=500, seed=3) == paired_bootstrap_test(x, y, B=500, seed=3)


def test_welch_against_hand_computation():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([2.0, 4.0, 6.0, 8.0, 10.0])
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    t = (x.mean() - y.mean()) / np.sqrt(vx + vy)
    df = (vx + vy) ** 2 / (vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1))
    res = welch_t(x, y)
    assert res.statistic == pytest.approx(t)
    assert res.extra['df'] == pytest.approx(df)
    assert res.p_value == pytest.approx(2 * stats.t.sf(abs(t), df))
    half = stats.t.ppf(0.975, df) * np.sqrt(vx + vy)
    assert res.ci[0] == pytest.approx(x.mean() - y.mean() - half)
    assert res.ci[1] == pytest.approx(x.mean() - y.mean() + half)


def test_welch_zero_variance():
    assert welch_t([1.0, 1.0], [1.0, 1.0]).p_value == 1.0
    with pytest.raises(ValueError):
        welch_t([1.0, 1.0], [2.0, 2.0])


def test_wilcoxon_exact_matches_enumeration():
    d = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert wilcoxon_signed_rank(d, alternative='greater').p_value == pytest.approx(1 / 32)
    assert wilcoxon_signed_rank(d).p_value == pytest.approx(2 / 32)

    d = np.array([0.5, -1.5, 2.5, 3.5, -4.5, 5.5])
    ranks = np.arange(1, 7)
    observed = ranks[d > 0].sum()
    null = [sum(r for r, s in zip(ranks, signs) if s) for signs in product([0, 1], repeat=6)]
    expected = np.mean([w >= observed for w in null])
    res = wilcoxon_signed_rank(d, alternative='greater')
    assert res.method == 'wilcoxon_exact'
    assert res.p_value == pytest.approx(expected)


def test_wilcoxon_drops_zeros_and_switches_to_normal():
    assert wilcoxon_signed_rank([0.0, 1.0, 2.0, 3.0]).extra['n'] == 3
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([0.0, 0.0])
    big = np.random.default_rng(0).normal(0.5, 1.0, size=40)
    assert wilcoxon_signed_rank(big).method == 'wilcoxon_approx'


def test_hodges_lehmann_brute_force():
    d = np.random.default_rng(2).normal(size=8)
    walsh = [(d[i] + d[j]) / 2 for i in range(8) for j in range(i, 8)]
    assert len(walsh) == 36
    assert hodges_lehmann(d) == pytest.approx(np.median(walsh))
    lo, hi = wilcoxon_ci_hl(d, B=500)
    assert lo <= hodges_lehmann(d) <= hi


def test_holm_bonferroni():
    np.testing.assert_allclose(holm_bonferroni([0.01, 0.04, 0.03]), [0.03, 0.06, 0.06])
    raw = np.random.default_rng(3).uniform(size=12)
    adjusted = holm_bonferroni(raw)
    assert np.all(adjusted >= raw - 1e-12)
    assert np.all(adjusted <= 1.0)
    assert holm_bonferroni([]).size == 0
    with pytest.raises(ValueError):
        holm_bonferroni([0.2, 1.5])


def test_bootstrap_intervals_bracket_the_mean():
    values = np.random.default_rng(4).normal(2.0, 1.0, size=60)
    for fn in (percentile_bootstrap_ci, bca_bootstrap_ci):
        lo, hi = fn(values, B=1000)
        assert lo < values.mean() < hi
        assert hi - lo < 1.0
    assert percentile_bootstrap_ci([0.5, 0.5, 0.5]) == (0.5, 0.5)


@pytest.mark.slow
def test_percentile_bootstrap_coverage():
    rng = np.random.default_rng(5)
    hits = 0
    reps = 200
    for r in range(reps):
        lo, hi = percentile_bootstrap_ci(rng.normal(size=40), B=1000, seed=r)
        hits += lo <= 0.0 <= hi
    assert 0.87 <= hits / reps <= 0.99


def test_pearson_matches_direct_formula():
    rng = np.random.default_rng(6)
    x = rng.normal(size=50)
    y = 0.3 * x + rng.normal(size=50)
    xc, yc = x - x.mean(), y - y.mean()
    assert pearson(x, y) == pytest.approx((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)))
    assert pearson(np.ones(5), y[:5]) == 0.0
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])


def test_sign_agreement():
    assert sign_agreement([1.0, -1.0, 0.0, 2.0], [1.0, 1.0, 5.0, 0.0]) == 0.5
    assert sign_agreement([0.0, 1.0], [3.0, 0.0]) is None


def test_credit_share():
    a = np.zeros((10, 3))
    a[:, 1] = 5.0
    a[:, 0] = 0.1
    share = credit_share(a, np.ones(3) / 3)
    assert share[1] > 0.9
    assert share.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(credit_share(np.zeros((4, 3)), np.ones(3)), np.full(3, 1 / 3))


def test_transfer_gap():
    assert transfer_gap(0.726, 0.768) == pytest.approx(-4.2)
    assert transfer_gap(0.60, 0.647) == pytest.approx(-4.7)
    assert transfer_gap(0.7, 0.5) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        transfer_gap(1.2, 0.5)


def test_result_serializes():
    out = TestResult(statistic=1.0, p_value=0.5, ci=(0.1, 0.2), method='x').to_dict()
    assert out['ci'] == [0.1, 0.2] and out['method'] == 'x'
