"""Statistical toolkit for agent comparisons.

Wilson intervals, percentile and BCa bootstraps, the paired bootstrap test,
Welch and Wilcoxon tests, the Hodges-Lehmann estimator, Holm-Bonferroni
adjustment and the calibration metrics reported during training.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from statsmodels.stats.multitest import multipletests
from statsmodels.stats.proportion import proportion_confint

DEFAULT_RESAMPLES = 10000
DEFAULT_CONFIDENCE = 0.95
EXACT_WILCOXON_MAX_N = 25


@dataclass
class TestResult:
    statistic: float
    p_value: float
    ci: Tuple[float, float] = (float('nan'), float('nan'))
    method: str = ''
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out['ci'] = list(self.ci)
        return out


# keep pytest from collecting this class
TestResult.__test__ = False


def _as_array(values: Sequence[float], minimum: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < minimum:
        raise ValueError(f'{what} needs at least {minimum} values, got {arr.size}')
    return arr


def wilson_interval(wins: int, n: int, confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    if n < 1:
        raise ValueError('Wilson interval needs n >= 1')
    if not 0 <= wins <= n:
        raise ValueError(f'wins must lie in [0, n], got wins={wins} n={n}')
    lo, hi = proportion_confint(wins, n, alpha=1.0 - confidence, method='wilson')
    lo = 0.0 if wins == 0 else float(np.clip(lo, 0.0, 1.0))
    hi = 1.0 if wins == n else float(np.clip(hi, 0.0, 1.0))
    return lo, hi


def _bootstrap_ci(values: Sequence[float], statistic, B: int, confidence: float, seed: int,
                  method: str) -> Tuple[float, float]:
    arr = _as_array(values, 2, 'bootstrap')
    if np.ptp(arr) == 0.0:
        c = float(statistic(arr))
        return c, c
    res = stats.bootstrap((arr,), statistic, n_resamples=B, confidence_level=confidence,
                          method=method, random_state=np.random.default_rng(seed), vectorized=False)
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def percentile_bootstrap_ci(values: Sequence[float], B: int = DEFAULT_RESAMPLES,
                            confidence: float = DEFAULT_CONFIDENCE, seed: int = 0) -> Tuple[float, float]:
    """Percentile bootstrap CI of the mean."""
    return _bootstrap_ci(values, np.mean, B, confidence, seed, 'percentile')


def bca_bootstrap_ci(values: Sequence[float], B: int = DEFAULT_RESAMPLES,
                     confidence: float = DEFAULT_CONFIDENCE, seed: int = 0) -> Tuple[float, float]:
    """Bias-corrected and accelerated bootstrap CI of the mean (jackknife acceleration)."""
    return _bootstrap_ci(values, np.mean, B, confidence, seed, 'BCa')


def paired_bootstrap_test(x: Sequence[float], y: Sequence[float], B: int = DEFAULT_RESAMPLES,
                          seed: int = 0, confidence: float = DEFAULT_CONFIDENCE) -> TestResult:
    """Two-sided test of mean(x - y) = 0 by resampling the centered paired differences.

    The p-value is floored at 1/B; the CI is the percentile interval of the
    uncentered resampled means.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f'paired test needs equal lengths, got {x.size} and {y.size}')
    d = _as_array(x - y, 2, 'paired bootstrap')
    observed = float(d.mean())
    rng = np.random.default_rng(seed)
    idx = rng.integers(d.size, size=(B, d.size))
    means = d[idx].mean(axis=1)
    centered = means - observed
    # exact ties count as extreme
    extreme = int(np.sum(np.abs(centered) >= abs(observed) - 1e-12))
    p = max(extreme, 1) / B
    alpha = 1.0 - confidence
    lo, hi = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    return TestResult(statistic=observed, p_value=min(1.0, p), ci=(float(lo), float(hi)),
                      method='paired_bootstrap', extra={'resamples': B, 'seed': seed, 'n': int(d.size)})


def welch_t(x: Sequence[float], y: Sequence[float], confidence: float = DEFAULT_CONFIDENCE) -> TestResult:
    """Welch t-test with Welch-Satterthwaite degrees of freedom and CI of the mean difference."""
    x = _as_array(x, 2, 'welch_t')
    y = _as_array(y, 2, 'welch_t')
    vx, vy = x.var(ddof=1), y.var(ddof=1)
    if vx == 0 and vy == 0:
        if x.mean() == y.mean():
            return TestResult(statistic=0.0, p_value=1.0, ci=(0.0, 0.0), method='welch_t',
                              extra={'df': float(x.size + y.size - 2)})
        raise ValueError('Welch t-test is undefined when both samples have zero variance')
    res = stats.ttest_ind(x, y, equal_var=False)
    ci = res.confidence_interval(confidence_level=confidence)
    return TestResult(statistic=float(res.statistic), p_value=float(res.pvalue),
                      ci=(float(ci.low), float(ci.high)), method='welch_t', extra={'df': float(res.df)})


def wilcoxon_signed_rank(diffs: Sequence[float], alternative: str = 'two-sided') -> TestResult:
    """Signed-rank test with zeros dropped; exact null up to 25 nonzero pairs."""
    d = np.asarray(diffs, dtype=float).ravel()
    d = d[d != 0]
    if d.size == 0:
        raise ValueError('Wilcoxon test needs at least one nonzero difference')
    method = 'exact' if d.size <= EXACT_WILCOXON_MAX_N else 'approx'
    res = stats.wilcoxon(d, zero_method='wilcox', alternative=alternative, method=method)
    return TestResult(statistic=float(res.statistic), p_value=float(min(1.0, res.pvalue)),
                      method=f'wilcoxon_{method}', extra={'n': int(d.size)})


def hodges_lehmann(diffs: Sequence[float]) -> float:
    """Median of the Walsh averages (x_i + x_j) / 2 over i <= j."""
    d = _as_array(diffs, 1, 'Hodges-Lehmann')
    i, j = np.triu_indices(d.size)
    return float(np.median((d[i] + d[j]) / 2.0))


def wilcoxon_ci_hl(diffs: Sequence[float], B: int = DEFAULT_RESAMPLES, seed: int = 0,
                   confidence: float = DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    """Percentile bootstrap CI of the Hodges-Lehmann location estimator."""
    return _bootstrap_ci(diffs, hodges_lehmann, B, confidence, seed, 'percentile')


def holm_bonferroni(p_values: Sequence[float]) -> np.ndarray:
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return p
    if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
        raise ValueError('p-values must lie in [0, 1]')
    return multipletests(p, method='holm')[1]


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson r; a constant input gives 0."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f'length mismatch: {x.size} vs {y.size}')
    if x.size < 2:
        raise ValueError('Pearson correlation needs at least two points')
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    return float(np.clip(stats.pearsonr(x, y)[0], -1.0, 1.0))


def sign_agreement(a: Sequence[float], e: Sequence[float]) -> Optional[float]:
    """Share of pairs with both entries nonzero whose signs match; None when no such pair."""
    a = np.asarray(a, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    if a.size != e.size:
        raise ValueError(f'length mismatch: {a.size} vs {e.size}')
    keep = (a != 0) & (e != 0)
    if not keep.any():
        return None
    return float(np.mean(np.sign(a[keep]) == np.sign(e[keep])))


def credit_share(a_factor: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Σ_t |w_k A_k,t| / Σ_t Σ_j |w_j A_j,t| per factor."""
    contrib = np.abs(np.asarray(a_factor, dtype=float) * np.asarray(weights, dtype=float)).sum(axis=0)
    total = contrib.sum()
    if total <= 0:
        return np.full(contrib.shape, 1.0 / contrib.size)
    return contrib / total


def transfer_gap(in_dist: float, held_out: float) -> float:
    """In-distribution minus held-out win rate in percentage points; positive is a drop."""
    for rate in (in_dist, held_out):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f'rates must lie in [0, 1], got {rate}')
    return 100.0 * (in_dist - held_out)
