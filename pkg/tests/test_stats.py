import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atnquant.errors import DegenerateAnova, DegenerateFit, ZeroPooledSd
from atnquant.stats import (agreement, anova_oneway, betainc, bland_altman, cohens_d,
                            f_sf, icc, linear_fit)


# -- brute-force oracles, written with plain Python loops -----------------------

def fit_oracle(x, y):
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(a * a for a in x)
    sxy = sum(a * b for a, b in zip(x, y))
    slope = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    intercept = (sy - slope * sx) / n
    my = sy / n
    ss_res = sum((b - slope * a - intercept) ** 2 for a, b in zip(x, y))
    ss_tot = sum((b - my) ** 2 for b in y)
    return slope, intercept, 1 - ss_res / ss_tot


def d_oracle(a, b):
    def var(v):
        m = sum(v) / len(v)
        return sum((t - m) ** 2 for t in v) / (len(v) - 1)
    pooled = math.sqrt(((len(a) - 1) * var(a) + (len(b) - 1) * var(b)) / (len(a) + len(b) - 2))
    return (sum(b) / len(b) - sum(a) / len(a)) / pooled


def icc_oracle(x, y):
    rows = list(zip(x, y))
    n, k = len(rows), 2
    grand = sum(x + y) / (n * k)
    ssr = sum(k * ((a + b) / 2 - grand) ** 2 for a, b in rows)
    ssc = sum(n * (sum(col) / n - grand) ** 2 for col in (x, y))
    sst = sum((v - grand) ** 2 for r in rows for v in r)
    sse = sst - ssr - ssc
    msr, msc, mse = ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)


def f_oracle(groups):
    allv = [v for g in groups for v in g]
    grand = sum(allv) / len(allv)
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum((v - sum(g) / len(g)) ** 2 for g in groups for v in g)
    return (ssb / (len(groups) - 1)) / (ssw / (len(allv) - len(groups)))


def _close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


# -- hand cases ------------------------------------------------------------------

def test_hand_cases():
    assert cohens_d([0, 1], [2, 3]) == pytest.approx(2.8284, abs=1e-4)
    assert cohens_d([0, 1], [2, 3]) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    f, p = anova_oneway([[0, 1], [2, 3]])
    assert f == 8.0
    # F(1, 2) is a squared t with 2 df: P(|t| > t0) = 1 - t0 / sqrt(2 + t0^2)
    assert p == pytest.approx(1 - math.sqrt(8) / math.sqrt(10), rel=1e-12)


def test_linear_fit_exact_line_and_constant_y():
    fit = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert (fit.slope, fit.intercept, fit.r2, fit.n) == (2.0, 1.0, 1.0, 4)
    flat = linear_fit([1, 2, 3], [5, 5, 5])
    assert flat.slope == 0 and flat.r2 == 0.0 and not flat.r2_defined
    with pytest.raises(DegenerateFit):
        linear_fit([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        linear_fit([1], [1])


def test_cohens_d_properties():
    assert cohens_d([1, 2, 3], [1, 2, 3]) == 0.0
    assert cohens_d([1, 2, 4], [3, 5, 9]) == -cohens_d([3, 5, 9], [1, 2, 4])
    with pytest.raises(ZeroPooledSd):
        cohens_d([1, 1], [2, 2])


def test_icc_cases():
    x = [1.0, 2.0, 4.0, 7.0]
    assert icc(x, x) == pytest.approx(1.0)
    assert icc(x, [v + 1 for v in x]) < 1.0
    assert icc(x, [9.0, 1.0, 3.0, 2.0]) == pytest.approx(icc([9.0, 1.0, 3.0, 2.0], x))


def test_bland_altman_cases():
    assert bland_altman([1, 2, 3], [1, 2, 3]) == (0.0, 0.0, 0.0)
    assert bland_altman([1, 2, 3], [2, 3, 4]) == (-1.0, -1.0, -1.0)
    a = bland_altman([1, 2, 5], [2, 2, 3])
    b = bland_altman([2, 2, 3], [1, 2, 5])
    assert a.bias == -b.bias and a.loa_low == pytest.approx(-b.loa_high)
    diffs = np.array([-1, 0, 2.0])
    assert a.loa_high - a.bias == pytest.approx(1.96 * diffs.std(ddof=1))
    ag = agreement([1, 2, 5], [2, 2, 3])
    assert ag.loa_low <= ag.bias <= ag.loa_high


def test_anova_identical_groups_and_degenerate():
    f, p = anova_oneway([[1, 2, 3], [1, 2, 3]])
    assert f == 0.0 and p == 1.0
    with pytest.raises(DegenerateAnova):
        anova_oneway([[1, 1], [2, 2]])
    with pytest.raises(DegenerateAnova):
        anova_oneway([[1, 2, 3]])


# -- oracles on random instances ------------------------------------------------

def _instances(n=100):
    rng = np.random.default_rng(2024)
    for _ in range(n):
        k = int(rng.integers(3, 12))
        x = rng.normal(size=k) * rng.uniform(0.5, 5)
        y = 0.7 * x + rng.normal(size=k)
        yield x.tolist(), y.tolist()


def test_oracles_100_instances():
    for x, y in _instances():
        fit = linear_fit(x, y)
        s, b, r2 = fit_oracle(x, y)
        assert _close(fit.slope, s) and _close(fit.intercept, b) and _close(fit.r2, r2)
        assert _close(icc(x, y), icc_oracle(x, y))
        assert _close(cohens_d(x, y), d_oracle(x, y))
        groups = [x, y, [v * 0.5 + 1 for v in x[:3]]]
        assert _close(anova_oneway(groups)[0], f_oracle(groups))


def test_f_pvalues_match_scipy():
    sps = pytest.importorskip("scipy.stats")
    sp = pytest.importorskip("scipy.special")
    for df1, df2, f in itertools.product([1, 2, 3, 7], [2, 5, 20, 80], [0.01, 0.5, 1.0, 3.3, 12.0]):
        assert f_sf(f, df1, df2) == pytest.approx(sps.f.sf(f, df1, df2), abs=1e-10)
    for a, b, x in itertools.product([0.5, 1, 2.5, 10, 40], [0.5, 1, 3, 25], [0.001, 0.3, 0.5, 0.9, 0.999]):
        assert betainc(a, b, x) == pytest.approx(sp.betainc(a, b, x), abs=1e-10)


def test_anova_matches_scipy():
    sps = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(3)
    groups = [rng.normal(m, 1, size=n) for m, n in ((0, 5), (0.5, 7), (1.2, 6))]
    f, p = anova_oneway(groups)
    ref = sps.f_oneway(*groups)
    assert f == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, abs=1e-12)


# -- invariants ----------------------------------------------------------------

finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=60)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=20))
def test_residuals_orthogonal_to_x(pairs):
    x, y = map(np.array, zip(*pairs))
    if np.ptp(x) < 1e-3:
        return
    fit = linear_fit(x, y)
    resid = y - fit.predict(x)
    assert abs(resid @ x) <= 1e-7 * len(x) * max(1.0, np.abs(x).max() * np.abs(y).max())
    assert 0.0 <= fit.r2 <= 1.0


@settings(max_examples=60)
@given(st.lists(finite, min_size=3, max_size=10), st.lists(finite, min_size=3, max_size=10),
       st.floats(-50, 50), st.floats(0.1, 10))
def test_d_and_f_shift_scale_invariant(a, b, shift, scale):
    a, b = np.array(a), np.array(b)
    if a.std() < 1e-3 or b.std() < 1e-3:
        return
    d = cohens_d(a, b)
    assert cohens_d(a + shift, b + shift) == pytest.approx(d, rel=1e-6, abs=1e-6)
    assert cohens_d(a * scale, b * scale) == pytest.approx(d, rel=1e-6, abs=1e-6)
    f = anova_oneway([a, b])[0]
    assert anova_oneway([a + shift, b + shift])[0] == pytest.approx(f, rel=1e-6, abs=1e-6)
