"""Concordance statistics: OLS fit, Cohen's d, ICC(2,1), Bland-Altman and
one-way ANOVA."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateAnova, DegenerateFit, ZeroPooledSd

LOA_Z = 1.96


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n: int
    # False when y has zero variance and r2 was set to 0 by convention
    r2_defined: bool = True

    def predict(self, x):
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept


class BlandAltman(NamedTuple):
    bias: float
    loa_low: float
    loa_high: float


@dataclass(frozen=True)
class AgreementResult:
    icc: float
    bias: float
    loa_low: float
    loa_high: float


def as_pairs(x, y, min_n):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"paired inputs differ in length: {x.size} vs {y.size}")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} pairs, got {x.size}")
    return x, y


def linear_fit(x, y):
    """Ordinary least squares y = slope*x + intercept."""
    x, y = as_pairs(x, y, 2)
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx <= 0.0:
        raise DegenerateFit("x has zero variance")
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    sst = float(dy @ dy)
    if sst == 0.0:
        return FitResult(slope, intercept, 0.0, x.size, r2_defined=False)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(resid @ resid) / sst
    return FitResult(slope, intercept, min(max(r2, 0.0), 1.0), x.size)


def cohens_d(a, b):
    """Standardised mean difference (mean(b) - mean(a)) / pooled SD."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each group needs at least 2 observations")
    pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    if pooled == 0.0:
        raise ZeroPooledSd("both groups are constant")
    return float((b.mean() - a.mean()) / pooled)


def icc(x, y):
    """ICC(2,1): two-way random effects, absolute agreement, single rater.

    Subjects are rows, the two measurements are raters.
    """
    x, y = as_pairs(x, y, 3)
    data = np.column_stack([x, y])
    n, k = data.shape
    grand = data.mean()
    row_means = data.mean(axis=1)
    col_means = data.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_total = float(((data - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    denom = msr + (k - 1) * mse + k * (msc - mse) / n
    if denom <= 0.0:
        raise DegenerateAnova("no between-subject variance")
    return float((msr - mse) / denom)


def bland_altman(x, y):
    x, y = as_pairs(x, y, 2)
    diff = x - y
    bias = float(diff.mean())
    sd = float(diff.std(ddof=1))
    return BlandAltman(bias, bias - LOA_Z * sd, bias + LOA_Z * sd)


def agreement(x, y):
    ba = bland_altman(x, y)
    return AgreementResult(icc(x, y), ba.bias, ba.loa_low, ba.loa_high)


def anova_oneway(groups):
    """Classic one-way ANOVA.  Returns (F, p)."""
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise DegenerateAnova("need at least two groups")
    if any(g.size < 2 for g in groups):
        raise DegenerateAnova("every group needs at least two observations")
    allv = np.concatenate(groups)
    grand = allv.mean()
    ssb = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    df_b = len(groups) - 1
    df_w = allv.size - len(groups)
    if ssw <= 0.0:
        raise DegenerateAnova("zero within-group variance")
    f = float((ssb / df_b) / (ssw / df_w))
    return f, f_sf(f, df_b, df_w)


# -- F distribution ------------------------------------------------------------

def f_sf(f, df1, df2):
    """Upper tail P(F > f) of the F(df1, df2) distribution."""
    if f <= 0.0:
        return 1.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def betainc(a, b, x):
    """Regularised incomplete beta I_x(a, b) via Lentz's continued fraction."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _beta_cf(a, b, x, tol=1e-15, max_iter=10000):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")
