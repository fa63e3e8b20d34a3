"""Granger-causality and unit-root testing for allocation series.

Regressions are fit by ordinary least squares on first-differenced series.
The Granger F-test compares a restricted autoregression of the effect against
one augmented with the candidate cause's lags; p-values come from the F
distribution evaluated through a from-scratch regularized incomplete beta
(continued fraction), so the statistics path has no external dependency.

Pure computation throughout; grid buckets are independent and may be
evaluated concurrently by callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Allocation, TimeSeries

# Statistical-significance buckets, strongest first. Boundaries are closed on
# the small side: p = 0.05 classifies as "weak".
CLASSIFICATION_THRESHOLDS = (
    ("strong", 0.001),
    ("moderate", 0.01),
    ("weak", 0.05),
    ("marginal", 0.1),
)

# Asymptotic Dickey-Fuller critical values, constant-only regression.
ADF_CRITICAL_VALUES = ((-3.43, "<=0.01"), (-2.86, "<=0.05"), (-2.57, "<=0.1"))

_BETA_CF_TOL = 1e-10
_BETA_CF_MAX_ITER = 500


@dataclass(frozen=True)
class RegressionFit:
    coefficients: tuple[float, ...]
    rss: float
    n_obs: int
    n_params: int


@dataclass(frozen=True)
class GrangerResult:
    f_stat: float
    p_value: float
    classification: str
    direction: str


def first_difference(series: TimeSeries) -> TimeSeries:
    """Consecutive differences, stamped at the later timestamp."""
    if len(series) < 2:
        raise ValueError("need at least 2 points to difference")
    return TimeSeries(series.taus[1:], np.diff(series.values))


def ols_fit(y: np.ndarray, design: np.ndarray) -> RegressionFit:
    """Least squares via the normal equations, with a rank check."""
    y = np.asarray(y, dtype=np.float64)
    design = np.asarray(design, dtype=np.float64)
    n_obs, n_params = design.shape
    if n_obs <= n_params:
        raise ValueError("need more observations than parameters")
    if np.linalg.matrix_rank(design) < n_params:
        raise ValueError("design matrix is rank deficient")
    gram = design.T @ design
    beta = np.linalg.solve(gram, design.T @ y)
    residuals = y - design @ beta
    return RegressionFit(coefficients=tuple(beta.tolist()),
                         rss=float(residuals @ residuals),
                         n_obs=n_obs, n_params=n_params)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_CF_MAX_ITER + 1):
        m2 = 2 * m
        coeff = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coeff = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_CF_TOL:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0 and b > 0):
        raise ValueError("shape parameters must be > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def f_survival(f_stat: float, df_num: int, df_den: int) -> float:
    """P(F >= f_stat) for the F(df_num, df_den) distribution."""
    if f_stat <= 0:
        return 1.0
    x = df_den / (df_den + df_num * f_stat)
    return regularized_incomplete_beta(df_den / 2.0, df_num / 2.0, x)


def classify_p_value(p: float) -> str:
    for label, threshold in CLASSIFICATION_THRESHOLDS:
        if p <= threshold:
            return label
    return "absent"


def _lag_matrix(values: np.ndarray, lag: int) -> np.ndarray:
    """Columns of values lagged 1..lag, aligned with values[lag:]."""
    return np.column_stack([values[lag - k:-k] for k in range(1, lag + 1)])


def granger_test(cause: TimeSeries, effect: TimeSeries, lag: int = 1,
                 direction: str = "") -> GrangerResult:
    """Does the cause series' past improve prediction of the effect series?

    Both inputs should already be differenced (stationary). The restricted
    model regresses the effect on its own lags plus an intercept; the
    unrestricted model adds the cause's lags.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if not np.array_equal(cause.taus, effect.taus):
        raise ValueError("cause and effect series must share timestamps")
    n_total = len(effect)
    if n_total <= 3 + lag:
        raise ValueError("insufficient data for the requested lag")
    y = effect.values[lag:]
    intercept = np.ones((len(y), 1))
    own_lags = _lag_matrix(effect.values, lag)
    cause_lags = _lag_matrix(cause.values, lag)

    restricted = ols_fit(y, np.hstack([intercept, own_lags]))
    unrestricted = ols_fit(y, np.hstack([intercept, own_lags, cause_lags]))

    df_num = lag
    df_den = unrestricted.n_obs - unrestricted.n_params
    if unrestricted.rss <= 0.0:
        # Perfect fit: the conventional limit is an unbounded improvement.
        f_stat = math.inf
        p_value = 0.0
    else:
        f_stat = ((restricted.rss - unrestricted.rss) / df_num) / (unrestricted.rss / df_den)
        f_stat = max(f_stat, 0.0)
        p_value = f_survival(f_stat, df_num, df_den)
    return GrangerResult(f_stat=f_stat, p_value=p_value,
                         classification=classify_p_value(p_value),
                         direction=direction)


@dataclass(frozen=True)
class GrangerGridRow:
    bucket_start: float
    price_to_security: GrangerResult | None
    security_to_price: GrangerResult | None
    status: str  # "ok" or "insufficient data"


def granger_grid(w_actual: Sequence[tuple[float, Allocation]],
                 w_eq: Sequence[tuple[float, Allocation]],
                 bucket_seconds: float, lag: int = 1) -> list[GrangerGridRow]:
    """Both directional tests per time bucket on differenced w_A components.

    The equilibrium series is the price proxy; buckets are fixed calendar
    intervals of ``bucket_seconds`` aligned to the epoch.
    """
    actual_taus = np.array([tau for tau, _ in w_actual])
    eq_taus = np.array([tau for tau, _ in w_eq])
    if not np.array_equal(actual_taus, eq_taus):
        raise ValueError("actual and equilibrium series must share timestamps")
    actual_vals = np.array([a.w_a for _, a in w_actual])
    eq_vals = np.array([a.w_a for _, a in w_eq])

    rows: list[GrangerGridRow] = []
    buckets = np.floor(actual_taus / bucket_seconds)
    for bucket in sorted(set(buckets.tolist())):
        mask = buckets == bucket
        start = bucket * bucket_seconds
        taus = actual_taus[mask]
        if mask.sum() <= 5 + 2 * lag:
            rows.append(GrangerGridRow(start, None, None, "insufficient data"))
            continue
        actual_diff = first_difference(TimeSeries(taus, actual_vals[mask]))
        eq_diff = first_difference(TimeSeries(taus, eq_vals[mask]))
        try:
            price_to_security = granger_test(eq_diff, actual_diff, lag,
                                             direction="price->security")
            security_to_price = granger_test(actual_diff, eq_diff, lag,
                                             direction="security->price")
        except ValueError as exc:
            rows.append(GrangerGridRow(start, None, None,
                                       f"insufficient data ({exc})"))
            continue
        rows.append(GrangerGridRow(start, price_to_security,
                                   security_to_price, "ok"))
    return rows


def adf_test(series: TimeSeries, lags: int = 1) -> tuple[float, str]:
    """Augmented Dickey-Fuller unit-root test, constant-only regression.

    Returns the t-statistic on the lagged level and the p-value bucket from
    the asymptotic critical values (">0.1", "<=0.1", "<=0.05", "<=0.01").
    Rejection (a very negative statistic) means the series is stationary.
    """
    if lags < 0:
        raise ValueError("lags must be >= 0")
    if len(series) <= 10 + lags:
        raise ValueError("insufficient data for the ADF regression")
    values = series.values
    dy = np.diff(values)
    # Rows: t runs over the usable range after losing `lags` difference lags.
    y = dy[lags:]
    level = values[lags:-1]
    columns = [np.ones_like(y), level]
    for k in range(1, lags + 1):
        columns.append(dy[lags - k:-k])
    design = np.column_stack(columns)
    fit = ols_fit(y, design)
    sigma2 = fit.rss / (fit.n_obs - fit.n_params)
    gram_inv = np.linalg.inv(design.T @ design)
    se_level = math.sqrt(sigma2 * gram_inv[1, 1])
    statistic = fit.coefficients[1] / se_level
    for critical, bucket in ADF_CRITICAL_VALUES:
        if statistic <= critical:
            return statistic, bucket
    return statistic, ">0.1"
