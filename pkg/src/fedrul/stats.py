"""Regression metrics, Student-t tests and confidence intervals, and tabular reports.

The t distribution is evaluated through the regularized incomplete beta
function (continued fraction, modified Lentz); quantiles are found by
bisection on the CDF. Sample statistics here use the Bessel-corrected
standard deviation, unlike z-scoring in preprocessing.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10000


# ---------------------------------------------------------------- metrics


@dataclass
class MetricReport:
    n: int
    mse: float
    rmse: float
    mae: float
    r_squared: Optional[float]  # None when the target has zero variance


def compute_metrics(pred: Sequence[float], target: Sequence[float]) -> MetricReport:
    y_hat = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if y_hat.shape != y.shape or y.ndim != 1:
        raise ValueError("pred and target must be equal-length vectors")
    n = y.size
    if n == 0:
        raise ValueError("empty vectors")
    err = y_hat - y
    sse = float(err @ err)
    mse = sse / n
    mae = float(np.abs(err).sum()) / n
    dev = y.mean() - y
    sst = float(dev @ dev)
    r2 = None if sst == 0.0 else 1.0 - sse / sst
    return MetricReport(n=n, mse=mse, rmse=math.sqrt(mse), mae=mae, r_squared=r2)


# ---------------------------------------------------------------- distributions


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, x_complement: Optional[float] = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``x_complement`` (= 1 - x) may be passed when it is known more precisely
    than the subtraction would give.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    y = 1.0 - x if x_complement is None else x_complement
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, y) / b


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF. Symmetric by construction: t_cdf(-t) == 1 - t_cdf(t)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    t2 = t * t
    x = df / (df + t2)
    tail = 0.5 * betainc(df / 2.0, 0.5, x, t2 / (df + t2))
    return tail if t < 0 else 1.0 - tail


def t_sf(t: float, df: float) -> float:
    return t_cdf(-t, df)


def t_ppf(p: float, df: float, tol: float = 1e-10) -> float:
    """Quantile of the t distribution by bisection on :func:`t_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_ppf(1.0 - p, df, tol)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise ArithmeticError("quantile bracket overflow")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- tests


class NullHypothesis(enum.Enum):
    EQUAL = "eq"  # H0: mu == mu0, two-sided
    AT_MOST = "le"  # H0: mu <= mu0, reject for large t
    AT_LEAST = "ge"  # H0: mu >= mu0, reject for small t

    def describe(self, mu0: float) -> str:
        sym = {"eq": "=", "le": "<=", "ge": ">="}[self.value]
        return f"mu {sym} {mu0:g}"


@dataclass
class TTestResult:
    null: NullHypothesis
    mu0: float
    t: float
    df: int
    p_value: float
    alpha: float
    reject: bool
    n: int = 0
    mean: float = float("nan")
    study: str = ""
    group: str = ""


@dataclass
class ConfidenceInterval:
    level: float
    lower: float
    upper: float
    mean: float = float("nan")
    group: str = ""


def _sample_stats(sample: Sequence[float]) -> Tuple[int, float, float]:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError(f"need n >= 2 observations, got {x.size}")
    return x.size, float(x.mean()), float(x.std(ddof=1))


def t_test_one_sample(
    sample: Sequence[float], mu0: float, kind: NullHypothesis, alpha: float
) -> TTestResult:
    """One-sample t test of ``kind`` against ``mu0``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    kind = NullHypothesis(kind)
    n, mean, s = _sample_stats(sample)
    if s == 0.0:
        raise ValueError("sample standard deviation is zero")
    t = (mean - mu0) / (s / math.sqrt(n))
    df = n - 1
    if kind is NullHypothesis.EQUAL:
        p = min(1.0, 2.0 * t_cdf(-abs(t), df))
    elif kind is NullHypothesis.AT_MOST:
        p = t_sf(t, df)
    else:
        p = t_cdf(t, df)
    return TTestResult(kind, mu0, t, df, p, alpha, p < alpha, n, mean)


def confidence_interval(sample: Sequence[float], level: float = 0.95) -> ConfidenceInterval:
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    n, mean, s = _sample_stats(sample)
    half = t_ppf((1.0 + level) / 2.0, n - 1) * s / math.sqrt(n)
    return ConfidenceInterval(level, mean - half, mean + half, mean)


def compare_models(
    per_run_errors: Dict[str, Sequence[float]],
    baselines: Sequence[Tuple[str, float]],
    alpha: float,
) -> List[TTestResult]:
    """Both one-sided tests of every error group against every baseline mean.

    Results come in (group, baseline) order, H0 mu <= mu0 first.
    """
    out = []
    for group, errors in per_run_errors.items():
        for study, mu0 in baselines:
            for kind in (NullHypothesis.AT_MOST, NullHypothesis.AT_LEAST):
                r = t_test_one_sample(errors, mu0, kind, alpha)
                r.study = str(study)
                r.group = group
                out.append(r)
    return out


# ---------------------------------------------------------------- reports


def render_table(headers: List[str], rows: List[List[str]], fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(headers)
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def comparison_table(results: List[TTestResult], fmt: str = "text") -> str:
    """One row per (group, study): the mu <= mu0 test plus its mirror."""
    headers = [
        "Group", "Study", "Null Hyp. (H0)", "t statistic", "df", "p value", "Reject H0?",
        "p (H0: mu >= mu0)", "Reject (mu >= mu0)?", "p (two-sided)",
    ]
    rows = []
    paired: Dict[Tuple[str, str, float], Dict[NullHypothesis, TTestResult]] = {}
    for r in results:
        paired.setdefault((r.group, r.study, r.mu0), {})[r.null] = r
    for (group, study, mu0), pair in paired.items():
        le = pair.get(NullHypothesis.AT_MOST)
        ge = pair.get(NullHypothesis.AT_LEAST)
        base = le or ge
        two = min(1.0, 2.0 * min(t_cdf(base.t, base.df), t_sf(base.t, base.df)))
        rows.append([
            group, study, (le or base).null.describe(mu0), f"{base.t:.2f}", str(base.df),
            f"{le.p_value:.8f}" if le else "", ("Yes" if le.reject else "No") if le else "",
            f"{ge.p_value:.8f}" if ge else "", ("Yes" if ge.reject else "No") if ge else "",
            f"{two:.8g}",
        ])
    return render_table(headers, rows, fmt)


def interval_table(intervals: List[ConfidenceInterval], fmt: str = "text") -> str:
    headers = ["Agent Name", "Lower Bound", "Upper Bound"]
    rows = [[ci.group, f"{ci.lower:.2f}", f"{ci.upper:.2f}"] for ci in intervals]
    return render_table(headers, rows, fmt)


def performance_table(rows: List[Dict[str, float]], fmt: str = "text") -> str:
    """Per-agent validation/test errors; each row dict has keys
    agent, validation_rmse, test_rmse, test_mae."""
    headers = ["Agent", "Validation RMSE", "Test RMSE", "Test MAE"]
    body = [
        [r["agent"], f"{r['validation_rmse']:.4f}", f"{r['test_rmse']:.4f}", f"{r['test_mae']:.4f}"]
        for r in rows
    ]
    return render_table(headers, body, fmt)
