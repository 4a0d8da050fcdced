"""Statistical battery used by the batch analysis.

Paired-samples t-test, one-sample t-test, Spearman rank correlation,
exact binomial test, pointwise 95% confidence bands, and spike-rate
counting. Everything is pure and deterministic; the only special
function is the regularized incomplete beta, evaluated by continued
fraction to ~1e-14.

p-values are two-tailed throughout. The binomial test uses the exact
two-sided convention: the sum of all outcome probabilities not larger
than the observed outcome's probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class StatsError(ValueError):
    """Degenerate or invalid input to a statistical test."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    dof: float
    p_value: float
    n: int


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int


_BETACF_EPS = 1e-15
_BETACF_FPMIN = 1e-300
_BETACF_MAXIT = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0, x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise StatsError("incomplete beta requires a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, dof: float) -> float:
    """Two-tailed survival P(|T| >= |t|) for Student's t with dof > 0."""
    if dof <= 0.0:
        raise StatsError("degrees of freedom must be positive")
    if t == 0.0:
        return 1.0
    x = dof / (dof + t * t)
    return incomplete_beta(0.5 * dof, 0.5, x)


def student_t_cdf(t: float, dof: float) -> float:
    """CDF of Student's t. Exactly 0.5 at t = 0."""
    if t == 0.0:
        return 0.5
    p2 = student_t_sf2(t, dof)
    return 1.0 - 0.5 * p2 if t > 0.0 else 0.5 * p2


def student_t_ppf(p: float, dof: float) -> float:
    """Quantile of Student's t by bisection on the CDF."""
    if not 0.0 < p < 1.0:
        raise StatsError("quantile probability must be in (0, 1)")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while student_t_cdf(lo, dof) > p:
        lo *= 2.0
        if lo < -1e12:
            raise StatsError("t quantile bracket failed")
    while student_t_cdf(hi, dof) < p:
        hi *= 2.0
        if hi > 1e12:
            raise StatsError("t quantile bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _sample_sd(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def one_sample_t(x: Sequence[float], mu0: float) -> TestResult:
    """t-test of mean(x) against mu0; two-tailed p."""
    n = len(x)
    if n < 2:
        raise StatsError("one-sample t-test needs n >= 2")
    sd = _sample_sd(x)
    if sd == 0.0:
        raise StatsError("one-sample t-test undefined for zero variance")
    t = (_mean(x) - mu0) / (sd / math.sqrt(n))
    return TestResult(t, float(n - 1), student_t_sf2(t, n - 1), n)


def paired_t(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Paired-samples t-test; identical to one_sample_t(x - y, 0)."""
    if len(x) != len(y):
        raise StatsError("paired t-test needs equal-length samples")
    return one_sample_t([a - b for a, b in zip(x, y)], 0.0)


def rank_average_ties(values: Sequence[float]) -> list[float]:
    """Ranks 1..n with average ranks assigned to ties."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Spearman rank correlation with average ranks for ties.

    p-value from the t approximation t = rho * sqrt((n-2)/(1-rho^2)),
    dof = n - 2, two-tailed.
    """
    n = len(x)
    if n != len(y):
        raise StatsError("spearman needs equal-length samples")
    if n < 3:
        raise StatsError("spearman needs n >= 3")
    rx = rank_average_ties(x)
    ry = rank_average_ties(y)
    if min(rx) == max(rx) or min(ry) == max(ry):
        raise StatsError("spearman undefined when one variable is constant")
    # Exact +-1 for identical / reversed rankings, independent of rounding.
    if rx == ry:
        return CorrelationResult(1.0, 0.0, n)
    if rx == [len(ry) + 1.0 - r for r in ry]:
        return CorrelationResult(-1.0, 0.0, n)
    mx, my = _mean(rx), _mean(ry)
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = math.fsum((a - mx) ** 2 for a in rx)
    syy = math.fsum((b - my) ** 2 for b in ry)
    rho = sxy / math.sqrt(sxx * syy)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return CorrelationResult(rho, 0.0, n)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return CorrelationResult(rho, student_t_sf2(t, n - 2), n)


def binomial_test(k: int, n: int, p0: float) -> TestResult:
    """Exact two-sided binomial test of k successes out of n at rate p0.

    Sums the point masses of every outcome whose probability does not
    exceed that of the observed k (log-space accumulation).
    """
    if not 0 <= k <= n:
        raise StatsError("binomial test needs 0 <= k <= n")
    if not 0.0 < p0 < 1.0:
        raise StatsError("binomial test needs p0 in (0, 1)")
    lp = math.log(p0)
    lq = math.log1p(-p0)

    def log_pmf(i: int) -> float:
        return (math.lgamma(n + 1) - math.lgamma(i + 1)
                - math.lgamma(n - i + 1) + i * lp + (n - i) * lq)

    lk = log_pmf(k)
    # Relative tolerance absorbs lgamma rounding when masses are tied.
    cutoff = lk + 1e-7
    terms = sorted(log_pmf(i) for i in range(n + 1) if log_pmf(i) <= cutoff)
    m = terms[-1]
    total = m + math.log(math.fsum(math.exp(t - m) for t in terms))
    p = min(1.0, math.exp(total))
    return TestResult(float(k), float(n), p, n)


def mean_ci95(
    trials: Sequence[Sequence[float]],
) -> tuple[list[float], list[float], list[float]]:
    """Pointwise mean and 95% band (mean +- t_{0.975,n-1} * SEM) over
    aligned, equal-length trial series."""
    n = len(trials)
    if n < 2:
        raise StatsError("confidence band needs >= 2 trials")
    length = len(trials[0])
    if any(len(t) != length for t in trials):
        raise StatsError("confidence band needs aligned series")
    tq = student_t_ppf(0.975, n - 1)
    mean: list[float] = []
    lo: list[float] = []
    hi: list[float] = []
    for j in range(length):
        col = [t[j] for t in trials]
        m = _mean(col)
        half = tq * _sample_sd(col) / math.sqrt(n)
        mean.append(m)
        lo.append(m - half)
        hi.append(m + half)
    return mean, lo, hi


def spike_rate(spike_times_s: Sequence[float],
               window_s: tuple[float, float]) -> float:
    """Spike count divided by window duration, in Hz."""
    t0, t1 = window_s
    if t1 <= t0:
        raise StatsError("spike-rate window must have positive length")
    count = sum(1 for t in spike_times_s if t0 <= t < t1)
    return count / (t1 - t0)


def ks_uniform_distance(pvalues: Sequence[float]) -> float:
    """Kolmogorov-Smirnov sup distance of a sample from Uniform(0, 1)."""
    if not pvalues:
        raise StatsError("empty sample")
    xs = sorted(pvalues)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs, start=1):
        d = max(d, i / n - x, x - (i - 1) / n)
    return d
