"""Paired significance tests and effect sizes for method comparisons.

McNemar's test (exact below 25 discordant pairs, chi-squared with
continuity correction above), Cohen's h for proportions, the paired t-test,
and Cohen's d in the paired-differences convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from scipy.special import stdtr

from .errors import DomainError, ZeroVariance

EXACT_THRESHOLD = 25  # discordant pairs below this use the exact binomial


class McNemarMethod(Enum):
    EXACT_BINOMIAL = "exact_binomial"
    CHI_SQUARED_CC = "chi_squared_cc"


@dataclass(frozen=True)
class McNemarResult:
    b: int
    c: int
    statistic: float
    p_value: float
    method: McNemarMethod


def _exact_binomial_p(b: int, c: int) -> float:
    n = b + c
    k = min(b, c)
    tail = sum(math.comb(n, i) for i in range(k + 1)) * 0.5**n
    return min(1.0, 2.0 * tail)


def mcnemar(pairs: list[tuple[bool, bool]]) -> McNemarResult:
    """Paired-binary test on discordant counts b (a wins) and c (b wins).

    No discordant pairs yields p = 1.0 by convention. The p-value is
    invariant under swapping the two methods.
    """
    b = sum(1 for a_ok, b_ok in pairs if a_ok and not b_ok)
    c = sum(1 for a_ok, b_ok in pairs if not a_ok and b_ok)
    n = b + c
    if n == 0:
        return McNemarResult(0, 0, 0.0, 1.0, McNemarMethod.EXACT_BINOMIAL)
    if n < EXACT_THRESHOLD:
        return McNemarResult(
            b, c, float(min(b, c)), _exact_binomial_p(b, c), McNemarMethod.EXACT_BINOMIAL
        )
    statistic = (abs(b - c) - 1) ** 2 / n
    p_value = math.erfc(math.sqrt(statistic / 2.0))  # chi-squared(1) upper tail
    return McNemarResult(b, c, statistic, p_value, McNemarMethod.CHI_SQUARED_CC)


def cohens_h(p1: float, p2: float) -> float:
    """Effect size for two proportions: 2*arcsin(sqrt(p1)) - 2*arcsin(sqrt(p2))."""
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"proportion {p} outside [0, 1]")
    return 2.0 * math.asin(math.sqrt(p1)) - 2.0 * math.asin(math.sqrt(p2))


@dataclass(frozen=True)
class PairedTResult:
    t: float
    df: int
    p_value: float
    degenerate: bool = False


def _sample_sd(diffs: list[float], mean: float) -> float:
    n = len(diffs)
    return math.sqrt(sum((d - mean) ** 2 for d in diffs) / (n - 1))


def paired_t(diffs: list[float]) -> PairedTResult:
    """Two-sided paired t-test on per-task differences.

    Zero-variance differences are reported as degenerate (p = 1 when the
    mean is zero, else p = 0) instead of raising.
    """
    n = len(diffs)
    if n < 2:
        raise ValueError("paired_t needs at least two differences")
    mean = sum(diffs) / n
    sd = _sample_sd(diffs, mean)
    if sd == 0.0:
        p = 1.0 if mean == 0.0 else 0.0
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return PairedTResult(t=t, df=n - 1, p_value=p, degenerate=True)
    t = mean * math.sqrt(n) / sd
    df = n - 1
    p_value = 2.0 * float(stdtr(df, -abs(t)))
    return PairedTResult(t=t, df=df, p_value=p_value)


def cohens_d(diffs: list[float]) -> float:
    """Paired-differences effect size: mean(d) / sd(d) with sample sd."""
    n = len(diffs)
    if n < 2:
        raise ValueError("cohens_d needs at least two differences")
    mean = sum(diffs) / n
    sd = _sample_sd(diffs, mean)
    if sd == 0.0:
        raise ZeroVariance("differences have zero variance")
    return mean / sd
