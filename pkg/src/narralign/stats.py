"""Self-contained statistical primitives: F1, accuracy, Spearman, AUC,
Welch's t, Cohen's d, and longest increasing subsequence.

Everything here is implemented directly (no scipy at runtime) so the test
suite can cross-check against independent reference implementations.
p-values use the Student t distribution via the regularized incomplete beta
function, evaluated with the standard continued-fraction expansion.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class PairedSamples:
    """Two equal-length numeric samples, validated on construction."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ValueError("paired samples must have equal length")
        if len(self.xs) < 2:
            raise ValueError("paired samples need at least 2 points")
        for v in (*self.xs, *self.ys):
            if not math.isfinite(v):
                raise ValueError("paired samples must be finite")


def f1_score(predicted: Sequence[bool], gold: Sequence[bool]) -> dict[str, float]:
    """Precision/recall/F1 with "retained" as the positive class.

    Zero-division cases (no predicted positives, no gold positives, or
    P+R = 0) yield 0.0 for the affected quantity.
    """
    if len(predicted) != len(gold):
        raise ValueError("predicted and gold must have equal length")
    tp = sum(1 for p, g in zip(predicted, gold) if p and g)
    fp = sum(1 for p, g in zip(predicted, gold) if p and not g)
    fn = sum(1 for p, g in zip(predicted, gold) if not p and g)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def alignment_accuracy(assigned: Mapping[int, int], gold: Mapping[int, int]) -> float:
    """Percentage of gold scenes whose assigned chapter matches.

    Scenes absent from `assigned` count as incorrect.
    """
    if not gold:
        raise ValueError("gold assignment is empty")
    correct = sum(1 for s, c in gold.items() if assigned.get(s) == c)
    return 100.0 * correct / len(gold)


def _ranks(values: Sequence[float]) -> list[float]:
    """Average ranks (1-based), ties share the mean of their rank span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        return float("nan")
    return sxy / math.sqrt(sxx * syy)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student t with df dof."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    return _betainc(df / 2.0, 0.5, df / (df + t * t))


def spearman_rho(xs, ys=None) -> dict[str, float]:
    """Spearman rank correlation with average-rank ties.

    p-value uses the t approximation with n-2 degrees of freedom. Accepts a
    PairedSamples or two sequences.
    """
    if ys is None:
        if not isinstance(xs, PairedSamples):
            raise TypeError("expected PairedSamples or two sequences")
        xs, ys = xs.xs, xs.ys
    else:
        PairedSamples(tuple(float(v) for v in xs), tuple(float(v) for v in ys))
    n = len(xs)
    rho = _pearson(_ranks(xs), _ranks(ys))
    if math.isnan(rho):
        return {"rho": rho, "p_value": float("nan")}
    if abs(rho) >= 1.0:
        return {"rho": rho, "p_value": 0.0}
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return {"rho": rho, "p_value": student_t_sf2(t, n - 2)}


def auc_roc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """ROC AUC in the Mann-Whitney formulation; tied scores contribute 1/2."""
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    n_pos = sum(1 for v in labels if v)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    ranks = _ranks(scores)
    rank_sum = sum(r for r, lab in zip(ranks, labels) if lab)
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def welch_t_test(xs: Sequence[float], ys: Sequence[float]) -> dict[str, float]:
    """Welch's unequal-variance t test, two-sided, plus pooled-SD Cohen's d."""
    nx, ny = len(xs), len(ys)
    if nx < 2 or ny < 2:
        raise ValueError("each sample needs at least 2 points")
    mx = sum(xs) / nx
    my = sum(ys) / ny
    vx = sum((v - mx) ** 2 for v in xs) / (nx - 1)
    vy = sum((v - my) ** 2 for v in ys) / (ny - 1)
    diff = mx - my
    se2 = vx / nx + vy / ny
    pooled = ((nx - 1) * vx + (ny - 1) * vy) / (nx + ny - 2)
    d = diff / math.sqrt(pooled) if pooled > 0 else 0.0
    if diff == 0.0:
        return {"t": 0.0, "p_value": 1.0, "cohens_d": d}
    if se2 == 0.0:
        return {"t": math.copysign(math.inf, diff), "p_value": 0.0, "cohens_d": d}
    t = diff / math.sqrt(se2)
    denom = (vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1)
    # denom can underflow to 0 for near-degenerate variances
    df = se2 * se2 / denom if denom > 0.0 else float(nx + ny - 2)
    return {"t": t, "p_value": student_t_sf2(t, df), "cohens_d": d}


def lis_length(seq: Sequence[int]) -> int:
    """Length of the longest strictly increasing subsequence (patience method)."""
    tails: list[int] = []
    for v in seq:
        pos = bisect_left(tails, v)
        if pos == len(tails):
            tails.append(v)
        else:
            tails[pos] = v
    return len(tails)
