"""Two-sided nonparametric tests with fixed, reproducible conventions.

Mann-Whitney U and Wilcoxon signed-rank, midrank ties throughout. Small
samples take an exact enumeration branch (subset enumeration / sign DP);
larger ones a tie-corrected normal approximation with continuity correction
0.5. The switchover sizes (pooled 16 for Mann-Whitney, 20 nonzero pairs for
Wilcoxon) are part of the contract so results never drift.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateSampleError, InputError

MANN_WHITNEY_EXACT_MAX = 16
WILCOXON_EXACT_MAX = 20

_EPS = 1e-9


class Method(enum.Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: Method
    n1: int
    n2: int

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method.value,
            "n1": self.n1,
            "n2": self.n2,
        }


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a, b, alternative: str = "two_sided") -> TestResult:
    """Two-sided Mann-Whitney U test.

    Statistic is U = min(U1, U2) with midranks. Exact branch (pooled size
    <= 16): two-sided p = min(1, 2 * P(U1 <= U)) with U1 enumerated over all
    C(n, n1) group assignments of the pooled values. Normal branch:
    p = min(1, 2 * Phi((U + 0.5 - n1*n2/2) / sigma)) with tie-corrected
    sigma; all-tied samples (sigma = 0) give p = 1.
    """
    if alternative != "two_sided":
        raise InputError(f"only two_sided is supported, got {alternative!r}")
    a = np.asarray(list(a), dtype=np.float64)
    b = np.asarray(list(b), dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise InputError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    u = min(u1, u2)

    n = n1 + n2
    if n <= MANN_WHITNEY_EXACT_MAX:
        total = math.comb(n, n1)
        hits = 0
        for idx in combinations(range(n), n1):
            u1_perm = sum(ranks[i] for i in idx) - n1 * (n1 + 1) / 2.0
            if u1_perm <= u + _EPS:
                hits += 1
        p = min(1.0, 2.0 * hits / total)
        return TestResult(u, p, Method.EXACT, n1, n2)

    tie = _tie_term(pooled)
    var = (n1 * n2 / 12.0) * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return TestResult(u, 1.0, Method.NORMAL_APPROX, n1, n2)
    z = (u + 0.5 - n1 * n2 / 2.0) / math.sqrt(var)
    p = min(1.0, 2.0 * (1.0 - _normal_sf(z)))
    return TestResult(u, p, Method.NORMAL_APPROX, n1, n2)


def wilcoxon_signed_rank(x, y=None, alternative: str = "two_sided") -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples (or differences).

    Zero differences are dropped. Statistic is W = min(W+, W-) over
    midranked |d|. Exact branch (<= 20 nonzero pairs): sign-assignment
    distribution computed by dynamic programming over doubled ranks,
    p = min(1, 2 * P(W+ <= W)). Normal branch: tie-corrected variance,
    continuity correction 0.5.
    """
    if alternative != "two_sided":
        raise InputError(f"only two_sided is supported, got {alternative!r}")
    x = np.asarray(list(x), dtype=np.float64)
    if y is None:
        d = x
    else:
        y = np.asarray(list(y), dtype=np.float64)
        if len(x) != len(y):
            raise InputError(f"paired samples differ in length: {len(x)} vs {len(y)}")
        d = x - y
    n_pairs = len(d)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateSampleError("all differences are zero")

    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if n <= WILCOXON_EXACT_MAX:
        doubled = np.rint(2 * ranks).astype(np.int64)
        max_sum = int(doubled.sum())
        counts = np.zeros(max_sum + 1, dtype=np.float64)
        counts[0] = 1.0
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: max_sum + 1 - r]
            counts = counts + shifted
        cutoff = int(math.floor(2 * w + _EPS))
        p = min(1.0, 2.0 * counts[: cutoff + 1].sum() / (2.0**n))
        return TestResult(w, p, Method.EXACT, n_pairs, n)

    tie = _tie_term(np.abs(d))
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie / 48.0
    if var <= 0:
        return TestResult(w, 1.0, Method.NORMAL_APPROX, n_pairs, n)
    z = (w + 0.5 - mean) / math.sqrt(var)
    p = min(1.0, 2.0 * (1.0 - _normal_sf(z)))
    return TestResult(w, p, Method.NORMAL_APPROX, n_pairs, n)
