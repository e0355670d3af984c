"""Running moments with pooled merging, and confidence half-widths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass
class RunningStats:
    """Count, mean and centred sum of squares (Welford / Chan et al.)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def push_array(self, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        if xs.size:
            self.merge(RunningStats(int(xs.size), float(xs.mean()),
                                    float(((xs - xs.mean()) ** 2).sum())))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return self
        n = self.n + other.n
        d = other.mean - self.mean
        self.mean += d * other.n / n
        self.m2 += other.m2 + d * d * self.n * other.n / n
        self.n = n
        return self

    @classmethod
    def from_moments(cls, n: int, s1: float, s2: float) -> "RunningStats":
        """Build from a count, a sum and a sum of squares."""
        if n == 0:
            return cls()
        mean = s1 / n
        return cls(n, mean, max(s2 - n * mean * mean, 0.0))

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else float("nan")

    @property
    def se(self) -> float:
        """Standard error of the mean."""
        return math.sqrt(self.variance / self.n) if self.n > 1 else float("nan")


def t_half_width(values, level: float = 0.95) -> float:
    """Half-width of the t confidence interval of the mean of ``values``."""
    values = np.asarray(values, dtype=float)
    k = values.size
    if k < 2:
        return float("nan")
    sd = float(values.std(ddof=1))
    return float(_st.t.ppf(0.5 + level / 2, k - 1)) * sd / math.sqrt(k)


def z_score(a: float, se_a: float, b: float, se_b: float = 0.0) -> float:
    """|a - b| in units of the combined standard error."""
    s = math.hypot(se_a, se_b)
    if s == 0.0:
        return 0.0 if a == b else math.inf
    return abs(a - b) / s
