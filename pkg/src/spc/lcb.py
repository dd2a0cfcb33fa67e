"""Lower confidence bound on mean runtime from censored observations.

The bound is the expectation of the empirical survival function after each
level ``p`` has been shrunk to ``beta(p, r, t) <= p``.  Because the empirical
CDF is a step function, the integral reduces to a sum over the sorted
observations.

Two evaluation routes are provided:

* :func:`lcb` sums the step function directly, one segment per observation.
* :func:`lcb_profile` / :func:`lcb_from_profiles` split that sum into the part
  that does not depend on ``t`` (one partial sum per level ``k``) and the
  per-level scale factors ``1/(1 + epsilon(k, r, t))``.  The scheduler uses
  this form so that re-evaluating all bounds at a new iteration costs
  ``O(log r)`` per configuration instead of ``O(r)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

#: Number of level columns in a profile.  Levels are ``floor(log2(r / c))``
#: for counts ``1 <= c <= r``, so 64 columns cover any realistic ``r``.
NUM_LEVELS = 64

_LEVELS = np.arange(NUM_LEVELS, dtype=float)
_LEVELS[0] = 1.0  # column 0 is never populated; keeps ln(k t) finite
_NINE_TWO_POW_K = 9.0 * np.exp2(np.arange(NUM_LEVELS, dtype=float))


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted multiset of capped runtimes, one per active instance."""

    values: np.ndarray

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=float))
        if values.ndim != 1:
            raise ValueError("EmpiricalCdf expects a one-dimensional sample")
        if values.size and values[0] < 0:
            raise ValueError("runtimes must be non-negative")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "EmpiricalCdf":
        return cls(np.fromiter(values, dtype=float))

    @property
    def r(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.r


@dataclass(frozen=True)
class LcbValue:
    bound: float
    r: int
    t: int


def _clamp_t(t: int) -> int:
    return max(int(t), 2)


def epsilon(k: int, r: int, t: int) -> float:
    """Relative error allowance ``sqrt(9 * 2**k * ln(k t) / r)``.

    Args:
        k: level, ``k >= 1``.
        r: number of samples, ``r >= 1``.
        t: scheduler iteration; callers clamp to ``t >= 2``.

    Raises:
        ValueError: if ``k * t < 1`` or ``r < 1``.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if k * t < 1:
        raise ValueError(f"epsilon undefined for k*t = {k * t}")
    return math.sqrt(9.0 * 2.0**k * math.log(k * t) / r)


def level_of(p: float) -> int:
    """``max(1, floor(log2(1/p)))`` for ``0 < p <= 1``."""
    return max(1, math.floor(math.log2(1.0 / p)))


def beta(p: float, r: int, t: int) -> float:
    """Shrink a survival probability ``p`` toward zero.

    Returns ``p / (1 + eps)`` when ``eps = epsilon(k, r, t) <= 1/2`` for the
    level ``k`` of ``p``, and ``0`` otherwise.  The level is clamped to at
    least 1 and ``t`` to at least 2, both of which only make the result
    smaller.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    eps = epsilon(level_of(p), r, _clamp_t(t))
    if eps <= 0.5:
        return p / (1.0 + eps)
    return 0.0


def capped_mean(cdf: EmpiricalCdf) -> float:
    if cdf.r == 0:
        raise ValueError("capped_mean of an empty sample")
    return float(np.mean(cdf.values))


def lcb(cdf: EmpiricalCdf, t: int, kappa0: float) -> LcbValue:
    """Lower confidence bound on the mean runtime, floored at ``kappa0``.

    With ``v_0 = 0`` and sorted values ``v_1 <= ... <= v_r`` this is
    ``max(kappa0, sum_m (v_{m+1} - v_m) * beta((r - m) / r, r, t))``.
    """
    r = cdf.r
    if r == 0:
        raise ValueError("lcb of an empty sample; use kappa0 directly")
    t = _clamp_t(t)
    widths = np.diff(cdf.values, prepend=0.0)
    total = 0.0
    for m in range(r):
        width = widths[m]
        if width == 0.0:
            continue
        total += width * beta((r - m) / r, r, t)
    return LcbValue(bound=max(float(kappa0), total), r=r, t=t)


def lcb_profile(sorted_values: Union[np.ndarray, list]) -> np.ndarray:
    """Per-level partial sums ``sum width * p`` of the survival integral.

    ``sorted_values`` must be ascending.  Entry ``k`` collects the segments
    whose survival probability ``p = c / r`` has level ``k``.  The result is
    independent of the iteration counter.

    With ``u_c`` the ``c``-th largest value (``u_{r+1} = 0``), the counts of
    level ``k`` form a range ``a..b`` and summation by parts gives
    ``r * S_k = sum_{c=a}^{b} u_c + (a - 1) u_a - b u_{b+1}``.  Levels above
    1 only touch the top quarter of the ranks, so one cumulative sum over
    that quarter plus the grand total is enough.
    """
    v = np.asarray(sorted_values, dtype=float)
    r = v.size
    profile = np.zeros(NUM_LEVELS)
    if r == 0:
        return profile
    desc = v[::-1]
    top = r >> 2
    head = np.zeros(top + 1)  # head[c] = sum of the c largest values
    np.cumsum(desc[:top], out=head[1:])

    def u(c):
        return float(desc[c - 1]) if c <= r else 0.0

    # level 1 also absorbs level 0 (p > 1/2): counts top+1 .. r
    profile[1] = (float(v.sum()) - head[top] + top * u(top + 1)) / r
    k = 2
    while r >> k:
        a, b = (r >> (k + 1)) + 1, r >> k
        if a <= b:
            profile[k] = (head[b] - head[a - 1] + (a - 1) * u(a) - b * u(b + 1)) / r
        k += 1
    return profile


def _lcb_profile_reference(sorted_values) -> np.ndarray:
    """Segment-by-segment version of :func:`lcb_profile`, kept for testing."""
    v = np.asarray(sorted_values, dtype=float)
    r = v.size
    profile = np.zeros(NUM_LEVELS)
    if r == 0:
        return profile
    widths = np.diff(v, prepend=0.0)
    counts = np.arange(r, 0, -1)
    # floor(log2(r / c)) == floor(log2(r // c)), exact through frexp
    levels = np.frexp((r // counts).astype(float))[1] - 1
    np.maximum(levels, 1, out=levels)
    np.add.at(profile, levels, widths * (counts / r))
    return profile


def lcb_from_profiles(profiles: np.ndarray, r, t: int, kappa0: float) -> np.ndarray:
    """Evaluate bounds for many profiles at once.

    Args:
        profiles: array of shape ``(n, NUM_LEVELS)`` from :func:`lcb_profile`.
        r: sample counts, shape ``(n,)``; rows with ``r == 0`` get ``kappa0``.
        t: scheduler iteration (clamped to >= 2).
        kappa0: floor.

    Returns:
        Array of shape ``(n,)``.
    """
    profiles = np.atleast_2d(profiles)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = _clamp_t(t)
    out = np.full(r.shape, float(kappa0))
    live = r > 0
    if not live.any():
        return out
    coef = _NINE_TWO_POW_K * np.log(_LEVELS * t)
    with np.errstate(divide="ignore"):
        eps = np.sqrt(coef[None, :] / r[live, None])
    terms = np.where(eps <= 0.5, profiles[live] / (1.0 + eps), 0.0)
    out[live] = np.maximum(float(kappa0), terms.sum(axis=1))
    return out


def min_samples_for_nontrivial(t: int) -> float:
    """Smallest ``r`` at which any level can pass the ``eps <= 1/2`` test.

    Level 1 has the smallest error, and ``epsilon(1, r, t) <= 1/2`` iff
    ``r >= 72 ln t``.  Below this every bound equals ``kappa0``.
    """
    return 72.0 * math.log(_clamp_t(t))
