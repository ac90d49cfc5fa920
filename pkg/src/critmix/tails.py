"""Return-time tail P x lambda(phi > n): exact, series-bounded and Monte Carlo.

The exact route sums enumerated partition-cell measures (feasible to
phi ~ 14-20).  The series bounds collapse the sum over bad words of length
k into distinct-exponent multisets with multinomial weights, truncate at
(k_max, j_max), and carry certified geometric remainders: the lower value
is valid as returned, the upper value has its remainder added in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetError, DomainError
from .induced import DEFAULT_BUDGET, partition_measure_by_phi, sample_returns
from .maps import MapFamily
from .orbit import RngSeed

__all__ = [
    "TailSeries",
    "tail_lower",
    "tail_upper",
    "tail_exact",
    "tail_mc",
    "assemble_tail_series",
    "fit_tail_exponent",
    "DEFAULT_K_MAX",
]

DEFAULT_K_MAX = 60
_EXACT_NODE_BUDGET = 4_000_000


def _compositions(k: int, d: int):
    if d == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, d - 1):
            yield (first, *rest)


def _multinomial(k: int, comp: Tuple[int, ...]) -> float:
    out = 1
    rest = k
    for c in comp:
        out *= math.comb(rest, c)
        rest -= c
    return float(out)


def _multiset_pairs(family: MapFamily, k_max: int):
    """Per word length k: (weights, exponent products) over distinct-exponent
    multisets, so that sum_b p_b f(l_b) = weights . f(products)."""
    cache = getattr(family, "_tail_pairs", None)
    if cache is not None and cache[0] >= k_max:
        return cache[1][: k_max + 1]
    classes: dict = {}
    for j in family.bad_indices:
        e = family.specs[j].exponent
        classes[e] = classes.get(e, 0.0) + family.probs[j]
    ells = sorted(classes)
    qs = [classes[e] for e in ells]
    d = len(ells)
    pairs = []
    for k in range(k_max + 1):
        if d == 0:
            ws = [1.0] if k == 0 else []
            ls = [1.0] if k == 0 else []
        else:
            ws, ls = [], []
            for comp in _compositions(k, d):
                w = _multinomial(k, comp)
                l = 1.0
                for q, e, c in zip(qs, ells, comp):
                    w *= q**c
                    l *= e**c
                ws.append(w)
                ls.append(l)
        pairs.append((np.asarray(ws), np.asarray(ls)))
    family._tail_pairs = (k_max, pairs)
    return pairs


def _inner_sum(pairs, k: int, r: float, a: float) -> float:
    """sum over bad words of length k of p_b * 2^(-a / (l_b * r))."""
    ws, ls = pairs[k]
    if not len(ws):
        return 0.0
    return float(ws @ np.exp2(-a / (ls * r)))


def tail_lower(family: MapFamily, n: int, k_max: int = DEFAULT_K_MAX) -> Tuple[float, float]:
    """Certified lower bound on the tail at n, with its truncation slack.

    The returned value is a valid lower bound as-is; the second entry bounds
    the discarded k > k_max part (it sits on the upper side of the bound).
    """
    if n < 1:
        raise DomainError("tail bounds need n >= 1")
    pairs = _multiset_pairs(family, k_max)
    c = family.derived
    min_pg = min(family.probs[g] for g in family.good_indices)
    terms = [
        _inner_sum(pairs, k, c.r_min, float(max(n - 1 - k, 1)))
        for k in range(k_max + 1)
    ]
    value = 0.25 * min_pg * math.fsum(terms)
    p_b = c.p_bad
    trunc = 0.25 * min_pg * p_b ** (k_max + 1) / (1.0 - p_b)
    return value, trunc


def tail_upper(
    family: MapFamily,
    n: int,
    j_max: Optional[int] = None,
    k_max: int = DEFAULT_K_MAX,
) -> Tuple[float, float]:
    """Certified upper bound on the tail at n.

    The geometric remainders over j > j_max and k > k_max are added into the
    returned value, which is therefore a valid upper bound; the remainder is
    also reported separately.
    """
    if n < 1:
        raise DomainError("tail bounds need n >= 1")
    pairs = _multiset_pairs(family, k_max)
    c = family.derived
    s = c.s
    if j_max is None:
        j_max = max(0, math.ceil(math.log(1e-12) / math.log(s)))
    # for j >= n - 1 the clamp max(n-1-j-k, 1) is 1 for every k
    j_cut = min(j_max, max(n - 2, -1))
    core = [
        math.fsum(
            _inner_sum(pairs, k, c.r_max, float(max(n - 1 - j - k, 1)))
            for k in range(k_max + 1)
        )
        for j in range(j_cut + 1)
    ]
    total = math.fsum(s**j * core[j] for j in range(j_cut + 1))
    if j_max > j_cut:
        flat = math.fsum(_inner_sum(pairs, k, c.r_max, 1.0) for k in range(k_max + 1))
        # geometric block s^(j_cut+1) + ... + s^j_max
        total += flat * (s ** (j_cut + 1) - s ** (j_max + 1)) / (1.0 - s)
    p_b = c.p_bad
    geo_j = sum(s**j for j in range(j_max + 1))
    rem = 0.25 * (
        geo_j * p_b ** (k_max + 1) / (1.0 - p_b)
        + s ** (j_max + 1) / ((1.0 - s) * (1.0 - p_b))
    )
    return 0.25 * total + rem, rem


def tail_exact(
    family: MapFamily, n: int, max_nodes: int = _EXACT_NODE_BUDGET
) -> float:
    """Exact tail 1/4 - sum of cell measures with phi <= n (interval arithmetic
    in doubles).  Cost grows like N^n; guarded by a node budget."""
    if n < 1:
        raise DomainError("tail_exact needs n >= 1")
    if n == 1:
        return 0.25  # every return takes at least 2 steps
    est = (n + 1) * family.n_maps ** (n - 2) * len(family.good_indices)
    if est > max_nodes:
        raise BudgetError(
            f"exact tail at n={n} needs ~{est:.2g} enumeration nodes (> {max_nodes})"
        )
    measures = partition_measure_by_phi(family, n)
    return 0.25 - math.fsum(measures[2 : n + 1])


def tail_mc(
    family: MapFamily,
    n_list: Sequence[int],
    samples: int,
    seed: RngSeed,
    budget: int = DEFAULT_BUDGET,
) -> dict:
    """Unconditioned Monte Carlo tail: 1/4 times the empirical survival of phi
    from uniform starts on the window.  Censored samples count as phi > budget."""
    n_arr = np.asarray(list(n_list), dtype=np.int64)
    if len(n_arr) == 0 or n_arr.min() < 1:
        raise DomainError("n values must be >= 1")
    if n_arr.max() >= budget:
        raise DomainError("n values must stay below the censoring budget")
    res = sample_returns(family, seed, samples, budget=budget)
    phi = res["phi"]
    estimates = np.empty(len(n_arr))
    stderrs = np.empty(len(n_arr))
    for i, n in enumerate(n_arr):
        surv = float(np.mean(phi > n))
        estimates[i] = 0.25 * surv
        stderrs[i] = 0.25 * math.sqrt(max(surv * (1.0 - surv), 1e-300) / samples)
    return {
        "n_values": n_arr,
        "estimates": estimates,
        "stderrs": stderrs,
        "censored": int(res["censored"].sum()),
        "samples": samples,
        "phi": phi,
    }


@dataclass
class TailSeries:
    """Aligned tail evaluations; exact entries are nan where enumeration is
    out of budget.  lower <= exact <= upper holds wherever exact is finite."""

    n_values: np.ndarray
    exact: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mc: np.ndarray
    mc_stderr: np.ndarray
    truncation_error: np.ndarray


def assemble_tail_series(
    family: MapFamily,
    n_values: Sequence[int],
    samples: int,
    seed: RngSeed,
    k_max: int = DEFAULT_K_MAX,
    j_max: Optional[int] = None,
    exact_max_n: int = 12,
    budget: int = DEFAULT_BUDGET,
) -> TailSeries:
    n_arr = np.asarray(list(n_values), dtype=np.int64)
    lower = np.empty(len(n_arr))
    upper = np.empty(len(n_arr))
    trunc = np.empty(len(n_arr))
    exact = np.full(len(n_arr), math.nan)
    exact_cap = min(exact_max_n, int(n_arr.max()))
    if exact_cap >= 1:
        measures = partition_measure_by_phi(family, max(exact_cap, 2))
        cum = np.cumsum(measures)
    for i, n in enumerate(n_arr):
        lo, lo_tr = tail_lower(family, int(n), k_max)
        up, up_tr = tail_upper(family, int(n), j_max, k_max)
        lower[i] = lo
        upper[i] = up
        trunc[i] = lo_tr + up_tr
        if n <= exact_cap:
            exact[i] = 0.25 - float(cum[int(n)])
    mc = tail_mc(family, n_arr, samples, seed, budget)
    return TailSeries(
        n_values=n_arr,
        exact=exact,
        lower=lower,
        upper=upper,
        mc=mc["estimates"],
        mc_stderr=mc["stderrs"],
        truncation_error=trunc,
    )


def fit_tail_exponent(
    n_values: Iterable[float],
    values: Iterable[float],
    window: Tuple[float, float],
) -> Tuple[float, float]:
    """Least-squares slope of log(value) against log(n) inside the window.

    Non-positive values are dropped (empty survival bins); fewer than five
    usable points is a degenerate window.
    """
    n_arr = np.asarray(list(n_values), dtype=float)
    v_arr = np.asarray(list(values), dtype=float)
    lo, hi = window
    keep = (n_arr >= lo) & (n_arr <= hi) & (v_arr > 0.0) & np.isfinite(v_arr)
    if keep.sum() < 5:
        raise DomainError("degenerate window: fewer than 5 usable points")
    x = np.log(n_arr[keep])
    y = np.log(v_arr[keep])
    m = len(x)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    se = math.sqrt(float((resid**2).sum()) / (m - 2) / sxx) if m > 2 else math.inf
    return slope, se
