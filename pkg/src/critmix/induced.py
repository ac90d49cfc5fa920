"""The induced first-return system on the window (1/2, 3/4).

A return decomposes as: one free symbol u (the starting point is in the
window, so its map acts as the doubling right branch), a block s = v b of
left-branch steps (v empty or ending in a good symbol, b the maximal bad
suffix), the good symbol g whose left branch ejects the orbit above 1/2,
and a free block w of right-branch steps back down into the window.  The
hitting times are kappa = 2 + |s| (first step above 1/2), l = |w|, and
phi = kappa + l.

The engine below tracks the left-branch state in the gap coordinate
u = 1 - 2x, switching to log2(u) once u drops below float range; the final
right-branch descent is counted in closed form, never iterated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    BoundaryError,
    BudgetError,
    DomainError,
    ReturnCensored,
)
from .maps import LeftGap, MapFamily, bad_word_exponent
from .orbit import RngSeed, SymbolSource, WordSource, doubling_steps

__all__ = [
    "ReturnDecomposition",
    "PartitionCell",
    "SeparationRecord",
    "first_return",
    "sample_returns",
    "lower_bound_l",
    "cell_interval",
    "cell_interval_closed_form",
    "cell_gap_log_interval",
    "cell_measure",
    "enumerate_cells",
    "partition_measure_by_phi",
    "classify_return",
    "return_map_eval",
    "separation_time",
    "expansion_and_distortion_check",
    "ExpansionReport",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 10**6

# switch the gap coordinate to log2 below 2**_LG_SWITCH (headroom above
# the subnormal range so u**e cannot round to zero first)
_LG_SWITCH = -930.0


@dataclass(frozen=True, eq=False)
class ReturnDecomposition:
    """Symbolic record of one first return.

    phi = kappa + l = 2 + |v| + |b| + |w|; m < kappa is the entry time into
    the re-entry window, with the gap of the orbit point at time m kept in
    log2 form (exact even when the point is superexponentially close to 1/2).
    """

    u: int
    v: Tuple[int, ...]
    b: Tuple[int, ...]
    g: int
    w: np.ndarray
    m: int
    kappa: int
    l: int
    phi: int
    x_return: float
    gap_lg2_at_m: float

    def word(self) -> Tuple[int, ...]:
        return (self.u, *self.v, *self.b, self.g, *map(int, self.w))

    def same_cell(self, other: "ReturnDecomposition") -> bool:
        return (
            self.u == other.u
            and self.v == other.v
            and self.b == other.b
            and self.g == other.g
            and np.array_equal(self.w, other.w)
        )


@dataclass(frozen=True)
class PartitionCell:
    """One partition element: cylinder word (u, v, b, g, |w|) times an x-interval.

    The w symbols are free, so summing the word measure over all w of the
    given length contributes a factor 1 and only wlen is kept.
    """

    u: int
    v: Tuple[int, ...]
    b: Tuple[int, ...]
    g: int
    wlen: int
    x_interval: Tuple[float, float]
    measure: float

    @property
    def phi(self) -> int:
        return 2 + len(self.v) + len(self.b) + self.wlen


@dataclass(frozen=True)
class SeparationRecord:
    n: int
    capped: bool = False


def _engine(family: MapFamily, src, x: float, budget: int, record_words: bool):
    """Run one first return. Returns
    (u_sym, s_syms|None, g, m, kappa, l, x_return, gap_lg2_at_m)."""
    if not (0.5 < x < 0.75):
        raise DomainError(f"inducing window is (1/2, 3/4), got {x}")
    kinds = family.kind_codes
    exps = family.exponents
    thr = family.reentry_gap_thresholds

    u_sym = src.next_symbol()
    y = 2.0 * x - 1.0  # T^1, exact
    u = 1.0 - 2.0 * y  # its gap
    lg = None  # not None once in log2 mode
    steps = 1
    m = -1
    m_gap = math.nan
    s_syms: Optional[list] = [] if record_words else None

    while True:
        if steps >= budget:
            raise ReturnCensored(steps=steps)
        sym = src.next_symbol()
        kind = kinds[sym]
        e = exps[sym]
        if m < 0:
            if lg is None:
                in_window = u < thr[sym] if kind == 0 else u <= thr[sym]
            else:
                in_window = True  # every threshold exceeds 2**_LG_SWITCH
            if in_window:
                m = steps
                m_gap = lg if lg is not None else math.log2(u)
        if kind == 1:  # bad: gap -> gap**e
            if lg is None:
                nlg = e * math.log2(u)
                if nlg < _LG_SWITCH:
                    lg = nlg
                else:
                    u = math.pow(u, e)
            else:
                lg = e * lg
                if lg < -(budget + 8.0):
                    # any future ejection needs at least -lg - 2 > budget
                    # doubling steps; censor without consuming more symbols
                    raise ReturnCensored(steps=steps + 1)
        else:  # good: ejects when gap**e < 1/2
            if lg is None:
                nlg_d = e * math.log2(u)
                if nlg_d < -900.0:
                    # gap**e would land in or below the subnormal range;
                    # keep the ejection distance in log2 form
                    lg_d = nlg_d
                    d = math.nan
                    g = sym
                    break
                d = math.pow(u, e)
                if d < 0.5:
                    g = sym
                    lg_d = None
                    break
                if d == 0.5:
                    raise BoundaryError("orbit hit 1/2 exactly", step=steps + 1)
                u = 2.0 * d - 1.0
            else:
                lg_d = e * lg
                d = math.nan
                g = sym
                break
        steps += 1
        if record_words:
            s_syms.append(sym)

    kappa = steps + 1
    if lg_d is None:
        l, r_out = doubling_steps(d)
    else:
        l = int(math.floor(-2.0 - lg_d)) + 1
        r_out = math.pow(2.0, l + lg_d)
    if kappa + l > budget:
        raise ReturnCensored(steps=kappa)
    if r_out == 0.5:
        raise BoundaryError("orbit hit 1/2 exactly after the descent", step=kappa + l)
    x_ret = 1.0 - r_out
    return u_sym, s_syms, g, m, kappa, l, x_ret, m_gap


def first_return(
    family: MapFamily,
    omega: Union[Sequence[int], SymbolSource, WordSource],
    x: float,
    budget: int = DEFAULT_BUDGET,
) -> ReturnDecomposition:
    """Full symbolic decomposition of the first return of (omega, x).

    omega may be a symbol stream or a finite word (long enough to cover the
    return).  The stream is consumed through the free right-branch block, so
    repeated calls iterate the induced map.
    """
    src = omega if isinstance(omega, (SymbolSource, WordSource)) else WordSource(omega)
    u_sym, s_syms, g, m, kappa, l, x_ret, m_gap = _engine(
        family, src, x, budget, record_words=True
    )
    w = src.take(l)
    kinds = family.kind_codes
    k = len(s_syms)
    while k > 0 and kinds[s_syms[k - 1]] == 1:
        k -= 1
    return ReturnDecomposition(
        u=u_sym,
        v=tuple(s_syms[:k]),
        b=tuple(s_syms[k:]),
        g=g,
        w=np.asarray(w, dtype=np.int64),
        m=m,
        kappa=kappa,
        l=l,
        phi=kappa + l,
        x_return=x_ret,
        gap_lg2_at_m=m_gap,
    )


def sample_returns(
    family: MapFamily,
    seed: RngSeed,
    n_samples: int,
    budget: int = DEFAULT_BUDGET,
    samples_per_stream: int = 65536,
) -> dict:
    """Monte Carlo first returns from x ~ Uniform(1/2, 3/4), fresh symbols.

    Returns arrays m, kappa, l, phi, censored, x0, x_return.  Censored rows
    carry phi = budget and nan x_return.  Work is split into fixed-size
    stream chunks, so results do not depend on how chunks are executed.
    The stream is not advanced through the free right-branch block (samples
    are independent, so the skipped symbols would never be observed).
    """
    out = {
        "m": np.zeros(n_samples, dtype=np.int64),
        "kappa": np.zeros(n_samples, dtype=np.int64),
        "l": np.zeros(n_samples, dtype=np.int64),
        "phi": np.zeros(n_samples, dtype=np.int64),
        "censored": np.zeros(n_samples, dtype=bool),
        "x0": np.zeros(n_samples),
        "x_return": np.zeros(n_samples),
    }
    done = 0
    stream = 0
    while done < n_samples:
        count = min(samples_per_stream, n_samples - done)
        src = SymbolSource(family, seed.stream(stream))
        for i in range(done, done + count):
            u0 = src.next_uniform()
            while u0 == 0.0:
                u0 = src.next_uniform()
            x0 = 0.5 + 0.25 * u0
            out["x0"][i] = x0
            try:
                _, _, _, m, kappa, l, x_ret, _ = _engine(
                    family, src, x0, budget, record_words=False
                )
                out["m"][i] = m
                out["kappa"][i] = kappa
                out["l"][i] = l
                out["phi"][i] = kappa + l
                out["x_return"][i] = x_ret
            except ReturnCensored:
                out["censored"][i] = True
                out["phi"][i] = budget
                out["x_return"][i] = math.nan
            except BoundaryError:
                # measure-zero dyadic orbit; counted as censored for bookkeeping
                out["censored"][i] = True
                out["phi"][i] = budget
                out["x_return"][i] = math.nan
        done += count
        stream += 1
    return out


def lower_bound_l(
    family: MapFamily, dec: ReturnDecomposition, y_at_m: Union[float, LeftGap]
) -> float:
    """Analytic lower bound on the descent length l from the state at time m.

    The bad block between m and kappa-1 composes to a single power law, so
    l >= L * log2(1/gap(y_m)) - 2 with L the product of those bad exponents
    times the ejecting good exponent.  The bound may be negative (vacuous).
    """
    dlen = dec.kappa - 1 - dec.m
    if dlen < 0 or dlen > len(dec.b):
        raise DomainError("decomposition times inconsistent with the bad suffix")
    d_word = dec.b[len(dec.b) - dlen :] if dlen else ()
    L = bad_word_exponent(family, d_word) * family.specs[dec.g].exponent
    if isinstance(y_at_m, LeftGap):
        lg_u = math.log2(y_at_m.value)
    else:
        if not (0.0 <= y_at_m < 0.5):
            raise DomainError(f"y at time m must lie in [0, 1/2), got {y_at_m}")
        lg_u = math.log2(1.0 - 2.0 * y_at_m)
    return -L * lg_u - 2.0


def lower_bound_l_from_record(family: MapFamily, dec: ReturnDecomposition) -> float:
    """Same bound evaluated from the log2 gap stored on the decomposition."""
    dlen = dec.kappa - 1 - dec.m
    d_word = dec.b[len(dec.b) - dlen :] if dlen else ()
    L = bad_word_exponent(family, d_word) * family.specs[dec.g].exponent
    return -L * dec.gap_lg2_at_m - 2.0


# ---------------------------------------------------------------------------
# partition cells


def _check_cell_word(family: MapFamily, v, b, g) -> None:
    kinds = family.kind_codes
    if kinds[g] != 0:
        raise DomainError("the ejecting symbol g must be a good map")
    if v and kinds[v[-1]] != 0:
        raise DomainError("v must be empty or end in a good symbol")
    for j in b:
        if kinds[j] != 1:
            raise DomainError("b must consist of bad symbols")


def cell_gap_log_interval(
    family: MapFamily, v: Sequence[int], b: Sequence[int], g: int, wlen: int
) -> Tuple[float, float]:
    """Cell interval in log2 of the gap of R(x), exact at any depth.

    Pulls (1/2, 3/4) back through the free doubling block, the ejecting good
    branch and the bad block as one closed-form power law, then through v one
    inverse branch at a time (after the first good inverse the gap is at
    least 2**(-1/r), so linear arithmetic is safe there).
    """
    _check_cell_word(family, v, b, g)
    L = bad_word_exponent(family, b) * family.specs[g].exponent
    lg_lo = -(wlen + 2.0) / L
    lg_hi = -(wlen + 1.0) / L
    kinds = family.kind_codes
    exps = family.exponents
    for sym in reversed(tuple(v)):
        e = exps[sym]
        if kinds[sym] == 1:
            lg_lo /= e
            lg_hi /= e
        else:
            u_lo = math.pow(2.0, lg_lo)
            u_hi = math.pow(2.0, lg_hi)
            lg_lo = math.log2(0.5 * (1.0 + u_lo)) / e
            lg_hi = math.log2(0.5 * (1.0 + u_hi)) / e
    return lg_lo, lg_hi


def _gap_to_x_interval(lg_lo: float, lg_hi: float) -> Tuple[float, float]:
    # x = (3 - u)/4 is decreasing in the gap u
    u_lo = math.pow(2.0, lg_lo)
    u_hi = math.pow(2.0, lg_hi)
    return 0.25 * (3.0 - u_hi), 0.25 * (3.0 - u_lo)


def cell_interval(
    family: MapFamily, u: int, v: Sequence[int], b: Sequence[int], g: int, wlen: int
) -> Tuple[float, float]:
    """x-interval of the cell (the starting symbol u does not affect it)."""
    lg_lo, lg_hi = cell_gap_log_interval(family, v, b, g, wlen)
    lo, hi = _gap_to_x_interval(lg_lo, lg_hi)
    if not hi > lo:
        raise DomainError(
            "cell x-interval below floating-point resolution; "
            "use cell_gap_log_interval for deep cells"
        )
    return lo, hi


def cell_interval_closed_form(
    family: MapFamily, b: Sequence[int], g: int, wlen: int
) -> Tuple[float, float]:
    """Closed form for v = empty: the pullback is a single power law."""
    _check_cell_word(family, (), b, g)
    L = bad_word_exponent(family, b) * family.specs[g].exponent
    y_lo = 0.5 * (1.0 - math.pow(2.0, -(wlen + 1.0) / L))
    y_hi = 0.5 * (1.0 - math.pow(2.0, -(wlen + 2.0) / L))
    return 0.5 * (y_lo + 1.0), 0.5 * (y_hi + 1.0)


def cell_measure(family: MapFamily, cell: PartitionCell) -> float:
    """Product measure p_u p_v p_b p_g times the interval length."""
    probs = family.probs
    p = probs[cell.u] * probs[cell.g]
    for j in cell.v:
        p *= probs[j]
    for j in cell.b:
        p *= probs[j]
    lo, hi = cell.x_interval
    return p * (hi - lo)


def _iter_word_cells(
    family: MapFamily, phi_max: int
) -> Iterator[Tuple[Tuple[int, ...], Tuple[int, ...], int, int, float, float, float]]:
    """Yield (v, b, g, wlen, lg_lo, lg_hi, p_v*p_b*p_g) for every cell word
    with 2 + |v| + |b| + wlen <= phi_max, sharing pullback work across the
    suffix tree of s = v b."""
    if phi_max < 2:
        return
    probs = family.probs
    kinds = family.kind_codes
    exps = family.exponents
    all_syms = range(family.n_maps)
    for g in family.good_indices:
        r_g = family.specs[g].exponent
        for wlen in range(phi_max - 1):
            lg_lo0 = -(wlen + 2.0) / r_g
            lg_hi0 = -(wlen + 1.0) / r_g
            max_slen = phi_max - 2 - wlen
            # DFS over s read back to front: path[i] is s_{|s|-i}; the
            # maximal bad suffix of s is the leading bad run of the path.
            stack = [((), lg_lo0, lg_hi0, probs[g])]
            while stack:
                path, lg_lo, lg_hi, p = stack.pop()
                s = tuple(reversed(path))
                k = 0
                while k < len(path) and kinds[path[k]] == 1:
                    k += 1
                yield s[: len(s) - k], s[len(s) - k :], g, wlen, lg_lo, lg_hi, p
                if len(path) == max_slen:
                    continue
                for sym in reversed(all_syms):
                    e = exps[sym]
                    if kinds[sym] == 1:
                        stack.append(
                            (path + (sym,), lg_lo / e, lg_hi / e, p * probs[sym])
                        )
                    else:
                        u_lo = math.pow(2.0, lg_lo)
                        u_hi = math.pow(2.0, lg_hi)
                        stack.append(
                            (
                                path + (sym,),
                                math.log2(0.5 * (1.0 + u_lo)) / e,
                                math.log2(0.5 * (1.0 + u_hi)) / e,
                                p * probs[sym],
                            )
                        )


def enumerate_cells(
    family: MapFamily, phi_max: int, max_cells: int = 500_000
) -> list:
    """All partition cells with phi <= phi_max, every starting symbol u.

    Raises BudgetError once more than max_cells cells would be produced.
    """
    if phi_max < 2:
        raise DomainError("phi_max must be at least 2 (the shortest return)")
    cells = []
    probs = family.probs
    for v, b, g, wlen, lg_lo, lg_hi, p in _iter_word_cells(family, phi_max):
        lo, hi = _gap_to_x_interval(lg_lo, lg_hi)
        width = hi - lo
        if width <= 0.0:
            # unreachable at enumerable depths; guarded per the width contract
            continue
        for u in range(family.n_maps):
            cells.append(
                PartitionCell(
                    u=u,
                    v=v,
                    b=b,
                    g=g,
                    wlen=wlen,
                    x_interval=(lo, hi),
                    measure=probs[u] * p * width,
                )
            )
            if len(cells) > max_cells:
                raise BudgetError(
                    f"more than {max_cells} cells below phi_max={phi_max}"
                )
    cells.sort(key=lambda c: (c.phi, c.g, c.wlen, c.v, c.b, c.u))
    return cells


def partition_measure_by_phi(family: MapFamily, phi_max: int) -> np.ndarray:
    """Total cell measure per return time: out[phi] = measure{phi_P = phi}.

    Aggregates without materializing cells (the u-symbol sum contributes a
    factor 1), so it reaches larger phi_max than enumerate_cells.
    """
    if phi_max < 2:
        raise DomainError("phi_max must be at least 2")
    sums = [[] for _ in range(phi_max + 1)]
    for v, b, g, wlen, lg_lo, lg_hi, p in _iter_word_cells(family, phi_max):
        phi = 2 + len(v) + len(b) + wlen
        width = 0.25 * (math.pow(2.0, lg_hi) - math.pow(2.0, lg_lo))
        sums[phi].append(p * width)
    out = np.zeros(phi_max + 1)
    for phi in range(2, phi_max + 1):
        out[phi] = math.fsum(sums[phi])
    return out


def classify_return(family: MapFamily, dec: ReturnDecomposition, x0: float) -> str:
    """Locate x0 relative to the cell named by the decomposition.

    Compared in log2 gap coordinates so deep cells (x-width under one ulp
    near 3/4) classify correctly.  Returns "inside", "boundary" or "outside";
    boundary points belong to the lower cell by convention.
    """
    y = 2.0 * x0 - 1.0
    u1 = 1.0 - 2.0 * y
    if u1 <= 0.0:
        raise DomainError("x0 must lie strictly inside the window")
    lg_u1 = math.log2(u1)
    lg_lo, lg_hi = cell_gap_log_interval(family, dec.v, dec.b, dec.g, dec.l)
    if lg_lo < lg_u1 < lg_hi:
        return "inside"
    if lg_u1 == lg_lo or lg_u1 == lg_hi:
        return "boundary"
    return "outside"


def return_map_eval(
    family: MapFamily,
    v: Sequence[int],
    b: Sequence[int],
    g: int,
    wlen: int,
    x: float,
) -> Tuple[float, float]:
    """Evaluate the return branch S = R^wlen ∘ L_g ∘ L_b ∘ L_v ∘ R at x.

    Returns (S(x), log2 DS(x)) computed in gap coordinates; x must lie in
    the corresponding cell interval, otherwise the composition leaves its
    branch domains and a DomainError is raised.
    """
    _check_cell_word(family, v, b, g)
    kinds = family.kind_codes
    exps = family.exponents
    if not (0.5 < x < 0.75):
        raise DomainError("x must lie in the inducing window")
    y = 2.0 * x - 1.0
    u = 1.0 - 2.0 * y
    lg = math.log2(u)
    linear = True
    log2_deriv = 1.0  # the initial right branch
    for sym in (*v, *b):
        e = exps[sym]
        if kinds[sym] == 1:
            log2_deriv += math.log2(e) + (e - 1.0) * lg
            nlg = e * lg
            if linear and nlg >= _LG_SWITCH:
                u = math.pow(u, e)
                lg = math.log2(u) if u > 0.0 else nlg
            else:
                linear = False
                lg = nlg
        else:
            if not linear:
                raise DomainError("good interior symbol reached from a collapsed gap")
            log2_deriv += 1.0 + math.log2(e) + (e - 1.0) * lg
            d = math.pow(u, e)
            if d <= 0.5:
                raise DomainError("x is outside the cell (early ejection)")
            u = 2.0 * d - 1.0
            lg = math.log2(u)
    e = exps[g]
    log2_deriv += 1.0 + math.log2(e) + (e - 1.0) * lg
    lg_d = e * lg
    if lg_d >= -1.0:
        raise DomainError("x is outside the cell (no ejection)")
    log2_deriv += wlen
    r_out = math.pow(2.0, wlen + lg_d)
    if not (0.25 < r_out < 0.5):
        raise DomainError("x is outside the cell (descent misses the window)")
    return 1.0 - r_out, log2_deriv


def separation_time(
    family: MapFamily,
    z1: Tuple[Union[SymbolSource, WordSource, Sequence[int]], float],
    z2: Tuple[Union[SymbolSource, WordSource, Sequence[int]], float],
    n_max: int,
    budget: int = DEFAULT_BUDGET,
) -> SeparationRecord:
    """Induced-map steps until the two points land in distinct cells.

    Each z is a (symbol stream, point) pair.  Cells are cylinder sets, so
    two iterates separate exactly when their return words differ.  Reaching
    n_max without separating is reported as capped (time >= n_max).
    """
    src1, x1 = z1
    src2, x2 = z2
    if not isinstance(src1, (SymbolSource, WordSource)):
        src1 = WordSource(src1)
    if not isinstance(src2, (SymbolSource, WordSource)):
        src2 = WordSource(src2)
    for n in range(n_max):
        d1 = first_return(family, src1, x1, budget)
        d2 = first_return(family, src2, x2, budget)
        if not d1.same_cell(d2):
            return SeparationRecord(n=n, capped=False)
        x1, x2 = d1.x_return, d2.x_return
    return SeparationRecord(n=n_max, capped=True)


@dataclass(frozen=True)
class ExpansionReport:
    samples: int
    censored: int
    boundary: int
    min_return_deriv: float
    min_intermediate_deriv: float
    c3_hat: float
    pairs_used: int
    pairs_skipped: int


def _deriv_chain_log2(family: MapFamily, dec: ReturnDecomposition, x0: float):
    """Per-step log2 derivatives along the realized return word at x0,
    for the kappa-phase steps (the l right-branch steps each contribute 1)."""
    kinds = family.kind_codes
    exps = family.exponents
    y = 2.0 * x0 - 1.0
    u = 1.0 - 2.0 * y
    lg = math.log2(u)
    linear = True
    chain = [1.0]  # the initial right branch
    for sym in (*dec.v, *dec.b):
        e = exps[sym]
        if kinds[sym] == 1:
            chain.append(math.log2(e) + (e - 1.0) * lg)
            nlg = e * lg
            if linear and nlg >= _LG_SWITCH:
                u = math.pow(u, e)
                lg = math.log2(u) if u > 0.0 else nlg
                linear = u > 0.0
            else:
                linear = False
                lg = nlg
        else:
            chain.append(1.0 + math.log2(e) + (e - 1.0) * lg)
            d = math.pow(u, e)
            u = 2.0 * d - 1.0
            lg = math.log2(u)
    e = exps[dec.g]
    chain.append(1.0 + math.log2(e) + (e - 1.0) * lg)
    return chain


def expansion_and_distortion_check(
    family: MapFamily,
    samples: int,
    seed: RngSeed,
    budget: int = DEFAULT_BUDGET,
) -> ExpansionReport:
    """Empirical expansion and distortion over sampled returns.

    For each return: the chain-rule derivative of the full return branch and
    the minimum intermediate forward derivative (both via log2 sums).  For
    each sampled cell: a same-cell pair (x1, x2) drawn inside the cell
    interval, contributing |DS(x1)/DS(x2) - 1| / |S(x1) - S(x2)| to the
    empirical distortion constant.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    rng = seed.stream(10**6).generator()  # pair offsets, disjoint from symbol streams
    min_total = math.inf
    min_inter = math.inf
    c3 = 0.0
    censored = boundary = 0
    pairs = skipped = 0
    stream = 0
    done = 0
    src = SymbolSource(family, seed.stream(stream))
    per_stream = 65536
    in_stream = 0
    while done < samples:
        if in_stream >= per_stream:
            stream += 1
            src = SymbolSource(family, seed.stream(stream))
            in_stream = 0
        u0 = src.next_uniform()
        while u0 == 0.0:
            u0 = src.next_uniform()
        x0 = 0.5 + 0.25 * u0
        in_stream += 1
        try:
            dec = first_return(family, src, x0, budget)
        except ReturnCensored:
            censored += 1
            done += 1
            continue
        except BoundaryError:
            boundary += 1
            done += 1
            continue
        done += 1

        chain = _deriv_chain_log2(family, dec, x0)
        total = math.fsum(chain) + dec.l
        min_total = min(min_total, total)
        # intermediate forward derivatives: suffix sums over j = 1..phi-1;
        # inside the descent block the suffix is phi - j >= 1, so only the
        # kappa-phase suffixes can be binding
        prefix = 0.0
        for j in range(1, dec.kappa):
            prefix += chain[j - 1]
            min_inter = min(min_inter, total - prefix)
        if dec.l >= 1:
            min_inter = min(min_inter, 1.0)

        # same-cell pair for the distortion ratio
        try:
            lo, hi = cell_interval(family, dec.u, dec.v, dec.b, dec.g, dec.l)
        except DomainError:
            skipped += 1
            continue
        width = hi - lo
        if width < 1e-12:
            skipped += 1
            continue
        t1, t2 = rng.random(2)
        x1 = lo + width * (0.1 + 0.8 * t1)
        x2 = lo + width * (0.1 + 0.8 * t2)
        if x1 == x2:
            skipped += 1
            continue
        try:
            s1, ld1 = return_map_eval(family, dec.v, dec.b, dec.g, dec.l, x1)
            s2, ld2 = return_map_eval(family, dec.v, dec.b, dec.g, dec.l, x2)
        except DomainError:
            skipped += 1
            continue
        if s1 == s2:
            skipped += 1
            continue
        dev = abs(math.pow(2.0, ld1 - ld2) - 1.0) / abs(s1 - s2)
        c3 = max(c3, dev)
        pairs += 1

    return ExpansionReport(
        samples=samples,
        censored=censored,
        boundary=boundary,
        min_return_deriv=math.pow(2.0, min_total) if min_total < math.inf else math.inf,
        min_intermediate_deriv=(
            math.pow(2.0, min_inter) if min_inter < math.inf else math.inf
        ),
        c3_hat=c3,
        pairs_used=pairs,
        pairs_skipped=skipped,
    )
