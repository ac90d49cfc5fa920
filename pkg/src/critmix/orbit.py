"""Seeded symbol streams and skew-product orbits.

Randomness comes from numpy's counter-based Philox generator keyed by
(master_seed, stream_index); identical keys reproduce identical streams on
every platform.  Monte Carlo drivers split work by stream index and merge
per-stream results in index order, so aggregates do not depend on the
worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import DomainError
from .maps import MapFamily

__all__ = [
    "RNG_ALGORITHM",
    "RngSeed",
    "SymbolSource",
    "WordSource",
    "Trajectory",
    "sample_symbols",
    "iterate",
    "FastForward",
    "fast_forward_right",
    "birkhoff_sum",
    "doubling_steps",
]

RNG_ALGORITHM = "numpy-philox4x64(key=[master_seed,stream_index])"

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    """A reproducible stream identity: (master seed, stream index)."""

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed & _U64, self.stream_index & _U64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, index: int) -> "RngSeed":
        return RngSeed(self.master_seed, self.stream_index + index)


class SymbolSource:
    """Block-buffered i.i.d. symbol stream for one family.

    One uniform double is consumed per symbol (inverse-CDF via searchsorted),
    so the stream state is fully determined by how many draws were taken;
    ``next_uniform`` shares the same draw sequence, which keeps mixed
    point/symbol sampling reproducible.
    """

    def __init__(self, family: MapFamily, seed: RngSeed, block: int = 4096):
        self.family = family
        self.seed = seed
        self._rng = seed.generator()
        self._block = int(block)
        self._cum = family.cum_probs
        self._u = np.empty(0)
        self._sym = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        self._u = self._rng.random(self._block)
        self._sym = np.searchsorted(self._cum, self._u, side="right")
        self._pos = 0

    def next_symbol(self) -> int:
        if self._pos >= len(self._u):
            self._refill()
        s = self._sym[self._pos]
        self._pos += 1
        return int(s)

    def next_uniform(self) -> float:
        if self._pos >= len(self._u):
            self._refill()
        u = self._u[self._pos]
        self._pos += 1
        return float(u)

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            if self._pos >= len(self._u):
                self._refill()
            chunk = min(n - filled, len(self._u) - self._pos)
            out[filled : filled + chunk] = self._sym[self._pos : self._pos + chunk]
            self._pos += chunk
            filled += chunk
        return out

    def skip(self, n: int):
        left = n
        while left > 0:
            if self._pos >= len(self._u):
                self._refill()
            chunk = min(left, len(self._u) - self._pos)
            self._pos += chunk
            left -= chunk


class WordSource:
    """Adapter exposing a fixed finite word as a symbol stream."""

    def __init__(self, word: Sequence[int]):
        self._word = np.asarray(word, dtype=np.int64)
        self._pos = 0

    def next_symbol(self) -> int:
        if self._pos >= len(self._word):
            raise DomainError("symbol word exhausted before the orbit returned")
        s = self._word[self._pos]
        self._pos += 1
        return int(s)

    def take(self, n: int) -> np.ndarray:
        if self._pos + n > len(self._word):
            raise DomainError("symbol word exhausted before the orbit returned")
        out = self._word[self._pos : self._pos + n].copy()
        self._pos += n
        return out

    def skip(self, n: int):
        self.take(n)

    @property
    def consumed(self) -> int:
        return self._pos


def sample_symbols(family: MapFamily, seed: RngSeed, n: int) -> np.ndarray:
    """n i.i.d. symbol draws with the family's probability vector."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    return SymbolSource(family, seed, block=max(1, min(n, 1 << 16))).take(n)


@dataclass
class Trajectory:
    """A realized orbit: symbols[k] drives the step points[k] -> points[k+1]."""

    symbols: np.ndarray
    points: np.ndarray  # length len(symbols) + 1, starts at x0
    censored: bool = False

    @property
    def x0(self) -> float:
        return float(self.points[0])

    @property
    def n_steps(self) -> int:
        return len(self.symbols)

    def gaps(self) -> np.ndarray:
        """Gap coordinate 1 - 2x of every orbit point (meaningful below 1/2)."""
        return 1.0 - 2.0 * self.points


def iterate(
    family: MapFamily,
    word_or_stream: Union[Sequence[int], SymbolSource],
    x0: float,
    n: Optional[int] = None,
) -> Trajectory:
    """Drive x0 through n symbol steps (first symbol applied first)."""
    if not (0.0 <= x0 <= 1.0):
        raise DomainError(f"x0 must lie in [0, 1], got {x0}")
    if isinstance(word_or_stream, (SymbolSource, WordSource)):
        if n is None:
            raise DomainError("n is required when iterating a stream")
        symbols = word_or_stream.take(n)
    else:
        symbols = np.asarray(word_or_stream, dtype=np.int64)
        if n is not None:
            symbols = symbols[:n]
    if len(symbols) and (symbols.min() < 0 or symbols.max() >= family.n_maps):
        raise DomainError("symbol out of range")
    points = np.empty(len(symbols) + 1)
    points[0] = x0
    if len(symbols):
        _kernels.trajectory_block(
            family.kind_codes, family.exponents, symbols, x0, points[1:]
        )
    return Trajectory(symbols=symbols, points=points)


def doubling_steps(d: float) -> tuple:
    """Minimal l >= 0 with 2^l * d in (1/4, 1/2], plus 2^l * d, exactly.

    d is a positive distance-to-1; doubling a float is exact, so the frexp
    closed form reproduces step-by-step doubling bit for bit.
    """
    fr, e = math.frexp(d)  # d = fr * 2^e, fr in [0.5, 1)
    l = -1 - e + (1 if fr == 0.5 else 0)
    if l < 0:
        l = 0
    return l, math.ldexp(fr, e + l)


class FastForward(NamedTuple):
    steps: int
    x_out: float
    boundary: bool
    censored: bool


def fast_forward_right(x: float, budget: int = 10**6) -> FastForward:
    """Closed-form count of doubling steps from x in (3/4, 1] back into (1/2, 3/4).

    The boundary flag marks the measure-zero dyadic orbits that land exactly
    on 1/2 (x_out = 0.5, one step past 3/4); x = 3/4 itself is such an orbit
    and is accepted.  x = 1 is a fixed point and is reported as censored.
    """
    if not (0.75 <= x <= 1.0):
        raise DomainError(f"fast-forward domain is [3/4, 1], got {x}")
    d = 1.0 - x  # exact for x in [1/2, 1]
    if d == 0.0:
        return FastForward(steps=0, x_out=x, boundary=False, censored=True)
    steps, r = doubling_steps(d)
    if r == 0.5:
        return FastForward(steps=steps, x_out=0.5, boundary=True, censored=steps > budget)
    return FastForward(steps=steps, x_out=1.0 - r, boundary=False, censored=steps > budget)


def birkhoff_sum(observable, trajectory: Trajectory) -> float:
    """Sum of observable(symbol tail, point) over the trajectory's first n states.

    The observable is called as fn(tail, x) where tail = symbols[k:] is the
    symbol sequence seen from time k.
    """
    n = trajectory.n_steps
    sym = trajectory.symbols
    pts = trajectory.points
    return math.fsum(observable(sym[k:], float(pts[k])) for k in range(n))
