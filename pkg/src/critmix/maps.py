"""Good/bad interval maps: exact branch algebra and derived family constants.

A *good* map with exponent r >= 1 sends [0, 1/2) onto [0, 1) via
``x -> 1 - 2^r (1/2 - x)^r`` and a *bad* map with exponent l > 1 fixes 1/2
from the left via ``x -> 1/2 - 2^(l-1) (1/2 - x)^l``; both share the linear
right branch ``x -> 2x - 1`` on [1/2, 1].

All left-branch arithmetic goes through the gap coordinate ``u = 1 - 2x``,
in which a good branch is ``u -> 1 - u^r`` (value, not gap), a bad branch is
``u -> u^l`` (gap to gap), and a composition of bad branches is the single
power law ``u -> u^(l_1 ... l_k)``.  This avoids catastrophic cancellation
for orbits superexponentially close to 1/2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "MapKind",
    "MapSpec",
    "LeftGap",
    "MapFamily",
    "FamilyConstants",
    "eval_map",
    "deriv_map",
    "compose_bad_left",
    "invert_bad_left",
    "invert_left_branch",
    "invert_right_branch",
    "critical_point",
    "family_constants",
    "bad_word_exponent",
    "family_from_json",
    "family_to_json",
]

# Accumulate bad-word exponent products in log space beyond this word length.
_LOGSPACE_WORD_LEN = 64

PROB_SUM_TOL = 1e-12


class MapKind(Enum):
    GOOD = "good"
    BAD = "bad"


@dataclass(frozen=True)
class MapSpec:
    """One good or bad map, identified by its kind and left-branch exponent."""

    kind: MapKind
    exponent: float

    def __post_init__(self):
        e = float(self.exponent)
        if not math.isfinite(e):
            raise ValidationError("exponent must be finite", code="bad_exponent")
        if self.kind is MapKind.GOOD and e < 1.0:
            raise ValidationError("good map needs exponent >= 1", code="bad_exponent")
        if self.kind is MapKind.BAD and e <= 1.0:
            raise ValidationError("bad map needs exponent > 1", code="bad_exponent")
        object.__setattr__(self, "exponent", e)

    @property
    def is_good(self) -> bool:
        return self.kind is MapKind.GOOD


def good(exponent: float) -> MapSpec:
    return MapSpec(MapKind.GOOD, exponent)


def bad(exponent: float) -> MapSpec:
    return MapSpec(MapKind.BAD, exponent)


@dataclass(frozen=True)
class LeftGap:
    """Gap coordinate u = 1 - 2x of a point x in [0, 1/2).

    Kept as its own type so that composition chains can stay in the
    cancellation-safe coordinate; convert at branch switches only.
    """

    value: float

    def __post_init__(self):
        if not (0.0 < self.value <= 1.0):
            raise DomainError(f"gap must lie in (0, 1], got {self.value}")

    @classmethod
    def from_x(cls, x: float) -> "LeftGap":
        if not (0.0 <= x < 0.5):
            raise DomainError(f"left-branch point must lie in [0, 1/2), got {x}")
        return cls(1.0 - 2.0 * x)

    def to_x(self) -> float:
        return 0.5 * (1.0 - self.value)


def eval_map(spec: MapSpec, x):
    """Apply the map once.  x = 1/2 is assigned to the right branch.

    Accepts a scalar or ndarray; the scalar path is bit-identical to the
    compiled orbit kernels (same operation order, libm pow).
    """
    if isinstance(x, np.ndarray):
        _check_unit_interval_array(x)
        u = 1.0 - 2.0 * x
        if spec.is_good:
            left = 1.0 - u**spec.exponent
        else:
            left = 0.5 - 0.5 * u**spec.exponent
        return np.where(x < 0.5, left, 2.0 * x - 1.0)
    x = _check_unit_interval(x)
    if x < 0.5:
        u = 1.0 - 2.0 * x
        if spec.is_good:
            return 1.0 - math.pow(u, spec.exponent)
        return 0.5 - 0.5 * math.pow(u, spec.exponent)
    return 2.0 * x - 1.0


def deriv_map(spec: MapSpec, x) -> float:
    """Branch derivative; the left formula applies for x < 1/2, slope 2 otherwise."""
    if isinstance(x, np.ndarray):
        _check_unit_interval_array(x)
        u = 1.0 - 2.0 * x
        e = spec.exponent
        left = (2.0 * e if spec.is_good else e) * u ** (e - 1.0)
        return np.where(x < 0.5, left, 2.0)
    x = _check_unit_interval(x)
    if x >= 0.5:
        return 2.0
    u = 1.0 - 2.0 * x
    e = spec.exponent
    if spec.is_good:
        return 2.0 * e * math.pow(u, e - 1.0)
    return e * math.pow(u, e - 1.0)


def bad_word_exponent(family: "MapFamily", word: Sequence[int]) -> float:
    """Product of the bad exponents along ``word`` (1.0 for the empty word).

    Long words are accumulated in log space; the product may round to inf,
    which downstream power laws treat as the u -> 0 limit.
    """
    exps = [family.specs[j].exponent for j in family._require_bad(word)]
    if len(exps) <= _LOGSPACE_WORD_LEN:
        return math.prod(exps) if exps else 1.0
    return math.exp(math.fsum(math.log(e) for e in exps))


def compose_bad_left(family: "MapFamily", word: Sequence[int], x_or_gap):
    """Apply the left branches of a bad word, exactly, as one power law.

    A gap input returns a gap (u -> u^L); a point input x in [0, 1/2)
    returns the composed point 1/2 (1 - (1-2x)^L).  Arrays of points are
    supported elementwise.
    """
    L = bad_word_exponent(family, word)
    if isinstance(x_or_gap, LeftGap):
        u = x_or_gap.value
        return LeftGap(1.0 if u == 1.0 else u**L)
    x = x_or_gap
    if isinstance(x, np.ndarray):
        if np.any((x < 0.0) | (x >= 0.5)):
            raise DomainError("bad-branch points must lie in [0, 1/2)")
        return 0.5 * (1.0 - (1.0 - 2.0 * x) ** L)
    if not (0.0 <= x < 0.5):
        raise DomainError(f"bad-branch point must lie in [0, 1/2), got {x}")
    u = 1.0 - 2.0 * x
    return 0.5 * (1.0 - (1.0 if u == 1.0 else math.pow(u, L)))


def invert_bad_left(family: "MapFamily", word: Sequence[int], y):
    """Exact inverse of :func:`compose_bad_left` on points y in [0, 1/2)."""
    L = bad_word_exponent(family, word)
    if isinstance(y, LeftGap):
        u = y.value
        return LeftGap(1.0 if u == 1.0 else math.pow(u, 1.0 / L))
    if isinstance(y, np.ndarray):
        if np.any((y < 0.0) | (y >= 0.5)):
            raise DomainError("bad-branch image points must lie in [0, 1/2)")
        return 0.5 * (1.0 - (1.0 - 2.0 * y) ** (1.0 / L))
    if not (0.0 <= y < 0.5):
        raise DomainError(f"bad-branch image point must lie in [0, 1/2), got {y}")
    u = 1.0 - 2.0 * y
    return 0.5 * (1.0 - (1.0 if u == 1.0 else math.pow(u, 1.0 / L)))


def invert_left_branch(spec: MapSpec, y: float) -> float:
    """Unique left-branch preimage in [0, 1/2).

    Good branch image is [0, 1), bad branch image is [0, 1/2).
    """
    if spec.is_good:
        if not (0.0 <= y < 1.0):
            raise DomainError(f"good left branch image is [0, 1), got {y}")
        return 0.5 * (1.0 - math.pow(1.0 - y, 1.0 / spec.exponent))
    if not (0.0 <= y < 0.5):
        raise DomainError(f"bad left branch image is [0, 1/2), got {y}")
    return 0.5 * (1.0 - math.pow(1.0 - 2.0 * y, 1.0 / spec.exponent))


def invert_right_branch(y: float) -> float:
    """Unique right-branch preimage (y+1)/2 in [1/2, 1]."""
    if not (0.0 <= y <= 1.0):
        raise DomainError(f"right branch image is [0, 1], got {y}")
    return 0.5 * (y + 1.0)


def critical_point(spec: MapSpec) -> float:
    """The point in (0, 1/2) where the left-branch derivative equals 1."""
    e = spec.exponent
    if spec.is_good:
        if e == 1.0:
            raise DomainError("doubling map has constant left derivative 2; no critical point")
        return 0.5 - math.pow(e * math.pow(2.0, e), 1.0 / (1.0 - e))
    return 0.5 * (1.0 - math.pow(e, 1.0 / (1.0 - e)))


@dataclass(frozen=True)
class FamilyConstants:
    """Derived constants of a family.

    theta < 1 is the finite-stationary-density regime.  gamma1 is the
    polynomial upper decay exponent log(theta)/log(ell_max), gamma2 the
    lower one 1 + max_b log(pi_b)/log(ell_b); both are -inf for a family
    without bad maps (super-polynomial regime).
    """

    theta: float
    gamma1: float
    gamma2: float
    pi_b: dict
    ell_max: float
    ell_min: float
    r_max: float
    r_min: float
    p_bad: float
    s: float
    thm_lower_applicable: bool


def family_constants(family: "MapFamily") -> FamilyConstants:
    specs, probs = family.specs, family.probs
    goods = family.good_indices
    bads = family.bad_indices
    r_vals = [specs[j].exponent for j in goods]
    l_vals = [specs[j].exponent for j in bads]
    theta = math.fsum(probs[j] * specs[j].exponent for j in bads)
    p_bad = math.fsum(probs[j] for j in bads)

    pi_b = {}
    for j in bads:
        pi_b[j] = math.fsum(probs[k] for k in bads if specs[k].exponent >= specs[j].exponent)

    if bads:
        ell_max, ell_min = max(l_vals), min(l_vals)
        gamma1 = math.log(theta) / math.log(ell_max)
        gamma2 = 1.0 + max(
            math.log(pi_b[j]) / math.log(specs[j].exponent) for j in bads
        )
    else:
        ell_max = ell_min = math.nan
        gamma1 = gamma2 = -math.inf

    # 1/s is the smallest left-branch derivative on the relevant re-entry
    # windows; evaluated through the generic ops so closed forms stay testable.
    inv_s_candidates = [deriv_map(specs[j], invert_left_branch(specs[j], 0.5)) for j in goods]
    inv_s_candidates += [deriv_map(specs[j], invert_left_branch(specs[j], 0.25)) for j in bads]
    s = 1.0 / min(inv_s_candidates)

    if bads and theta < 1.0:
        if gamma2 > gamma1 + PROB_SUM_TOL:
            raise ValidationError("gamma2 > gamma1; inconsistent family constants")
        if gamma1 < -1.0:
            lower_ok = gamma2 > gamma1 - 1.0
        else:
            lower_ok = gamma2 > 2.0 * gamma1
    else:
        lower_ok = False

    return FamilyConstants(
        theta=theta,
        gamma1=gamma1,
        gamma2=gamma2,
        pi_b=pi_b,
        ell_max=ell_max,
        ell_min=ell_min,
        r_max=max(r_vals),
        r_min=min(r_vals),
        p_bad=p_bad,
        s=s,
        thm_lower_applicable=lower_ok,
    )


class MapFamily:
    """The full random system: map specs plus a positive probability vector.

    ``validate=False`` skips the probability-vector checks (unit-test hook for
    degenerate vectors).  A family without bad maps is allowed — it is the
    deterministic good-map system used in the exponential-contrast experiment —
    but at least one good map is always required.
    """

    def __init__(self, specs: Iterable[MapSpec], probs: Iterable[float], validate: bool = True):
        self.specs = tuple(specs)
        self.probs = tuple(float(p) for p in probs)
        if len(self.specs) != len(self.probs) or not self.specs:
            raise ValidationError("need one probability per map", code="bad_family")
        if not any(s.is_good for s in self.specs):
            raise ValidationError("family needs at least one good map", code="no_good_maps")
        if validate:
            if any(p <= 0.0 for p in self.probs):
                raise ValidationError("probabilities must be strictly positive", code="probs_not_positive")
            if abs(math.fsum(self.probs) - 1.0) > PROB_SUM_TOL:
                raise ValidationError("probabilities must sum to 1", code="probs_not_normalized")

    @property
    def n_maps(self) -> int:
        return len(self.specs)

    @cached_property
    def good_indices(self) -> tuple:
        return tuple(j for j, s in enumerate(self.specs) if s.is_good)

    @cached_property
    def bad_indices(self) -> tuple:
        return tuple(j for j, s in enumerate(self.specs) if not s.is_good)

    @cached_property
    def derived(self) -> FamilyConstants:
        return family_constants(self)

    # dense per-index tables for the orbit/return engines
    @cached_property
    def kind_codes(self) -> np.ndarray:
        return np.array([0 if s.is_good else 1 for s in self.specs], dtype=np.int8)

    @cached_property
    def exponents(self) -> np.ndarray:
        return np.array([s.exponent for s in self.specs], dtype=np.float64)

    @cached_property
    def cum_probs(self) -> np.ndarray:
        # one entry per map; the last is 1 up to rounding and is excluded
        # from searchsorted so draws can never map past the final index
        return np.cumsum(np.asarray(self.probs, dtype=np.float64))[:-1]

    @cached_property
    def reentry_gap_thresholds(self) -> np.ndarray:
        """Gap thresholds of the windows J_j: a point with gap below (good,
        strict) or at-or-below (bad) the threshold of the next symbol is in
        its window."""
        thr = np.empty(self.n_maps, dtype=np.float64)
        for j, s in enumerate(self.specs):
            e = s.exponent
            if s.is_good:
                thr[j] = math.pow(2.0, -1.0 / e)
            else:
                thr[j] = math.pow(e, 1.0 / (1.0 - e))
        return thr

    def _require_bad(self, word: Sequence[int]) -> Sequence[int]:
        for j in word:
            if self.specs[j].is_good:
                raise DomainError(f"index {j} is not a bad map")
        return word

    def spec_label(self, j: int) -> str:
        s = self.specs[j]
        return f"{'g' if s.is_good else 'b'}{s.exponent:g}"

    def to_dict(self) -> dict:
        return {
            "maps": [
                {"kind": s.kind.value, "exponent": s.exponent} for s in self.specs
            ],
            "probs": list(self.probs),
        }

    def __repr__(self):
        parts = ", ".join(
            f"{self.spec_label(j)}:p={p:g}" for j, p in enumerate(self.probs)
        )
        return f"MapFamily({parts})"


def family_from_json(doc: Union[str, dict]) -> MapFamily:
    """Build a family from the JSON schema {"maps": [{"kind", "exponent"}], "probs": [...]}."""
    data = json.loads(doc) if isinstance(doc, str) else doc
    if not isinstance(data, dict) or "maps" not in data or "probs" not in data:
        raise ValidationError('family JSON needs "maps" and "probs"', code="bad_family_json")
    specs = []
    for entry in data["maps"]:
        try:
            kind = MapKind(entry["kind"])
            specs.append(MapSpec(kind, float(entry["exponent"])))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad map entry {entry!r}", code="bad_family_json") from exc
    return MapFamily(specs, data["probs"])


def family_to_json(family: MapFamily) -> str:
    return json.dumps(family.to_dict(), sort_keys=True)


def _check_unit_interval(x: float) -> float:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"point must lie in [0, 1], got {x}")
    return float(x)


def _check_unit_interval_array(x: np.ndarray):
    if np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("points must lie in [0, 1]")
