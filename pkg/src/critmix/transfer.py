"""Ulam discretization of the probability-averaged transfer operator.

Matrix entries are exact cell-overlap fractions computed from the monotone
branch inverses (no quadrature): entry (i, k) is the probability-weighted
fraction of cell i that lands in cell k under one random step.  Cells are
[i/n, (i+1)/n) with the last cell closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DomainError, NonConvergenceError
from .maps import MapFamily, MapSpec
from .orbit import RngSeed, SymbolSource

__all__ = [
    "UlamMatrix",
    "DensityGrid",
    "build_ulam",
    "stationary_density",
    "stationarity_residual",
    "density_from_orbit",
    "sample_from_density",
    "mass_adjacent_to_half",
    "min_density_on_window",
    "l1_distance",
]


@dataclass
class UlamMatrix:
    grid_size: int
    matrix: sp.csr_matrix  # row-stochastic: row i = image distribution of cell i

    def row_sum_defect(self) -> float:
        sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        return float(np.max(np.abs(sums - 1.0)))


@dataclass
class DensityGrid:
    """Piecewise-constant probability density on a uniform grid of [0, 1]."""

    grid_size: int
    masses: np.ndarray
    converged: bool = True
    residual_l1: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if len(self.masses) != self.grid_size:
            raise DomainError("need one mass per grid cell")
        s = float(self.masses.sum())
        if abs(s - 1.0) > 1e-10:
            raise DomainError(f"masses must sum to 1, got {s}")
        if np.any(self.masses < 0.0):
            raise DomainError("masses must be nonnegative")

    @property
    def density(self) -> np.ndarray:
        return self.masses * self.grid_size

    def cell_edges(self) -> np.ndarray:
        return np.arange(self.grid_size + 1) / self.grid_size


def _branches(spec: MapSpec):
    """(domain, image, inverse) for the two monotone branches of one map."""
    e = spec.exponent

    def left_inv(y):
        if spec.is_good:
            return 0.5 * (1.0 - (1.0 - y) ** (1.0 / e))
        return 0.5 * (1.0 - (1.0 - 2.0 * y) ** (1.0 / e))

    left_img_hi = 1.0 if spec.is_good else 0.5
    right_inv = lambda y: 0.5 * (y + 1.0)  # noqa: E731
    return [
        ((0.0, 0.5), (0.0, left_img_hi), left_inv),
        ((0.5, 1.0), (0.0, 1.0), right_inv),
    ]


def build_ulam(family: MapFamily, grid_size: int) -> UlamMatrix:
    """Assemble the row-stochastic Ulam matrix of the averaged operator.

    Per branch, the preimages of all cell edges are computed once; the
    overlap contributions then telescope within each source cell, which
    keeps every row sum at 1 to rounding.
    """
    n = int(grid_size)
    if n < 2:
        raise DomainError("grid_size must be at least 2")
    edges = np.arange(n + 1) / n
    rows, cols, vals = [], [], []
    for j, spec in enumerate(family.specs):
        pj = family.probs[j]
        for (dom_lo, dom_hi), (img_lo, img_hi), inv in _branches(spec):
            y = np.clip(edges, img_lo, img_hi)
            x = np.array([inv(v) for v in y])
            # enforce exact branch-domain endpoints
            x = np.clip(x, dom_lo, dom_hi)
            x[0] = dom_lo if y[0] <= img_lo else x[0]
            x[-1] = dom_hi if y[-1] >= img_hi else x[-1]
            for k in range(n):
                xa, xb = x[k], x[k + 1]
                if xb <= xa:
                    continue
                i0 = min(int(xa * n), n - 1)
                i1 = max(i0, min(int(math.nextafter(xb, 0.0) * n), n - 1))
                for i in range(i0, i1 + 1):
                    lo = max(xa, edges[i])
                    hi = min(xb, edges[i + 1])
                    if hi > lo:
                        rows.append(i)
                        cols.append(k)
                        vals.append(pj * (hi - lo) * n)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    return UlamMatrix(grid_size=n, matrix=m)


def stationary_density(
    matrix: UlamMatrix, tol: float = 1e-10, iter_max: int = 10**5
) -> DensityGrid:
    """Power iteration from the uniform mass vector to the stationary one.

    Stops when the L1 step change drops below tol; raises with the last
    residual if iter_max is exhausted.
    """
    n = matrix.grid_size
    mt = matrix.matrix.T.tocsr()
    m = np.full(n, 1.0 / n)
    delta = math.inf
    for it in range(1, iter_max + 1):
        m2 = mt @ m
        m2 /= m2.sum()
        delta = float(np.abs(m2 - m).sum())
        m = m2
        if delta < tol:
            return DensityGrid(
                grid_size=n, masses=m, converged=True, residual_l1=delta, iterations=it
            )
    raise NonConvergenceError(
        f"power iteration did not reach {tol} in {iter_max} iterations",
        residual=delta,
        iterations=iter_max,
    )


def stationarity_residual(
    family: MapFamily, density: DensityGrid, matrix: Optional[UlamMatrix] = None
) -> float:
    """Max over cells of the one-step mass defect of the density."""
    if matrix is None:
        matrix = build_ulam(family, density.grid_size)
    if matrix.grid_size != density.grid_size:
        raise DomainError("matrix and density grids differ")
    pushed = matrix.matrix.T @ density.masses
    return float(np.max(np.abs(pushed - density.masses)))


def density_from_orbit(
    family: MapFamily,
    seed: RngSeed,
    n_steps: int,
    grid_size: int,
    burn_in: int = 10**4,
    block: int = 1 << 16,
) -> DensityGrid:
    """Occupation histogram of one long seeded orbit (burn-in discarded).

    Runs the laminar-exact state machine (compiled when available): deep
    excursions toward 1/2 and 1 are tracked in log coordinates and the long
    doubling descents are bulk-counted, so the histogram is free of the
    absorbing-state artifacts of plain double stepping.  n_steps counts
    orbit steps, including the burn-in.
    """
    if n_steps <= burn_in:
        raise DomainError("n_steps must exceed burn_in")
    src = SymbolSource(family, seed, block=block)
    mode, val, lg = _kernels.laminar_state(src.next_uniform())
    counts = np.zeros(grid_size, dtype=np.int64)
    kinds, exps = family.kind_codes, family.exponents
    skip = burn_in
    done = 0
    while done < n_steps:
        symbols = src.take(block)
        _, steps, mode, val, lg, skip = _kernels.histogram_laminar(
            kinds, exps, symbols, mode, val, lg, counts, skip, n_steps - done
        )
        done += steps
        if steps == 0:
            break
    total = counts.sum()
    if total <= 0:
        raise DomainError("burn-in consumed the whole orbit")
    return DensityGrid(grid_size=grid_size, masses=counts / total)


def sample_from_density(density: DensityGrid, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws from a piecewise-constant density."""
    cum = np.concatenate(([0.0], np.cumsum(density.masses)))
    cum[-1] = 1.0
    q = rng.random(size)
    idx = np.searchsorted(cum, q, side="right") - 1
    idx = np.clip(idx, 0, density.grid_size - 1)
    mass = density.masses[idx]
    frac = np.where(mass > 0.0, (q - cum[idx]) / np.where(mass > 0.0, mass, 1.0), 0.5)
    return (idx + frac) / density.grid_size


def mass_adjacent_to_half(density: DensityGrid) -> float:
    """Combined mass of the two cells touching 1/2 (needs an even grid)."""
    n = density.grid_size
    if n % 2:
        raise DomainError("diagnostic needs an even grid so 1/2 is a cell edge")
    return float(density.masses[n // 2 - 1] + density.masses[n // 2])


def min_density_on_window(density: DensityGrid, exclude_adjacent: int = 0) -> float:
    """Minimum cell density over cells inside (1/2, 3/4).

    exclude_adjacent drops that many cells nearest to 1/2 (the stationary
    density is unbounded there, so sup-side statements must skip them;
    the minimum normally sits in the interior either way).
    """
    n = density.grid_size
    if n % 4:
        raise DomainError("window diagnostic needs a grid divisible by 4")
    lo = n // 2 + exclude_adjacent
    hi = 3 * n // 4
    if hi <= lo:
        raise DomainError("window too small at this grid")
    return float(density.density[lo:hi].min())


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    if a.grid_size != b.grid_size:
        raise DomainError("grids differ")
    return float(np.abs(a.masses - b.masses).sum())
