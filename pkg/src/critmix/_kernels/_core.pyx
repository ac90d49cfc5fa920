# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-orbit kernels.

Must stay operation-for-operation identical to ``_pyfallback`` (same branch
logic, same libm functions), so both backends produce bit-identical orbits.

Two steppers:

* ``trajectory_block`` applies the maps literally in plain doubles (the raw
  orbit contract: each point recomputes from its predecessor via the map
  formula).  Plain doubles hit artificial absorbing states once an orbit
  gets within one ulp of the superattracting point, so this stepper is for
  short trajectories and CSV output only.

* the laminar state machine (``histogram_laminar`` / ``series_laminar``)
  tracks points near 1/2 in the gap coordinate u = 1 - 2x (switching to
  log2 u below float range) and points near 1 in log2(1 - x), so arbitrarily
  deep laminar excursions are simulated exactly; the long doubling descents
  are bulk-counted without iterating.  Statistical estimators use this one.

Laminar state: mode 0 = plain point x in [1/2, 1] (val = x);
mode 1 = left point, val = gap u; mode 2 = left point, lg = log2 gap;
mode 3 = descent toward the window, lg = log2(1 - x).  Descent steps and
deep-left steps consume no symbols beyond the ones that created them only
in the bulk-counted phase (every map acts as the common right branch
there, so the skipped symbols are never observed and the law is unchanged).
"""

from libc.math cimport ceil, log2, nextafter, pow

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPL = "c"

cdef double SWITCH_LG = -900.0  # left gap goes to log2 form below 2^-900
cdef double PARK_LG = -46.0     # descents park in log2 form below 2^-46
cdef double CLAMP_LG = -1e300
cdef double HALF_GAP = 1.1102230246251565e-16  # 2^-53, gap of the point just left of 1/2


cdef inline double _apply_map(cnp.int8_t kind, double e, double x) noexcept nogil:
    cdef double u
    if x < 0.5:
        u = 1.0 - 2.0 * x
        if kind == 0:
            return 1.0 - pow(u, e)
        return 0.5 - 0.5 * pow(u, e)
    return 2.0 * x - 1.0


def trajectory_block(cnp.int8_t[::1] kinds, double[::1] exps,
                     cnp.int64_t[::1] symbols, double x0, double[::1] out):
    """Apply the symbol sequence to x0 in plain doubles; returns the final point."""
    cdef Py_ssize_t i, n = symbols.shape[0]
    cdef double x = x0
    cdef cnp.int64_t s
    if out.shape[0] != n:
        raise ValueError("out must have one slot per symbol")
    with nogil:
        for i in range(n):
            s = symbols[i]
            x = _apply_map(kinds[s], exps[s], x)
            out[i] = x
    return x


def histogram_laminar(cnp.int8_t[::1] kinds, double[::1] exps,
                      cnp.int64_t[::1] symbols,
                      int mode, double val, double lg,
                      cnp.int64_t[::1] counts, cnp.int64_t skip,
                      cnp.int64_t max_steps):
    """Advance the laminar state machine, binning one point per orbit step.

    Returns (symbols consumed, steps done, mode, val, lg, skip left).  Stops
    when the symbol block is exhausted or max_steps orbit steps were taken;
    parked descents are bulk-counted into the top cell.
    """
    cdef cnp.int64_t grid = counts.shape[0]
    cdef cnp.int64_t half_left = <cnp.int64_t>(nextafter(0.5, 0.0) * grid)
    cdef Py_ssize_t i = 0, nsym = symbols.shape[0]
    cdef cnp.int64_t steps = 0, k, b, s
    cdef double need, e, nlg, d, x
    cdef cnp.int8_t kind
    with nogil:
        while steps < max_steps:
            if mode == 3:
                need = PARK_LG - lg  # doubling steps until the point is representable
                if need <= <double>(max_steps - steps):
                    k = <cnp.int64_t>ceil(need)
                    if k < 1:
                        k = 1
                else:
                    k = max_steps - steps
                if skip >= k:
                    skip -= k
                else:
                    counts[grid - 1] += k - skip
                    skip = 0
                lg += k
                steps += k
                if lg >= PARK_LG:
                    mode = 0
                    val = 1.0 - pow(2.0, lg)
                continue
            if i >= nsym:
                break
            s = symbols[i]
            i += 1
            kind = kinds[s]
            e = exps[s]
            if mode == 0:
                val = 2.0 * val - 1.0
                if val == 0.5:
                    # rounding landed exactly on the branch point; regularize
                    # to the left limit (sub-ulp perturbation, measure zero)
                    mode = 1
                    val = HALF_GAP
                    b = half_left
                elif val < 0.5:
                    mode = 1
                    val = 1.0 - 2.0 * val
                    x = 0.5 * (1.0 - val)
                    b = half_left if x >= 0.5 else <cnp.int64_t>(x * grid)
                else:
                    b = <cnp.int64_t>(val * grid)
                    if b >= grid:
                        b = grid - 1
            elif mode == 1:
                if kind == 1:
                    nlg = e * log2(val)
                    if nlg < SWITCH_LG:
                        mode = 2
                        lg = nlg
                        b = half_left
                    else:
                        val = pow(val, e)
                        x = 0.5 * (1.0 - val)
                        b = half_left if x >= 0.5 else <cnp.int64_t>(x * grid)
                else:
                    nlg = e * log2(val)
                    if nlg < PARK_LG:
                        mode = 3
                        lg = nlg
                        b = grid - 1
                    else:
                        d = pow(val, e)
                        if d > 0.5:
                            val = 2.0 * d - 1.0
                            x = 0.5 * (1.0 - val)
                            b = half_left if x >= 0.5 else <cnp.int64_t>(x * grid)
                        elif d == 0.5:
                            val = HALF_GAP  # left-limit regularization
                            b = half_left
                        else:
                            mode = 0
                            val = 1.0 - d
                            b = <cnp.int64_t>(val * grid)
                            if b >= grid:
                                b = grid - 1
            else:  # mode 2: left point within 2^-900 of 1/2
                if kind == 1:
                    lg = e * lg
                    if lg < CLAMP_LG:
                        lg = CLAMP_LG
                else:
                    mode = 3
                    lg = e * lg
                b = half_left if mode == 2 else grid - 1
            steps += 1
            if skip > 0:
                skip -= 1
            else:
                counts[b] += 1
    return i, steps, mode, val, lg, skip


def series_laminar(cnp.int8_t[::1] kinds, double[::1] exps,
                   cnp.int64_t[::1] symbols,
                   int mode, double val, double lg, double[::1] out):
    """Advance the laminar state machine, writing one point per orbit step.

    Emitted points are the closest representable doubles to the true orbit
    (0.5 for collapsed left gaps, values near 1 during parked descents).
    Returns (symbols consumed, points produced, mode, val, lg).
    """
    cdef Py_ssize_t i = 0, j = 0, nsym = symbols.shape[0], cap = out.shape[0]
    cdef cnp.int64_t s
    cdef double e, nlg, d, x
    cdef cnp.int8_t kind
    with nogil:
        while j < cap:
            if mode == 3:
                lg += 1.0
                out[j] = 1.0 - pow(2.0, lg)
                j += 1
                if lg >= PARK_LG:
                    mode = 0
                    val = 1.0 - pow(2.0, lg)
                continue
            if i >= nsym:
                break
            s = symbols[i]
            i += 1
            kind = kinds[s]
            e = exps[s]
            if mode == 0:
                val = 2.0 * val - 1.0
                if val == 0.5:
                    mode = 1
                    val = HALF_GAP  # left-limit regularization
                    out[j] = 0.5
                elif val < 0.5:
                    mode = 1
                    val = 1.0 - 2.0 * val
                    out[j] = 0.5 * (1.0 - val)
                else:
                    out[j] = val
            elif mode == 1:
                if kind == 1:
                    nlg = e * log2(val)
                    if nlg < SWITCH_LG:
                        mode = 2
                        lg = nlg
                        out[j] = 0.5
                    else:
                        val = pow(val, e)
                        out[j] = 0.5 * (1.0 - val)
                else:
                    nlg = e * log2(val)
                    if nlg < PARK_LG:
                        mode = 3
                        lg = nlg
                        out[j] = 1.0 - pow(2.0, lg)
                    else:
                        d = pow(val, e)
                        if d > 0.5:
                            val = 2.0 * d - 1.0
                            out[j] = 0.5 * (1.0 - val)
                        elif d == 0.5:
                            val = HALF_GAP  # left-limit regularization
                            out[j] = 0.5
                        else:
                            mode = 0
                            val = 1.0 - d
                            out[j] = val
            else:  # mode 2
                if kind == 1:
                    lg = e * lg
                    if lg < CLAMP_LG:
                        lg = CLAMP_LG
                    out[j] = 0.5
                else:
                    mode = 3
                    lg = e * lg
                    out[j] = 1.0 - pow(2.0, lg)
            j += 1
    return i, j, mode, val, lg
