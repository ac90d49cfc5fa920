"""Pure-Python twins of the compiled orbit kernels.

Same operation order and the same libm functions as ``_core.pyx``, so
results are bit-identical; only the loops are slower.  Selected when the
extension is unavailable, or forced with CRITMIX_KERNEL=py.  See the
extension module for the state-machine conventions.
"""

import math

IMPL = "py"

SWITCH_LG = -900.0
PARK_LG = -46.0
CLAMP_LG = -1e300
HALF_GAP = 1.1102230246251565e-16  # 2^-53, gap of the point just left of 1/2


def _apply_map(kind, e, x):
    if x < 0.5:
        u = 1.0 - 2.0 * x
        if kind == 0:
            return 1.0 - math.pow(u, e)
        return 0.5 - 0.5 * math.pow(u, e)
    return 2.0 * x - 1.0


def trajectory_block(kinds, exps, symbols, x0, out):
    """Apply the symbol sequence to x0 in plain doubles; returns the final point."""
    n = len(symbols)
    if len(out) != n:
        raise ValueError("out must have one slot per symbol")
    x = x0
    for i in range(n):
        s = symbols[i]
        x = _apply_map(kinds[s], exps[s], x)
        out[i] = x
    return x


def histogram_laminar(kinds, exps, symbols, mode, val, lg, counts, skip, max_steps):
    """Advance the laminar state machine, binning one point per orbit step.

    Returns (symbols consumed, steps done, mode, val, lg, skip left).
    """
    grid = len(counts)
    half_left = int(math.nextafter(0.5, 0.0) * grid)
    i = 0
    nsym = len(symbols)
    steps = 0
    while steps < max_steps:
        if mode == 3:
            need = PARK_LG - lg
            if need <= float(max_steps - steps):
                k = int(math.ceil(need))
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
                val = 1.0 - math.pow(2.0, lg)
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
                b = half_left if x >= 0.5 else int(x * grid)
            else:
                b = int(val * grid)
                if b >= grid:
                    b = grid - 1
        elif mode == 1:
            if kind == 1:
                nlg = e * math.log2(val)
                if nlg < SWITCH_LG:
                    mode = 2
                    lg = nlg
                    b = half_left
                else:
                    val = math.pow(val, e)
                    x = 0.5 * (1.0 - val)
                    b = half_left if x >= 0.5 else int(x * grid)
            else:
                nlg = e * math.log2(val)
                if nlg < PARK_LG:
                    mode = 3
                    lg = nlg
                    b = grid - 1
                else:
                    d = math.pow(val, e)
                    if d > 0.5:
                        val = 2.0 * d - 1.0
                        x = 0.5 * (1.0 - val)
                        b = half_left if x >= 0.5 else int(x * grid)
                    elif d == 0.5:
                        val = HALF_GAP  # left-limit regularization
                        b = half_left
                    else:
                        mode = 0
                        val = 1.0 - d
                        b = int(val * grid)
                        if b >= grid:
                            b = grid - 1
        else:  # mode 2
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


def series_laminar(kinds, exps, symbols, mode, val, lg, out):
    """Advance the laminar state machine, writing one point per orbit step.

    Returns (symbols consumed, points produced, mode, val, lg).
    """
    i = 0
    j = 0
    nsym = len(symbols)
    cap = len(out)
    while j < cap:
        if mode == 3:
            lg += 1.0
            out[j] = 1.0 - math.pow(2.0, lg)
            j += 1
            if lg >= PARK_LG:
                mode = 0
                val = 1.0 - math.pow(2.0, lg)
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
                nlg = e * math.log2(val)
                if nlg < SWITCH_LG:
                    mode = 2
                    lg = nlg
                    out[j] = 0.5
                else:
                    val = math.pow(val, e)
                    out[j] = 0.5 * (1.0 - val)
            else:
                nlg = e * math.log2(val)
                if nlg < PARK_LG:
                    mode = 3
                    lg = nlg
                    out[j] = 1.0 - math.pow(2.0, lg)
                else:
                    d = math.pow(val, e)
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
                out[j] = 1.0 - math.pow(2.0, lg)
        j += 1
    return i, j, mode, val, lg
