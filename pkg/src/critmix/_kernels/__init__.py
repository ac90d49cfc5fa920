"""Kernel backend selection: compiled extension if importable, else pure Python.

CRITMIX_KERNEL=c forces the extension (ImportError if missing),
CRITMIX_KERNEL=py forces the fallback, anything else / unset picks
the extension when available.
"""

import os

_choice = os.environ.get("CRITMIX_KERNEL", "auto").lower()

if _choice == "py":
    from . import _pyfallback as _impl
elif _choice == "c":
    from . import _core as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import _pyfallback as _impl

IMPL = _impl.IMPL
trajectory_block = _impl.trajectory_block
histogram_laminar = _impl.histogram_laminar
series_laminar = _impl.series_laminar


def laminar_state(x0: float):
    """Initial (mode, val, lg) of the laminar state machine for a point x0."""
    if x0 >= 0.5:
        return 0, float(x0), 0.0
    return 1, 1.0 - 2.0 * float(x0), 0.0


def backends():
    """Names of the importable backends (for the benchmark and tests)."""
    out = []
    try:
        from . import _core  # noqa: F401

        out.append("c")
    except ImportError:
        pass
    out.append("py")
    return out
