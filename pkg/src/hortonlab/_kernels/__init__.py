"""Kernel lane selection.

The hot sampling/accumulation kernels exist twice: a Cython extension
(``_core``) and a pure-Python mirror (``_pure``) with identical variate
protocols.  The compiled lane is preferred when importable; set
``HORTONLAB_PURE=1`` to force the pure lane.
"""

import os

from . import _pure

_forced_pure = os.environ.get("HORTONLAB_PURE", "") == "1"
_core = None
if not _forced_pure:
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        _core = None

active = _core if _core is not None else _pure
ACTIVE_LANE = getattr(active, "LANE", "pure")


def get_lane(name: str | None = None):
    """Return a kernel module by name ('compiled', 'pure', or None=active)."""
    if name is None:
        return active
    if name == "pure":
        return _pure
    if name == "compiled":
        if _core is None:
            raise ImportError("the compiled kernel lane is not available")
        return _core
    raise ValueError(f"unknown kernel lane {name!r}")


def available_lanes():
    out = ["pure"]
    if _core is not None:
        out.insert(0, "compiled")
    return out
