"""Select the compiled kernel when available, else the numpy fallback.

Set ``PRIEST_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

_python = _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _python}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_requested = os.environ.get("PRIEST_BACKEND", "").strip().lower()
if _requested and _requested not in BACKENDS:
    raise ImportError(f"PRIEST_BACKEND={_requested!r} unavailable; choose from {sorted(BACKENDS)}")
DEFAULT = _requested or ("compiled" if _compiled is not None else "python")


def get(name: str | None = None):
    """Kernel module for ``name`` (default: the import-time selection)."""
    name = DEFAULT if name is None else name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(BACKENDS)}") from None
