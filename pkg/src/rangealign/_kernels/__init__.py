"""Hot-loop backends: compiled extension with a pure-Python fallback.

The compiled kernel is preferred when it imported cleanly; set the
``RANGEALIGN_BACKEND`` environment variable to ``python`` or ``cython`` to
force one.  Both backends implement the same contract and are exercised by
the same tests.
"""

from __future__ import annotations

import os

from . import _ppa_py

try:
    from . import _ppa_cy
except ImportError:  # extension not built on this interpreter
    _ppa_cy = None

_ENV_VAR = "RANGEALIGN_BACKEND"
_BACKENDS = {"python": _ppa_py}
if _ppa_cy is not None:
    _BACKENDS["cython"] = _ppa_cy


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def default_backend() -> str:
    forced = os.environ.get(_ENV_VAR)
    if forced:
        if forced not in _BACKENDS:
            raise ValueError(
                f"{_ENV_VAR}={forced!r} is not available; "
                f"choose from {available_backends()}"
            )
        return forced
    return "cython" if _ppa_cy is not None else "python"


def get_backend(name: str | None = None):
    """Resolve a backend module by name (None means the default)."""
    if name is None or name == "auto":
        name = default_backend()
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}"
        ) from None


def ppa_run(p_local, p_anchor, ranges, rotation0, translation0, max_iters,
            rel_tol, backend: str | None = None):
    impl = get_backend(backend)
    return impl.ppa_run(
        p_local, p_anchor, ranges, rotation0, translation0, max_iters, rel_tol
    )
