"""Numba switch.

Hot kernels are compiled with ``numba.njit`` unless the environment variable
``HOCONTACT_DISABLE_NUMBA`` is set to a truthy value (or numba is not
importable), in which case the vectorised numpy fallbacks are used instead.
The choice can also be flipped at runtime with :func:`use_numba`, which is
what the tests and the benchmark do to exercise both paths.
"""

import contextlib
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_FALSY = {"", "0", "false", "no", "off"}

AVAILABLE = numba is not None
_enabled = AVAILABLE and os.environ.get("HOCONTACT_DISABLE_NUMBA", "").lower() in _FALSY


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def enabled():
    return _enabled


def set_enabled(flag):
    global _enabled
    if flag and not AVAILABLE:
        raise RuntimeError("numba is not installed")
    _enabled = bool(flag)


@contextlib.contextmanager
def use_numba(flag):
    """Temporarily select the compiled (True) or numpy (False) kernels."""
    previous = _enabled
    set_enabled(flag)
    try:
        yield
    finally:
        set_enabled(previous)
