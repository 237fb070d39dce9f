"""Kernel backend selection.

The hot inner loops (convolutions, pooling) exist twice: a numba
``@njit`` implementation and a pure-numpy fallback. The active backend is
chosen once at import from the ``AUDIOLRP_BACKEND`` environment variable
(``numba`` or ``numpy``); unset means numba when importable, numpy
otherwise. ``set_backend`` exists for tests and benchmarks.
"""

import os

from .errors import ConfigError

_VALID = ("numba", "numpy")
_active = None


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve() -> str:
    env = os.environ.get("AUDIOLRP_BACKEND", "").strip().lower()
    if env:
        if env not in _VALID:
            raise ConfigError(
                f"AUDIOLRP_BACKEND must be one of {_VALID}, got {env!r}"
            )
        if env == "numba" and not numba_available():
            raise ConfigError("AUDIOLRP_BACKEND=numba but numba is not importable")
        return env
    return "numba" if numba_available() else "numpy"


def active_backend() -> str:
    global _active
    if _active is None:
        _active = _resolve()
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _VALID:
        raise ConfigError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not numba_available():
        raise ConfigError("numba backend requested but numba is not importable")
    _active = name
