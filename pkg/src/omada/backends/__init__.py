"""Kernel backend selection.

The compiled extension (``omada.backends._core``) is used when it built
successfully; otherwise the pure numpy fallback takes over. Set
``OMADA_BACKEND=pure`` or ``OMADA_BACKEND=compiled`` to force a choice.
"""

import contextlib
import os

from . import pure

try:
    from . import _core
except ImportError:
    _core = None

_BY_NAME = {"pure": pure}
if _core is not None:
    _BY_NAME["compiled"] = _core


def _select():
    forced = os.environ.get("OMADA_BACKEND")
    if forced:
        if forced not in _BY_NAME:
            raise RuntimeError(
                f"OMADA_BACKEND={forced!r} not available; "
                f"choices: {sorted(_BY_NAME)}"
            )
        return _BY_NAME[forced]
    return _core if _core is not None else pure


_active = _select()


def get_backend():
    """The currently active kernel module."""
    return _active


def available_backends():
    return sorted(_BY_NAME)


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch backends (tests and benchmarks)."""
    global _active
    prev = _active
    _active = _BY_NAME[name]
    try:
        yield _active
    finally:
        _active = prev
