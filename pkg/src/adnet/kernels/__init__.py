"""Kernel backend selection: compiled extension with a numpy fallback.

The compiled module `_ckernels` is built from the .pyx source at install
time. When it is importable it becomes the default backend; otherwise the
numpy implementation takes over transparently. Set ADNET_KERNELS=python
or ADNET_KERNELS=compiled to force a choice (forcing an unbuilt backend
raises at import). Both backends expect C-contiguous float64 arrays.
"""

import os

from ..errors import ConfigError
from . import pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"python": pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = ""
conv1d_dilated_fwd = None
conv1d_dilated_bwd = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def backend():
    """Name of the backend currently wired in ('compiled' or 'python')."""
    return _active


def set_backend(name):
    global _active, conv1d_dilated_fwd, conv1d_dilated_bwd
    if name not in _BACKENDS:
        raise ConfigError(
            f"kernel backend {name!r} is not available; built backends: {available_backends()}")
    mod = _BACKENDS[name]
    conv1d_dilated_fwd = mod.conv1d_dilated_fwd
    conv1d_dilated_bwd = mod.conv1d_dilated_bwd
    _active = name


_forced = os.environ.get("ADNET_KERNELS")
if _forced:
    set_backend(_forced)
else:
    set_backend("compiled" if _ckernels is not None else "python")
