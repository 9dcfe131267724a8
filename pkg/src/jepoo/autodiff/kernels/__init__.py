"""Kernel backend selection.

The compiled extension is preferred when importable; set ``JEPOO_KERNELS=py``
to force the numpy fallback or ``JEPOO_KERNELS=c`` to require the extension.
Both backends expose the same functions and agree to rounding error.
"""

import os

from . import pyref

_choice = os.environ.get("JEPOO_KERNELS", "auto").lower()

if _choice == "py":
    _impl = pyref
elif _choice == "c":
    from . import _ckernels as _impl
elif _choice == "auto":
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = pyref
else:
    raise ValueError(f"JEPOO_KERNELS must be auto, c, or py; got {_choice!r}")

BACKEND_NAME = _impl.BACKEND_NAME
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
maxpool12_forward = _impl.maxpool12_forward
maxpool12_backward = _impl.maxpool12_backward


def get_backend(name: str):
    """Fetch a specific backend module ("python" or "compiled") for benchmarks."""
    if name in ("python", "py"):
        return pyref
    if name in ("compiled", "c"):
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
