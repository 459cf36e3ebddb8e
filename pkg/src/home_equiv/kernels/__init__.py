"""Hot-kernel backend selection.

Imports the compiled Cython core when it is available, otherwise the NumPy
fallback. Set HOME_EQUIV_PURE_PYTHON=1 to force the fallback. Both backends
are bit-identical by construction (see fallback.py).
"""

import os

from . import fallback

if os.environ.get("HOME_EQUIV_PURE_PYTHON") == "1":
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"

bilinear_warp = _impl.bilinear_warp
vn_gate_forward = _impl.vn_gate_forward
vn_gate_backward = _impl.vn_gate_backward
adam_update = _impl.adam_update


def compiled_or_none():
    """Return the compiled backend module, or None if it is not built."""
    try:
        from . import _core
        return _core
    except ImportError:
        return None
