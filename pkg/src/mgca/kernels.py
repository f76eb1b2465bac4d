"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy/pure
Python reference implementations are used. Set ``MGCA_PURE_PYTHON=1`` to
force the fallback.
"""

import os

from . import _pykernels

_force_python = os.environ.get("MGCA_PURE_PYTHON", "").strip() not in ("", "0")

if _force_python:
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND: str = _impl.BACKEND

tiou = _impl.tiou
tiou_matrix = _impl.tiou_matrix
aps_targets = _impl.aps_targets
assign_targets = _impl.assign_targets
score_order = _impl.score_order
nms = _impl.nms
match_detections = _impl.match_detections


def available_backends() -> dict:
    """Map backend name to module for every backend importable here."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
