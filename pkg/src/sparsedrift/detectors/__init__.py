"""Online concept-drift detectors.

Seven detectors consume a per-instance scalar (typically the 0/1
prediction-error stream) and emit one of three signals per instance:
``Signal.IN_CONTROL``, ``Signal.WARNING`` or ``Signal.DRIFT``. A drift
signal implies the detector reset itself at that instance.

Two interchangeable kernel backends exist: a compiled Cython extension
(``_native``) and a pure-Python fallback (``_pure``). The compiled backend
is picked at import time when available; set ``SPARSEDRIFT_PURE_PYTHON=1``
to force the fallback. Both produce bit-identical outputs.
"""

from __future__ import annotations

import os
from enum import IntEnum

from ..errors import ConfigError
from . import _pure

__all__ = [
    "Signal",
    "BACKEND",
    "PageHinkley",
    "DDM",
    "EDDM",
    "HDDMA",
    "HDDMW",
    "ADWIN",
    "KSWIN",
    "DETECTOR_NAMES",
    "make_detector",
    "run",
    "backends",
]


class Signal(IntEnum):
    IN_CONTROL = 0
    WARNING = 1
    DRIFT = 2


_backend = None
if os.environ.get("SPARSEDRIFT_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _native as _backend
    except ImportError:
        _backend = None
if _backend is None:
    _backend = _pure
    BACKEND = "python"
else:
    BACKEND = "compiled"

PageHinkley = _backend.PageHinkley
DDM = _backend.DDM
EDDM = _backend.EDDM
HDDMA = _backend.HDDMA
HDDMW = _backend.HDDMW
ADWIN = _backend.ADWIN
KSWIN = _backend.KSWIN
run = _backend.run

DETECTOR_NAMES = ("ph", "ddm", "eddm", "hddm_a", "hddm_w", "adwin", "kswin")

_CLASS_BY_NAME = {
    "ph": "PageHinkley",
    "ddm": "DDM",
    "eddm": "EDDM",
    "hddm_a": "HDDMA",
    "hddm_w": "HDDMW",
    "adwin": "ADWIN",
    "kswin": "KSWIN",
}


def backends() -> dict:
    """Importable kernel backends keyed by name."""
    found = {"python": _pure}
    try:
        from . import _native
        found["compiled"] = _native
    except ImportError:
        pass
    return found


def make_detector(name: str, backend=None, **config):
    """Instantiate a detector by its short name (see DETECTOR_NAMES)."""
    key = name.strip().lower()
    if key not in _CLASS_BY_NAME:
        raise ConfigError(f"unknown detector {name!r}; expected one of {DETECTOR_NAMES}")
    module = _backend if backend is None else backends()[backend]
    return getattr(module, _CLASS_BY_NAME[key])(**config)
