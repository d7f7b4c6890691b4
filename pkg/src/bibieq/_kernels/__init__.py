"""Hot decoding kernels with backend selection at import time.

The compiled extension (`bibieq._kernels._core`, built from Cython) is
used when available; otherwise the pure-Python/numpy implementation in
`_python` takes over with identical semantics.  Set BIBIEQ_KERNELS to
``python`` or ``compiled`` to force a backend (the latter raises if the
extension is missing).
"""

import os

_forced = os.environ.get("BIBIEQ_KERNELS", "").strip().lower()

if _forced == "python":
    from . import _python as backend
    BACKEND = "python"
elif _forced == "compiled":
    from . import _core as backend  # type: ignore[attr-defined]
    BACKEND = "compiled"
else:
    try:
        from . import _core as backend  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _python as backend
        BACKEND = "python"

__all__ = ["backend", "BACKEND"]
