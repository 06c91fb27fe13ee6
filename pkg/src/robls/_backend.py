"""Select the kernel implementation at import time.

The compiled extension is preferred. Set ``ROBLS_BACKEND=python`` to force the
pure-Python fallback (useful for debugging and for the backend comparison
benchmark).
"""

import logging
import os

logger = logging.getLogger(__name__)

_requested = os.environ.get("ROBLS_BACKEND", "auto").lower()

if _requested == "python":
    from . import _fallback as kernels
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        logger.info("compiled kernels unavailable; using pure-Python fallback")
        from . import _fallback as kernels
        NAME = "python"


def threads():
    """Thread cap from ``ROBLS_THREADS``, defaulting to all cores."""
    value = os.environ.get("ROBLS_THREADS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


__all__ = ["kernels", "NAME", "threads"]
