"""Pick the compiled kernels when available; ``QCONV_PURE_PYTHON=1`` forces the fallback."""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

if os.environ.get("QCONV_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        log.info("compiled kernels unavailable; using pure-Python fallback")
        kernels = _fallback

COMPILED = kernels is not _fallback
BACKEND = "cython" if COMPILED else "python"
