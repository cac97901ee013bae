"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting ``SAIA_PURE_PYTHON=1``
forces the numpy fallback. ``COMPILED`` reports which one is active.
"""

import logging
import os

logger = logging.getLogger(__name__)

if os.environ.get("SAIA_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
    COMPILED = False
else:
    try:
        from . import _kernels as _impl
        COMPILED = True
    except ImportError:  # pragma: no cover - depends on the build
        logger.debug("compiled kernels unavailable, using numpy fallback")
        from . import _kernels_py as _impl
        COMPILED = False

BACKEND = "cython" if COMPILED else "python"

leg_gaussian = _impl.leg_gaussian
leg_gaussian_diag = _impl.leg_gaussian_diag
leg_logistic = _impl.leg_logistic
logistic_gradient = _impl.logistic_gradient
rho_value = _impl.rho_value
stable_on = _impl.stable_on
max_rho = _impl.max_rho
minimax_b = _impl.minimax_b
tabulate = _impl.tabulate
geyer_tau = _impl.geyer_tau

__all__ = [
    "BACKEND", "COMPILED", "leg_gaussian", "leg_gaussian_diag", "leg_logistic",
    "logistic_gradient", "rho_value", "stable_on", "max_rho", "minimax_b",
    "tabulate", "geyer_tau",
]
