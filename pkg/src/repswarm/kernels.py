"""Kernel selection: the compiled extension when it imports, numpy otherwise.

Set ``REPSWARM_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _sweep_py

try:
    if os.environ.get("REPSWARM_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by environment")
    from . import _sweep as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"

__all__ = ["BACKEND", "sweep_det"]


def sweep_det(hr, tau, alpha, nu, omegas, omega_ref, scale_amp=False, backend=None):
    """Evaluate ``det(I - D_a(w) HR(w))`` over a frequency grid.

    ``HR(w) = hr * exp(-j (w - omega_ref) tau)``, optionally with amplitude
    scaled by ``omega_ref / w``; ``a_n(w) = alpha_n exp(-j w nu_n)``.
    """
    hr = np.ascontiguousarray(hr, dtype=complex)
    tau = np.ascontiguousarray(tau, dtype=float)
    alpha = np.ascontiguousarray(alpha, dtype=float)
    nu = np.ascontiguousarray(nu, dtype=float)
    omegas = np.ascontiguousarray(omegas, dtype=float)
    impl = {"cython": _compiled, "numpy": _sweep_py, None: _compiled or _sweep_py}[backend]
    if impl is None:
        raise RuntimeError("compiled kernels are not available")
    return impl.sweep_det(hr, tau, alpha, nu, omegas, float(omega_ref), bool(scale_amp))
