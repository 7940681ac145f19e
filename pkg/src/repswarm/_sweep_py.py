"""Pure numpy fallback for the compiled sweep kernel."""

import numpy as np

CHUNK = 8192


def sweep_det(hr, tau, alpha, nu, omegas, omega_ref, scale_amp):
    """det(I - D_a(w) HR(w)) for every w in ``omegas``."""
    hr = np.asarray(hr, dtype=complex)
    n = hr.shape[0]
    omegas = np.asarray(omegas, dtype=float)
    out = np.empty(omegas.size, dtype=complex)
    if n == 0:
        out[:] = 1.0
        return out
    eye = np.eye(n)
    for start in range(0, omegas.size, CHUNK):
        w = omegas[start:start + CHUNK]
        s = omega_ref / w if scale_amp else np.ones_like(w)
        a = (alpha[None, :] * s[:, None]) * np.exp(-1j * w[:, None] * nu[None, :])
        hw = hr[None] * np.exp(-1j * (w - omega_ref)[:, None, None] * tau[None])
        out[start:start + CHUNK] = np.linalg.det(eye[None] - a[:, :, None] * hw)
    return out
