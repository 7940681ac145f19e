"""Interaction stability of a repeater swarm.

Two kinds of test are provided:

* the Nyquist test, which sweeps ``det(I - D_a(jw) HR(jw))`` over a frequency
  grid and counts how often the sampled image winds around the origin;
* the Gershgorin metrics ``D1``, ``D2`` and the common-gain bound
  ``alpha_G``, which are sufficient conditions that only need ``|HR|``.

Frequency-flat amplitude with the exact propagation phase is the default
sweep model (``amplitude="flat"``); ``amplitude="free-space"`` additionally
scales every inter-repeater amplitude by ``omega_ref / omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import C_LIGHT, ChannelSet, RepeaterConfig, repeater_response

__all__ = [
    "GridTooCoarse",
    "SweepGrid",
    "StabilityReport",
    "NyquistResult",
    "MARGINAL_DET",
    "gershgorin_metrics",
    "alpha_g",
    "nyquist_sweep",
    "winding_number",
    "circle_det_closed_form",
    "circle_channelset",
    "two_repeater_channelset",
    "two_repeater_impulse_train",
    "margin_sweep",
    "certify",
    "amp_db",
    "det_at",
    "write_nyquist_csv",
    "write_margin_csv",
]

MARGINAL_DET = 0.05
MAX_PHASE_STEP = math.pi / 2


class GridTooCoarse(RuntimeError):
    """Consecutive det samples differ in phase by more than pi/2."""


def amp_db(x):
    """Amplitude gain in dB."""
    return 20.0 * np.log10(x)


@dataclass(frozen=True)
class SweepGrid:
    center_hz: float = 2e9
    span_hz: float = 20e6
    step_hz: float = 100.0

    def __post_init__(self):
        if not self.step_hz > 0:
            raise ValueError("step must be positive")
        if self.span_hz < self.step_hz:
            raise ValueError("span must be at least one step")
        if self.center_hz - self.span_hz / 2 <= 0:
            raise ValueError("grid must stay at positive frequencies")

    @property
    def size(self) -> int:
        return int(round(self.span_hz / self.step_hz)) + 1

    def freqs(self) -> np.ndarray:
        return self.center_hz - self.span_hz / 2 + self.step_hz * np.arange(self.size)

    def omegas(self) -> np.ndarray:
        return 2.0 * math.pi * self.freqs()

    def refined(self, factor: int) -> "SweepGrid":
        return SweepGrid(self.center_hz, self.span_hz, self.step_hz / factor)


@dataclass(frozen=True)
class StabilityReport:
    d1: float
    d2: float
    d: float
    alpha_g: float
    min_abs_det: float
    winding_number: int
    gershgorin_pass: bool
    nyquist_pass: bool
    eta: float | None = None

    @property
    def marginal(self) -> bool:
        return self.min_abs_det < MARGINAL_DET


@dataclass
class NyquistResult:
    omegas: np.ndarray
    det: np.ndarray
    min_abs_det: float
    winding_number: int
    grid: SweepGrid


def _amp_scale_max(cs: ChannelSet, grid: SweepGrid | None, amplitude: str) -> float:
    if amplitude == "flat" or grid is None:
        return 1.0
    if amplitude == "free-space":
        return float(cs.omega / np.min(grid.omegas()))
    raise ValueError(f"unknown amplitude model {amplitude!r}")


def gershgorin_metrics(cs: ChannelSet, cfg: RepeaterConfig, grid: SweepGrid | None = None,
                       amplitude: str = "flat") -> tuple[float, float, float]:
    """Suprema over the grid of the row and column Gershgorin radii.

    Returns ``(d1, d2, d)`` with ``d = min(d1, d2)``.
    """
    if cs.N == 0:
        return 0.0, 0.0, 0.0
    habs = np.abs(cs.HR) * _amp_scale_max(cs, grid, amplitude)
    d1 = float(np.max(cfg.alpha * habs.sum(axis=1)))
    d2 = float(np.max(habs @ cfg.alpha))
    return d1, d2, min(d1, d2)


def alpha_g(cs: ChannelSet, grid: SweepGrid | None = None, amplitude: str = "flat") -> float:
    """Largest common gain certified by the Gershgorin condition (linear).

    ``inf`` when there is no inter-repeater coupling.
    """
    if cs.N == 0:
        return math.inf
    rows = np.abs(cs.HR).sum(axis=1) * _amp_scale_max(cs, grid, amplitude)
    worst = float(np.max(rows))
    return math.inf if worst == 0.0 else 1.0 / worst


def winding_number(det: np.ndarray) -> int:
    """Encirclements of the origin by the sampled, closed curve ``det``.

    Counter-clockwise is positive. Raises :class:`GridTooCoarse` when any
    consecutive phase increment exceeds pi/2.
    """
    det = np.asarray(det, dtype=complex)
    det = det[det != 0]
    if det.size < 2:
        return 0
    inc = np.angle(det[1:] / det[:-1])
    if np.max(np.abs(inc)) > MAX_PHASE_STEP:
        raise GridTooCoarse(f"phase step {np.max(np.abs(inc)):.3f} rad exceeds pi/2")
    total = float(np.sum(inc)) + float(np.angle(det[0] / det[-1]))
    return int(round(total / (2.0 * math.pi)))


def _sweep(cs: ChannelSet, cfg: RepeaterConfig, omegas: np.ndarray, amplitude: str) -> np.ndarray:
    if amplitude not in ("flat", "free-space"):
        raise ValueError(f"unknown amplitude model {amplitude!r}")
    return kernels.sweep_det(cs.HR, cs.r2r_delay_s, cfg.alpha, cfg.nu_s, omegas, cs.omega,
                             amplitude == "free-space")


def nyquist_sweep(cs: ChannelSet, cfg: RepeaterConfig, grid: SweepGrid, amplitude: str = "flat",
                  refine: int = 8) -> NyquistResult:
    """Sample ``det(I - D_a HR)`` over ``grid`` and count encirclements.

    If the grid is too coarse to track the phase, it is refined once by
    ``refine``; a second failure propagates :class:`GridTooCoarse`.
    """
    for attempt in range(2):
        omegas = grid.omegas()
        det = _sweep(cs, cfg, omegas, amplitude)
        try:
            wn = winding_number(det)
        except GridTooCoarse:
            if attempt == 1 or refine <= 1:
                raise
            grid = grid.refined(refine)
            continue
        return NyquistResult(omegas, det, float(np.min(np.abs(det))), wn, grid)
    raise AssertionError("unreachable")


def margin_sweep(cs: ChannelSet, alphas, grid: SweepGrid, amplitude: str = "flat",
                 nu=None) -> list[tuple[float, float]]:
    """``min_w |det(I - alpha D_nu HR)|`` for each common gain in ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(np.diff(alphas) < 0):
        raise ValueError("alphas must be sorted ascending")
    omegas = grid.omegas()
    nu = cs.rep_delays_s if nu is None else nu
    out = []
    for a in alphas:
        cfg = RepeaterConfig(np.full(cs.N, a), nu)
        out.append((float(a), float(np.min(np.abs(_sweep(cs, cfg, omegas, amplitude))))))
    return out


def certify(cs: ChannelSet, cfg: RepeaterConfig, grid: SweepGrid, eta: float | None = None,
            amplitude: str = "flat") -> StabilityReport:
    d1, d2, d = gershgorin_metrics(cs, cfg, grid, amplitude)
    ny = nyquist_sweep(cs, cfg, grid, amplitude)
    g_pass = d <= eta if eta is not None else d < 1.0
    return StabilityReport(
        d1=d1, d2=d2, d=d, alpha_g=alpha_g(cs, grid, amplitude),
        min_abs_det=ny.min_abs_det, winding_number=ny.winding_number,
        gershgorin_pass=bool(g_pass), nyquist_pass=bool(ny.winding_number == 0 and ny.min_abs_det > 0),
        eta=eta,
    )


# --------------------------------------------------------------------------
# closed-form special cases
# --------------------------------------------------------------------------


def circle_det_closed_form(n: int, radius: float, alpha: float, nu: float, omega: float,
                           omega_amp: float | None = None) -> complex:
    """Determinant for ``n`` (odd) repeaters evenly spaced on a circle.

    Uses the DFT diagonalization of the symmetric circulant ``HR`` under
    free-space propagation. Amplitudes are evaluated at ``omega_amp``
    (default ``omega``).
    """
    if n < 3 or n % 2 == 0:
        raise ValueError("n must be odd and >= 3")
    omega_amp = omega if omega_amp is None else omega_amp
    n0 = (n - 1) // 2
    i = np.arange(1, n0 + 1)
    d = 2.0 * radius * np.sin(i * math.pi / n)
    sqrt_beta = C_LIGHT / (2.0 * omega_amp * d)
    tau = d / C_LIGHT
    phase = np.exp(-1j * omega * (tau + nu))
    k = np.arange(n)
    cosines = np.cos(2.0 * math.pi * np.outer(k, i) / n)
    factors = 1.0 - 2.0 * alpha * (cosines * (sqrt_beta * phase)[None, :]).sum(axis=1)
    return complex(np.prod(factors))


def circle_channelset(n: int, radius: float, freq_hz: float, nu: float = 0.0) -> ChannelSet:
    """Free-space inter-repeater channels for ``n`` repeaters on a circle."""
    ang = 2.0 * math.pi * np.arange(n) / n
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    omega = 2.0 * math.pi * freq_hz
    off = ~np.eye(n, dtype=bool)
    tau = np.where(off, d / C_LIGHT, 0.0)
    hr = np.zeros((n, n), complex)
    hr[off] = C_LIGHT / (2.0 * omega * d[off]) * np.exp(-1j * omega * tau[off])
    hr = 0.5 * (hr + hr.T)
    return _bare_channelset(hr, tau, freq_hz, nu)


def two_repeater_channelset(beta: float, tau: float, freq_hz: float, nu: float = 0.0) -> ChannelSet:
    """Two repeaters coupled by ``sqrt(beta) exp(-s tau)``."""
    omega = 2.0 * math.pi * freq_hz
    h = math.sqrt(beta) * np.exp(-1j * omega * tau)
    hr = np.array([[0.0, h], [h, 0.0]], dtype=complex)
    t = np.array([[0.0, tau], [tau, 0.0]])
    return _bare_channelset(hr, t, freq_hz, nu)


def _bare_channelset(hr, tau, freq_hz, nu):
    n = hr.shape[0]
    z = np.zeros
    return ChannelSet(z((n, 0), complex), z((n, 0), complex), z((n, n), complex), hr,
                      np.full(n, float(nu)), freq_hz, tau)


def two_repeater_impulse_train(alpha: float, beta: float, tau: float, nu: float,
                               n_terms: int) -> list[tuple[float, float]]:
    """Loop-back impulse train of two coupled repeaters.

    Impulse ``i`` arrives at ``2 i (tau + nu)`` with amplitude
    ``(alpha^2 beta)^i``.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    g = alpha * alpha * beta
    return [(2.0 * i * (tau + nu), g**i) for i in range(n_terms)]


def det_at(cs: ChannelSet, cfg: RepeaterConfig, omega: float) -> complex:
    """Direct determinant at one frequency (flat amplitude)."""
    from .numerics import cmat_det

    a = repeater_response(cfg, omega)
    return cmat_det(np.eye(cs.N) - a[:, None] * cs.hr_at(omega))


def write_nyquist_csv(path, result: NyquistResult):
    """(omega, Re det, Im det) per grid point."""
    from .io import write_csv

    rows = zip(result.omegas, result.det.real, result.det.imag)
    return write_csv(path, ["omega_rad_s", "re_det", "im_det"], rows)


def write_margin_csv(path, sweep):
    """(alpha in dB, min |det|) per swept gain."""
    from .io import write_csv

    return write_csv(path, ["alpha_db", "min_abs_det"], [(amp_db(a), m) for a, m in sweep])
