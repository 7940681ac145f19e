"""Weighted-MMSE block coordinate descent over combiners, powers and gains.

One pass updates, in order, the MMSE combiners, the MSE weights, the user
powers (closed form) and the repeater gains (convex QP). The swarm response
is approximated by ``D_a`` throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, RepeaterConfig
from .numerics import QpProblem, solve_qp
from .scenario import Scenario, noise_power
from .uplink import UplinkSystem, assemble, mmse_combiners, user_rates

__all__ = [
    "DegenerateMse",
    "OptConfig",
    "OptState",
    "Limits",
    "initialize",
    "update_combiners",
    "update_weights",
    "update_powers",
    "c5_caps",
    "build_alpha_qp",
    "feasibility_violations",
    "run",
    "full_g_rate",
    "write_trace_csv",
    "write_state_json",
]

XI_FLOOR = 1e-12


class DegenerateMse(RuntimeWarning):
    pass


@dataclass(frozen=True)
class OptConfig:
    eta: float = 0.9
    c3_variant: str = "first"
    enforce_c5: bool = False
    i_max: int = 50
    eps: float = 1e-3
    gamma: tuple | None = None
    base: float = 2.0
    qp_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.c3_variant not in ("first", "second"):
            raise ValueError("c3_variant must be 'first' or 'second'")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def weights(self, K: int) -> np.ndarray:
        if self.gamma is None:
            return np.ones(K)
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (K,) or np.any(g < 0):
            raise ValueError("gamma must be K nonnegative weights")
        return g


@dataclass(frozen=True)
class Limits:
    """Power budgets, gain cap and noise levels of a deployment."""

    p_max: float
    p_max_rep: float
    a_max: float
    sigma_b2: float
    sigma_r2: float

    @classmethod
    def from_scenario(cls, s: Scenario) -> "Limits":
        sb2, sr2 = noise_power(s)
        return cls(s.p_max, s.p_max_rep, s.a_max, sb2, sr2)

    @property
    def noise(self) -> tuple[float, float]:
        return self.sigma_b2, self.sigma_r2


@dataclass
class OptState:
    combiners: np.ndarray
    varpi: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    trace: list = field(default_factory=list)
    iter: int = 0

    def copy(self) -> "OptState":
        return OptState(self.combiners.copy(), self.varpi.copy(), self.rho.copy(), self.alpha.copy(),
                        list(self.trace), self.iter)


def _cfg(cs: ChannelSet, alpha) -> RepeaterConfig:
    return RepeaterConfig(np.asarray(alpha, dtype=float), cs.rep_delays_s)


def _system(cs: ChannelSet, alpha, lim: Limits) -> UplinkSystem:
    return assemble(cs, _cfg(cs, alpha), lim.noise)


def _row_sums(cs: ChannelSet) -> np.ndarray:
    return np.abs(cs.HR).sum(axis=1)


def c5_caps(cs: ChannelSet, rho, lim: Limits) -> np.ndarray:
    """Per-repeater gain cap from the repeater output power budget."""
    rx = (np.abs(cs.HU) ** 2) @ np.asarray(rho, dtype=float) + lim.sigma_r2
    with np.errstate(divide="ignore"):
        return np.sqrt(lim.p_max_rep / rx)


def initialize(cs: ChannelSet, lim: Limits, cfg: OptConfig) -> OptState:
    """Full user power and half of the largest feasible common gain."""
    K, N = cs.K, cs.N
    rho = np.full(K, lim.p_max)
    a = lim.a_max
    if N:
        s = _row_sums(cs)
        if np.max(s) > 0:
            a = min(a, cfg.eta / float(np.max(s)))
        if cfg.enforce_c5:
            a = min(a, float(np.min(c5_caps(cs, rho, lim))))
    alpha = np.full(N, 0.5 * a)
    return OptState(np.zeros((K, cs.M), complex), np.ones(K), rho, alpha)


def update_combiners(sys: UplinkSystem, st: OptState) -> np.ndarray:
    return mmse_combiners(sys, st.rho)


def update_weights(sys: UplinkSystem, st: OptState) -> np.ndarray:
    """``varpi_k = 1 / (1 - sqrt(rho_k) h_k^H c_k)`` for MMSE combiners."""
    hc = np.real(np.sum(sys.H.conj() * st.combiners.T, axis=0))
    xi = 1.0 - np.sqrt(st.rho) * hc
    if np.any(xi <= XI_FLOOR):
        warnings.warn("MSE at or below 1e-12; clamping", DegenerateMse, stacklevel=2)
        xi = np.maximum(xi, XI_FLOOR)
    return 1.0 / xi


def update_powers(sys: UplinkSystem, st: OptState, gamma, p_max: float) -> np.ndarray:
    """Closed-form power update, clamped to ``[0, p_max]``."""
    C = st.combiners  # K x M
    CH = C.conj() @ sys.H  # CH[k', k] = c_k'^H h_k
    w = np.asarray(gamma, dtype=float) * st.varpi
    num = w * np.real(np.diag(CH))
    den = w @ (np.abs(CH) ** 2)
    rho = np.zeros(sys.K)
    for k in range(sys.K):
        if num[k] <= 0.0:
            continue
        if den[k] <= 0.0:
            rho[k] = p_max
        else:
            rho[k] = min(p_max, (num[k] / den[k]) ** 2)
    return rho


def build_alpha_qp(cs: ChannelSet, st: OptState, gamma, cfg: OptConfig, lim: Limits) -> QpProblem:
    """Weighted MSE as a convex quadratic in the gains.

    ``Q = sum_k w_k Gamma_k`` and ``c = sum_k w_k psi_k`` with
    ``w_k = gamma_k varpi_k``; the box is ``[0, A_max]`` (tightened by the
    output power cap when enabled) and the rows encode the stability margin.
    """
    N = cs.N
    HBt = cs.HB * np.exp(-1j * cs.omega * cs.rep_delays_s)[None, :]
    rho = st.rho
    w = np.asarray(gamma, dtype=float) * st.varpi
    A = (cs.HU * rho[None, :]) @ cs.HU.conj().T + lim.sigma_r2 * np.eye(N)  # HU D_rho HU^H + sr2 I
    B = (cs.HU * rho[None, :]) @ cs.HD.conj().T  # HU D_rho HD^H
    Q = np.zeros((N, N))
    c = np.zeros(N)
    for k in range(cs.K):
        if w[k] == 0.0:
            continue
        ck = st.combiners[k]
        phi = HBt.conj().T @ ck
        Q += w[k] * np.real(phi.conj()[:, None] * A * phi[None, :])
        c += w[k] * np.real(phi.conj() * (B @ ck - math.sqrt(rho[k]) * cs.HU[:, k]))
    upper = np.full(N, lim.a_max)
    if cfg.enforce_c5:
        upper = np.minimum(upper, c5_caps(cs, rho, lim))
    habs = np.abs(cs.HR)
    if cfg.c3_variant == "first":
        G = np.diag(habs.sum(axis=1))
    else:
        G = habs
    keep = np.any(G > 0, axis=1)
    return QpProblem(Q, c, np.zeros(N), upper, G[keep], np.full(int(keep.sum()), cfg.eta))


def feasibility_violations(cs: ChannelSet, st: OptState, cfg: OptConfig, lim: Limits,
                           rtol: float = 1e-8) -> list[str]:
    """Names of the constraints the state violates."""
    out = []
    if np.any(st.rho < 0) or np.any(st.rho > lim.p_max * (1 + rtol)):
        out.append("C1")
    if np.any(st.alpha < 0) or np.any(st.alpha > lim.a_max * (1 + rtol)):
        out.append("C2")
    if cs.N:
        habs = np.abs(cs.HR)
        lhs = st.alpha * habs.sum(axis=1) if cfg.c3_variant == "first" else habs @ st.alpha
        if np.any(lhs > cfg.eta * (1 + rtol) + 1e-12):
            out.append("C3")
        if cfg.enforce_c5 and np.any(st.alpha > c5_caps(cs, st.rho, lim) * (1 + rtol)):
            out.append("C5")
    return out


def _rate(cs, alpha, rho, gamma, lim, base):
    sys = _system(cs, alpha, lim)
    return float(gamma @ user_rates(sys, rho, base)), sys


def run(cs: ChannelSet, lim: Limits | Scenario, cfg: OptConfig, init: OptState | None = None) -> OptState:
    """Iterate the four block updates until the objective gain drops below ``eps``.

    ``trace[0]`` is the weighted sum rate at the initial point and
    ``trace[i]`` the rate after pass ``i``. With no repeaters the gain step
    is skipped.
    """
    if isinstance(lim, Scenario):
        lim = Limits.from_scenario(lim)
    st = initialize(cs, lim, cfg) if init is None else init.copy()
    bad = feasibility_violations(cs, st, cfg, lim)
    if bad:
        raise ValueError(f"initial state violates {bad}")
    gamma = cfg.weights(cs.K)
    rate, sys = _rate(cs, st.alpha, st.rho, gamma, lim, cfg.base)
    st.trace = [rate]
    st.iter = 0
    for _ in range(cfg.i_max):
        st.combiners = update_combiners(sys, st)
        st.varpi = update_weights(sys, st)
        st.rho = update_powers(sys, st, gamma, lim.p_max)
        if cs.N:
            st.alpha = solve_qp(build_alpha_qp(cs, st, gamma, cfg, lim), tol=cfg.qp_tol)
        bad = feasibility_violations(cs, st, cfg, lim)
        if bad:
            raise RuntimeError(f"iterate violates {bad}")
        new, sys = _rate(cs, st.alpha, st.rho, gamma, lim, cfg.base)
        st.trace.append(new)
        st.iter += 1
        if abs(new - rate) <= cfg.eps:
            break
        rate = new
    # leave combiners and weights consistent with the final (rho, alpha)
    st.combiners = update_combiners(sys, st)
    st.varpi = update_weights(sys, st)
    return st


def full_g_rate(cs: ChannelSet, st: OptState, lim: Limits, gamma=None, base: float = 2.0) -> float:
    """Weighted sum rate of the final point evaluated with the full swarm response."""
    gamma = np.ones(cs.K) if gamma is None else np.asarray(gamma, dtype=float)
    sys = assemble(cs, _cfg(cs, st.alpha), lim.noise, use_full_G=True)
    return float(gamma @ user_rates(sys, st.rho, base))


def write_trace_csv(path, st: OptState):
    from .io import write_csv

    return write_csv(path, ["iteration", "weighted_sum_rate"], list(enumerate(st.trace)))


def write_state_json(path, cs: ChannelSet, st: OptState, lim: Limits, base: float = 2.0):
    from .io import write_json

    rates = user_rates(_system(cs, st.alpha, lim), st.rho, base)
    with np.errstate(divide="ignore"):
        alpha_db = [20.0 * math.log10(a) if a > 0 else None for a in st.alpha]
    return write_json(path, {
        "rho_w": st.rho,
        "alpha_db": alpha_db,
        "user_rates": rates,
        "iterations": st.iter,
        "weighted_sum_rate": st.trace[-1] if st.trace else None,
    })
