"""Uplink performance: composite channel, colored noise, capacity, SINR and MSE.

Rates use base-2 logarithms unless ``base`` says otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelSet, RepeaterConfig, effective_G, repeater_response

__all__ = [
    "TooManyUsers",
    "ZeroCombiner",
    "UplinkSystem",
    "UserState",
    "assemble",
    "received_cov",
    "sum_capacity",
    "capacity_region_constraints",
    "sinr",
    "mmse_combiner",
    "mmse_combiners",
    "sinr_mmse",
    "mse",
    "user_rates",
    "weighted_sum_rate",
    "blue_variance_toy",
    "blue_toy_matrix",
    "placement_gain",
    "placement_snr",
    "write_rates_csv",
]


class TooManyUsers(ValueError):
    pass


class ZeroCombiner(ValueError):
    pass


def _log(x, base):
    return np.log(x) / math.log(base)


@dataclass(frozen=True)
class UplinkSystem:
    """Composite channel ``H`` (M x K) with noise covariance ``Sigma`` (M x M)."""

    H: np.ndarray
    Sigma: np.ndarray
    sigma_b2: float
    sigma_r2: float

    def __post_init__(self):
        if self.sigma_b2 <= 0:
            raise ValueError("sigma_b2 must be positive")
        if self.sigma_r2 < 0:
            raise ValueError("sigma_r2 must be nonnegative")
        m = self.H.shape[0]
        if self.Sigma.shape != (m, m):
            raise ValueError("Sigma must be M x M")
        scale = max(1.0, float(np.max(np.abs(self.Sigma))))
        if np.max(np.abs(self.Sigma - self.Sigma.conj().T)) > 1e-12 * scale:
            raise ValueError("Sigma is not Hermitian")

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]


@dataclass
class UserState:
    rho: np.ndarray
    combiners: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.combiners = np.atleast_2d(np.asarray(self.combiners, dtype=complex))
        self.gamma = np.asarray(self.gamma, dtype=float)
        if np.any(self.rho < 0) or np.any(self.gamma < 0):
            raise ValueError("powers and weights must be nonnegative")
        if self.combiners.shape[0] != self.rho.size or self.gamma.size != self.rho.size:
            raise ValueError("inconsistent number of users")


def assemble(cs: ChannelSet, cfg: RepeaterConfig, noise: tuple[float, float],
             use_full_G: bool = False) -> UplinkSystem:
    """Composite channel and aggregate noise covariance.

    With ``use_full_G`` false the swarm response is approximated by
    ``D_a``, i.e. inter-repeater coupling is ignored.
    """
    sb2, sr2 = noise
    if cs.N == 0:
        return UplinkSystem(cs.HD.copy(), sb2 * np.eye(cs.M, dtype=complex), sb2, sr2)
    if use_full_G:
        G = effective_G(cs, cfg)
    else:
        G = np.diag(repeater_response(cfg, cs.omega))
    BG = cs.HB @ G
    H = cs.HD + BG @ cs.HU
    Sigma = sb2 * np.eye(cs.M) + sr2 * (BG @ BG.conj().T)
    Sigma = 0.5 * (Sigma + Sigma.conj().T)
    return UplinkSystem(H, Sigma, sb2, sr2)


def received_cov(sys: UplinkSystem, rho) -> np.ndarray:
    """``H D_rho H^H + Sigma``."""
    rho = np.asarray(rho, dtype=float)
    R = (sys.H * rho[None, :]) @ sys.H.conj().T + sys.Sigma
    return 0.5 * (R + R.conj().T)


def _whitened(sys: UplinkSystem, cols=None) -> np.ndarray:
    L = scipy.linalg.cholesky(sys.Sigma, lower=True)
    H = sys.H if cols is None else sys.H[:, list(cols)]
    return scipy.linalg.solve_triangular(L, H, lower=True)


def _logdet_gram(Hw: np.ndarray, p: float, base: float) -> float:
    # det(I_M + p Hw Hw^H) = det(I_K + p Hw^H Hw)
    if Hw.shape[1] == 0:
        return 0.0
    A = np.eye(Hw.shape[1]) + p * (Hw.conj().T @ Hw)
    L = scipy.linalg.cholesky(0.5 * (A + A.conj().T), lower=True)
    return float(2.0 * np.sum(np.log(np.real(np.diag(L))))) / math.log(base)


def sum_capacity(sys: UplinkSystem, p_max: float, base: float = 2.0) -> float:
    """``log det(I + P_max Sigma^{-1} H H^H)`` by pre-whitening."""
    return _logdet_gram(_whitened(sys), p_max, base)


def capacity_region_constraints(sys: UplinkSystem, p_max: float, k_max: int = 10,
                                base: float = 2.0) -> list[tuple[tuple[int, ...], float]]:
    """One ``(subset, bound)`` pair per nonempty user subset."""
    K = sys.K
    if K > k_max:
        raise TooManyUsers(f"K={K} exceeds k_max={k_max}")
    Hw = _whitened(sys)
    out = []
    for r in range(1, K + 1):
        for S in itertools.combinations(range(K), r):
            out.append((S, _logdet_gram(Hw[:, list(S)], p_max, base)))
    return out


def sinr(sys: UplinkSystem, st: UserState, k: int) -> float:
    """Generalized Rayleigh quotient for user ``k`` with combiner ``c_k``."""
    c = st.combiners[k]
    if not np.any(c):
        raise ZeroCombiner(f"combiner of user {k} is zero")
    h = sys.H[:, k]
    rho_i = st.rho.copy()
    rho_i[k] = 0.0
    den = np.real(c.conj() @ received_cov(sys, rho_i) @ c)
    return float(st.rho[k] * abs(c.conj() @ h) ** 2 / den)


def mmse_combiners(sys: UplinkSystem, rho) -> np.ndarray:
    """All MMSE combiners as rows, ``c_k = sqrt(rho_k) R^{-1} h_k``."""
    rho = np.asarray(rho, dtype=float)
    fac = scipy.linalg.cho_factor(received_cov(sys, rho), lower=True)
    X = scipy.linalg.cho_solve(fac, sys.H)
    return (X * np.sqrt(rho)[None, :]).T


def mmse_combiner(sys: UplinkSystem, st: UserState, k: int) -> np.ndarray:
    return mmse_combiners(sys, st.rho)[k]


def sinr_mmse(sys: UplinkSystem, rho) -> np.ndarray:
    """SINR under MMSE combining, ``1/(1 - rho_k h_k^H R^{-1} h_k) - 1``."""
    rho = np.asarray(rho, dtype=float)
    fac = scipy.linalg.cho_factor(received_cov(sys, rho), lower=True)
    X = scipy.linalg.cho_solve(fac, sys.H)
    q = rho * np.real(np.sum(sys.H.conj() * X, axis=0))
    q = np.minimum(q, 1.0 - 1e-300)
    return 1.0 / (1.0 - q) - 1.0


def mse(sys: UplinkSystem, st: UserState, k: int) -> float:
    """``c^H R c - 2 sqrt(rho_k) Re{c^H h_k} + 1``."""
    c = st.combiners[k]
    R = received_cov(sys, st.rho)
    return float(np.real(c.conj() @ R @ c) - 2.0 * math.sqrt(st.rho[k]) * np.real(c.conj() @ sys.H[:, k]) + 1.0)


def user_rates(sys: UplinkSystem, rho, base: float = 2.0) -> np.ndarray:
    return _log(1.0 + sinr_mmse(sys, rho), base)


def weighted_sum_rate(sys: UplinkSystem, rho, gamma=None, base: float = 2.0) -> float:
    r = user_rates(sys, rho, base)
    gamma = np.ones_like(r) if gamma is None else np.asarray(gamma, dtype=float)
    return float(gamma @ r)


def blue_variance_toy(alpha: float, sigma2: float) -> float:
    """Estimator variance for two orthogonal users helped by one repeater.

    Direct and repeater channels are unit-norm and mutually orthogonal, so
    the BS observes ``x1``, ``x2`` and ``alpha (x1 + x2)`` in white noise
    (see :func:`blue_toy_matrix`). Returns the per-user BLUE variance.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if math.isinf(alpha):
        return 0.5 * sigma2
    a2 = alpha * alpha
    return (1.0 + a2) / (1.0 + 2.0 * a2) * sigma2


def blue_toy_matrix(alpha: float) -> np.ndarray:
    """Projected 3 x 2 model: two direct observations plus the repeated sum."""
    return np.array([[1.0, 0.0], [0.0, 1.0], [alpha, alpha]])


def placement_gain(beta_d, beta_u, sigma_b2, sigma_r2, p_max, p_max_rep, a_max):
    """Single-user repeater gain that maximizes the received SNR.

    Full gain (limited by ``a_max`` and the repeater output power) when the
    user-to-repeater SNR beats the direct SNR, zero otherwise.
    """
    beta_d = np.asarray(beta_d, dtype=float)
    beta_u = np.asarray(beta_u, dtype=float)
    cap = np.minimum(a_max, np.sqrt(p_max_rep / (p_max * beta_u + sigma_r2)))
    # beta_u / sr2 >= beta_d / sb2, written without dividing by sr2
    helps = beta_u * sigma_b2 >= beta_d * sigma_r2
    return np.where(helps, cap, 0.0)


def placement_snr(alpha, beta_d, beta_u, beta_b, sigma_b2, sigma_r2, p_max):
    """Received SNR of one user with one amplify-and-forward repeater."""
    a2 = np.asarray(alpha, dtype=float) ** 2
    return p_max * (beta_d + a2 * beta_u * beta_b) / (sigma_b2 + a2 * beta_u * sigma_r2)


def write_rates_csv(path, rates):
    from .io import write_csv

    return write_csv(path, ["user", "rate"], [(k, r) for k, r in enumerate(rates)])
