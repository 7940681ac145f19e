"""Channel synthesis for the direct, user-repeater, repeater-BS and
inter-repeater links, plus the repeater swarm's effective response."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import cmat_inverse
from .scenario import Layout, Scenario, stream

__all__ = [
    "C_LIGHT",
    "LINK_CLASSES",
    "DivergentLoop",
    "LosProbability",
    "LinkModel",
    "PathlossModel",
    "ChannelSet",
    "RepeaterConfig",
    "preset",
    "pathloss_db",
    "los_probability",
    "large_scale_gain",
    "link_gain",
    "bs_array",
    "build_channels",
    "repeater_response",
    "effective_G",
    "self_interference_gain",
]

C_LIGHT = 299_792_458.0
LINK_CLASSES = ("direct", "u2r", "r2b", "r2r")
MIN_DIST_M = 1.0


class DivergentLoop(ValueError):
    """Self-interference loop gain at or above one."""


@dataclass(frozen=True)
class LosProbability:
    """LoS probability versus horizontal distance.

    ``kind`` is ``"always"``, ``"never"`` or ``"3gpp"``. The 3GPP curve is
    ``1`` up to ``d0`` and ``d0/d + exp(-d/L) (1 - d0/d)`` beyond, with the
    optional UMa user-height correction.
    """

    kind: str = "always"
    d0_m: float = 18.0
    decay_m: float = 36.0
    uma_height_term: bool = False

    def __call__(self, d2d, h_lo=1.5):
        d = np.maximum(np.asarray(d2d, dtype=float), MIN_DIST_M)
        if self.kind == "always":
            return np.ones_like(d)
        if self.kind == "never":
            return np.zeros_like(d)
        if self.kind != "3gpp":
            raise ValueError(f"unknown LoS probability kind {self.kind!r}")
        ratio = np.minimum(self.d0_m / d, 1.0)
        p = ratio + np.exp(-d / self.decay_m) * (1.0 - ratio)
        if self.uma_height_term:
            h = np.asarray(h_lo, dtype=float)
            c = (np.maximum(h - 13.0, 0.0) / 10.0) ** 1.5
            p = p * (1.0 + c * 1.25 * (d / 100.0) ** 3 * np.exp(-d / 150.0))
        return np.clip(np.where(d <= self.d0_m, 1.0, p), 0.0, 1.0)


@dataclass(frozen=True)
class LinkModel:
    """Large-scale model of one link class.

    ``kind`` selects the pathloss law:

    ``free-space``
        ``20 log10(4 pi f d / c)``; always LoS, no fading.
    ``log-distance``
        ``intercept + slope log10(d / reference)`` with separate LoS and
        NLoS coefficient triples.
    ``tr38901-uma`` / ``tr38901-umi``
        The dual-slope UMa / UMi street-canyon formulas.
    """

    kind: str = "free-space"
    los_coeffs: tuple = (0.0, 20.0, 1.0)
    nlos_coeffs: tuple = (0.0, 20.0, 1.0)
    los_prob: LosProbability = LosProbability()
    shadow_los_db: float = 0.0
    shadow_nlos_db: float = 0.0
    gain_db: float = 0.0
    force_los: bool = False

    def __post_init__(self):
        for coeffs in (self.los_coeffs, self.nlos_coeffs):
            if coeffs[1] < 0 or coeffs[2] <= 0:
                raise ValueError("slope must be >= 0 and reference distance > 0")

    @property
    def deterministic(self) -> bool:
        return self.kind == "free-space"


@dataclass(frozen=True)
class PathlossModel:
    name: str
    links: dict

    def __getitem__(self, cls: str) -> LinkModel:
        return self.links[cls]

    def replace_links(self, **kw) -> "PathlossModel":
        """Apply the same field overrides to every link class."""
        return PathlossModel(self.name, {k: dataclasses.replace(v, **kw) for k, v in self.links.items()})

    def with_link(self, cls: str, **kw) -> "PathlossModel":
        links = dict(self.links)
        links[cls] = dataclasses.replace(links[cls], **kw)
        return PathlossModel(self.name, links)

    @classmethod
    def from_config(cls, cfg, carrier_hz: float, bs_gain_db: float = 8.0) -> "PathlossModel":
        """Build from a preset name or ``{"preset": ..., <class>: {...}, "shadowing": bool}``."""
        if isinstance(cfg, str):
            return preset(cfg, carrier_hz, bs_gain_db)
        cfg = dict(cfg or {})
        model = preset(cfg.pop("preset", "tr38901"), carrier_hz, bs_gain_db)
        shadowing = cfg.pop("shadowing", True)
        if not shadowing:
            model = model.replace_links(shadow_los_db=0.0, shadow_nlos_db=0.0)
        for name, over in cfg.items():
            if name not in LINK_CLASSES:
                raise KeyError(f"unknown pathloss key {name!r}")
            over = dict(over)
            if "los_prob" in over and isinstance(over["los_prob"], dict):
                over["los_prob"] = LosProbability(**over["los_prob"])
            for key in ("los_coeffs", "nlos_coeffs"):
                if key in over:
                    over[key] = tuple(over[key])
            model = model.with_link(name, **over)
        return model


def _log_fit(intercept_at_1m, slope):
    return (intercept_at_1m, slope, 1.0)


def preset(name: str, carrier_hz: float, bs_gain_db: float = 8.0) -> PathlossModel:
    """Shipped pathloss presets.

    ``free-space``
        Exact Friis amplitude for every class; used by the stability checks.
    ``tr38901``
        UMa for direct and repeater-BS links, UMi street canyon for the
        user-repeater and inter-repeater links, with 3GPP LoS probabilities,
        shadowing and Rayleigh NLoS fading.
    ``uma-umi-approx``
        Single-slope log-distance fits of the same laws (the below-breakpoint
        LoS line and the NLoS line).
    """
    fc = carrier_hz / 1e9
    lf = 20.0 * math.log10(fc)
    uma_p = LosProbability("3gpp", 18.0, 63.0, True)
    umi_p = LosProbability("3gpp", 18.0, 36.0, False)
    if name == "free-space":
        fs = LinkModel("free-space", los_prob=LosProbability("always"))
        links = {k: fs for k in LINK_CLASSES}
        links["direct"] = dataclasses.replace(fs, gain_db=bs_gain_db)
        links["r2b"] = dataclasses.replace(fs, gain_db=bs_gain_db)
        return PathlossModel(name, links)
    if name == "tr38901":
        uma = LinkModel("tr38901-uma", los_prob=uma_p, shadow_los_db=4.0, shadow_nlos_db=6.0, gain_db=bs_gain_db)
        umi = LinkModel("tr38901-umi", los_prob=umi_p, shadow_los_db=4.0, shadow_nlos_db=7.82)
        return PathlossModel(name, {"direct": uma, "r2b": uma, "u2r": umi, "r2r": umi})
    if name == "uma-umi-approx":
        uma = LinkModel(
            "log-distance",
            los_coeffs=_log_fit(28.0 + lf, 22.0),
            nlos_coeffs=_log_fit(13.54 + lf, 39.08),
            los_prob=uma_p, shadow_los_db=4.0, shadow_nlos_db=6.0, gain_db=bs_gain_db,
        )
        umi = LinkModel(
            "log-distance",
            los_coeffs=_log_fit(32.4 + lf, 21.0),
            nlos_coeffs=_log_fit(22.4 + 21.3 * math.log10(fc), 35.3),
            los_prob=umi_p, shadow_los_db=4.0, shadow_nlos_db=7.82,
        )
        return PathlossModel(name, {"direct": uma, "r2b": uma, "u2r": umi, "r2r": umi})
    raise KeyError(f"unknown pathloss preset {name!r}")


def _tr38901_db(kind, d2d, d3d, h_hi, h_lo, fc_ghz, los):
    hb = np.maximum(h_hi - 1.0, 1e-3)
    hu = np.maximum(h_lo - 1.0, 1e-3)
    dbp = 4.0 * hb * hu * fc_ghz * 1e9 / C_LIGHT
    lf = 20.0 * np.log10(fc_ghz)
    if kind == "tr38901-uma":
        pl1 = 28.0 + 22.0 * np.log10(d3d) + lf
        pl2 = 28.0 + 40.0 * np.log10(d3d) + lf - 9.0 * np.log10(dbp**2 + (h_hi - h_lo) ** 2)
        pl_los = np.where(d2d <= dbp, pl1, pl2)
        pl_nlos = 13.54 + 39.08 * np.log10(d3d) + lf - 0.6 * (h_lo - 1.5)
    else:
        pl1 = 32.4 + 21.0 * np.log10(d3d) + lf
        pl2 = 32.4 + 40.0 * np.log10(d3d) + lf - 9.5 * np.log10(dbp**2 + (h_hi - h_lo) ** 2)
        pl_los = np.where(d2d <= dbp, pl1, pl2)
        pl_nlos = 35.3 * np.log10(d3d) + 22.4 + 21.3 * np.log10(fc_ghz) - 0.3 * (h_lo - 1.5)
    return np.where(los, pl_los, np.maximum(pl_los, pl_nlos))


def pathloss_db(link: LinkModel, d2d, d3d, h_hi, h_lo, freq_hz, los):
    """Pathloss in dB (positive), excluding antenna gain and shadowing."""
    d2d = np.maximum(np.asarray(d2d, dtype=float), MIN_DIST_M)
    d3d = np.maximum(np.asarray(d3d, dtype=float), MIN_DIST_M)
    los = np.asarray(los, dtype=bool)
    if link.kind == "free-space":
        return 20.0 * np.log10(4.0 * math.pi * freq_hz * d3d / C_LIGHT) + 0.0 * los
    if link.kind == "log-distance":
        a1, s1, r1 = link.los_coeffs
        a0, s0, r0 = link.nlos_coeffs
        return np.where(los, a1 + s1 * np.log10(d3d / r1), a0 + s0 * np.log10(d3d / r0))
    if link.kind in ("tr38901-uma", "tr38901-umi"):
        return _tr38901_db(link.kind, d2d, d3d, np.asarray(h_hi, float), np.asarray(h_lo, float), freq_hz / 1e9, los)
    raise ValueError(f"unknown pathloss kind {link.kind!r}")


def los_probability(link: LinkModel, d2d, h_lo=1.5):
    if link.force_los or link.kind == "free-space":
        return np.ones_like(np.asarray(d2d, dtype=float))
    return link.los_prob(d2d, h_lo)


def large_scale_gain(link: LinkModel, d2d, d3d, h_hi, h_lo, freq_hz, los) -> np.ndarray:
    """Linear power gain (antenna gain included, no shadowing)."""
    return 10.0 ** ((link.gain_db - pathloss_db(link, d2d, d3d, h_hi, h_lo, freq_hz, los)) / 10.0)


def _geometry(tx, rx):
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    d2d = np.hypot(tx[..., 0] - rx[..., 0], tx[..., 1] - rx[..., 1])
    d3d = np.sqrt(d2d**2 + (tx[..., 2] - rx[..., 2]) ** 2)
    h_hi = np.maximum(tx[..., 2], rx[..., 2])
    h_lo = np.minimum(tx[..., 2], rx[..., 2])
    return d2d, d3d, h_hi, h_lo


def _draw_large_scale(link, d2d, d3d, h_hi, h_lo, freq_hz, rng_los, rng_shadow, force_los=False):
    shape = np.shape(d2d)
    if link.deterministic or link.force_los or force_los:
        los = np.ones(shape, dtype=bool)
    else:
        los = rng_los.random(shape) < link.los_prob(d2d, h_lo)
    beta = large_scale_gain(link, d2d, d3d, h_hi, h_lo, freq_hz, los)
    sd = np.where(los, link.shadow_los_db, link.shadow_nlos_db)
    if np.any(sd > 0):
        beta = beta * 10.0 ** (sd * rng_shadow.standard_normal(shape) / 10.0)
    return beta, los


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def link_gain(model: PathlossModel, cls: str, tx, rx, rng: np.random.Generator, freq_hz: float,
              force_los: bool = False) -> tuple[complex, bool]:
    """Draw one scalar link coefficient.

    LoS links get amplitude ``sqrt(beta)`` and propagation phase
    ``-omega d / c``; NLoS links get ``sqrt(beta)`` times a unit-variance
    circularly-symmetric Gaussian.
    """
    link = model[cls]
    d2d, d3d, h_hi, h_lo = _geometry(tx, rx)
    if d3d <= 0:
        raise ValueError("link distance must be positive")
    beta, los = _draw_large_scale(link, d2d, d3d, h_hi, h_lo, freq_hz, rng, rng, force_los)
    beta, los = float(beta), bool(los)
    if los:
        phase = -2.0 * math.pi * freq_hz * max(float(d3d), MIN_DIST_M) / C_LIGHT
        return math.sqrt(beta) * complex(math.cos(phase), math.sin(phase)), True
    return math.sqrt(beta) * complex(_cn(rng, ())), False


def bs_array(bs_pos, m: int, freq_hz: float) -> np.ndarray:
    """Half-wavelength ULA along the y axis, centred on ``bs_pos``."""
    spacing = 0.5 * C_LIGHT / freq_hz
    off = (np.arange(m) - 0.5 * (m - 1)) * spacing
    pos = np.tile(np.asarray(bs_pos, dtype=float), (m, 1))
    pos[:, 1] += off
    return pos


@dataclass(frozen=True)
class RepeaterConfig:
    alpha: np.ndarray
    nu_s: np.ndarray = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if np.any(a < 0):
            raise ValueError("amplification gains must be nonnegative")
        nu = np.zeros_like(a) if self.nu_s is None else np.broadcast_to(np.asarray(self.nu_s, float), a.shape).copy()
        if np.any(nu < 0):
            raise ValueError("delays must be nonnegative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "nu_s", nu)

    @property
    def n(self) -> int:
        return self.alpha.size

    def check_cap(self, a_max: float) -> None:
        if np.any(self.alpha > a_max * (1 + 1e-12)):
            raise ValueError("gain above A_max")


@dataclass
class ChannelSet:
    """Channel matrices at one carrier frequency.

    ``r2r_delay_s`` holds the propagation delays of the inter-repeater links;
    :meth:`hr_at` uses them to move ``HR`` to a nearby frequency with the
    exact propagation phase and flat amplitude.
    """

    HD: np.ndarray
    HU: np.ndarray
    HB: np.ndarray
    HR: np.ndarray
    rep_delays_s: np.ndarray
    freq_hz: float
    r2r_delay_s: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.HR.shape[0]
        if self.r2r_delay_s is None:
            self.r2r_delay_s = np.zeros((n, n))
        if n and np.max(np.abs(self.HR - self.HR.T)) > 1e-12 * max(1e-300, np.max(np.abs(self.HR))):
            raise ValueError("HR must be symmetric")

    @property
    def M(self) -> int:
        return self.HD.shape[0]

    @property
    def K(self) -> int:
        return self.HD.shape[1]

    @property
    def N(self) -> int:
        return self.HR.shape[0]

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.freq_hz

    def hr_at(self, omega: float) -> np.ndarray:
        return self.HR * np.exp(-1j * (omega - self.omega) * self.r2r_delay_s)

    def default_config(self, alpha) -> RepeaterConfig:
        return RepeaterConfig(np.broadcast_to(np.asarray(alpha, float), (self.N,)), self.rep_delays_s)

    def drop_repeaters(self) -> "ChannelSet":
        m, k = self.HD.shape
        return ChannelSet(self.HD, np.zeros((0, k), complex), np.zeros((m, 0), complex), np.zeros((0, 0), complex),
                          np.zeros(0), self.freq_hz)


def build_channels(s: Scenario, layout: Layout, model: PathlossModel, trial: int = 0,
                   self_interference_db: float | None = None, rep_delay_s: float = 0.0) -> ChannelSet:
    """Synthesize all four channel matrices at the scenario carrier.

    Each randomness source (LoS draws, shadowing, fading) uses its own
    stream keyed by ``(s.seed, trial)`` and link class.
    """
    f = s.carrier_hz
    M, K = s.M, layout.user_pos.shape[0]
    N = layout.rep_pos.shape[0]
    ant = bs_array(layout.bs_pos, M, f)

    def rngs(idx):
        return (stream(s.seed, "los", trial, idx), stream(s.seed, "shadowing", trial, idx),
                stream(s.seed, "fading", trial, idx))

    def bs_links(nodes, link, idx, force):
        n = nodes.shape[0]
        r_los, r_sh, r_fd = rngs(idx)
        d2d, d3d, h_hi, h_lo = _geometry(nodes, np.broadcast_to(layout.bs_pos, nodes.shape))
        beta, los = _draw_large_scale(link, d2d, d3d, h_hi, h_lo, f, r_los, r_sh, force)
        d_ant = np.linalg.norm(ant[:, None, :] - nodes[None, :, :], axis=2)
        d_ant = np.maximum(d_ant, MIN_DIST_M)
        los_part = np.exp(-2j * math.pi * f * d_ant / C_LIGHT)
        fade = _cn(r_fd, (M, n))
        return np.sqrt(beta)[None, :] * np.where(los[None, :], los_part, fade), beta, los

    HD, beta_d, los_d = bs_links(layout.user_pos, model["direct"], 0, False)

    if N == 0:
        z = np.zeros
        return ChannelSet(HD, z((0, K), complex), z((M, 0), complex), z((0, 0), complex), z(0), f,
                          info={"beta_d": beta_d, "los_d": los_d})

    HB, beta_b, los_b = bs_links(layout.rep_pos, model["r2b"], 1, s.los_r2b_forced)

    # user -> repeater
    r_los, r_sh, r_fd = rngs(2)
    link = model["u2r"]
    d2d, d3d, h_hi, h_lo = _geometry(layout.rep_pos[:, None, :], layout.user_pos[None, :, :])
    beta_u, los_u = _draw_large_scale(link, d2d, d3d, h_hi, h_lo, f, r_los, r_sh)
    los_phase = np.exp(-2j * math.pi * f * np.maximum(d3d, MIN_DIST_M) / C_LIGHT)
    HU = np.sqrt(beta_u) * np.where(los_u, los_phase, _cn(r_fd, (N, K)))

    # repeater <-> repeater, upper triangle mirrored
    r_los, r_sh, r_fd = rngs(3)
    link = model["r2r"]
    d2d, d3d, h_hi, h_lo = _geometry(layout.rep_pos[:, None, :], layout.rep_pos[None, :, :])
    beta_r, los_r = _draw_large_scale(link, d2d, d3d, h_hi, h_lo, f, r_los, r_sh)
    tau = np.maximum(d3d, MIN_DIST_M) / C_LIGHT
    HR = np.sqrt(beta_r) * np.where(los_r, np.exp(-2j * math.pi * f * tau), _cn(r_fd, (N, N)))
    iu = np.triu_indices(N, 1)
    HR_sym = np.zeros((N, N), complex)
    HR_sym[iu] = HR[iu]
    HR_sym = HR_sym + HR_sym.T
    tau_sym = np.zeros((N, N))
    tau_sym[iu] = tau[iu]
    tau_sym = tau_sym + tau_sym.T
    if self_interference_db is not None:
        np.fill_diagonal(HR_sym, 10.0 ** (self_interference_db / 20.0))
    return ChannelSet(
        HD, HU, HB, HR_sym, np.full(N, float(rep_delay_s)), f, tau_sym,
        info={"beta_d": beta_d, "los_d": los_d, "beta_b": beta_b, "los_b": los_b,
              "beta_u": beta_u, "los_u": los_u},
    )


def repeater_response(cfg: RepeaterConfig, omega: float) -> np.ndarray:
    """Frequency response ``alpha_n exp(-j omega nu_n)`` of every repeater."""
    return cfg.alpha * np.exp(-1j * omega * cfg.nu_s)


def effective_G(cs: ChannelSet, cfg: RepeaterConfig, omega: float | None = None) -> np.ndarray:
    """Effective swarm response ``(I - D_a HR)^-1 D_a``.

    Raises :class:`~repswarm.numerics.SingularMatrix` at or inside the
    instability boundary.
    """
    omega = cs.omega if omega is None else omega
    a = repeater_response(cfg, omega)
    n = a.size
    if n == 0:
        return np.zeros((0, 0), complex)
    hr = cs.hr_at(omega)
    if not np.any(hr):
        return np.diag(a)
    return cmat_inverse(np.eye(n) - a[:, None] * hr) * a[None, :]


def self_interference_gain(alpha: float, beta_loop: float) -> float:
    """Effective gain ``alpha / (1 - alpha beta)`` of a repeater with loopback."""
    if alpha * beta_loop >= 1.0:
        raise DivergentLoop("loop gain alpha*beta must be below one")
    return alpha / (1.0 - alpha * beta_loop)
