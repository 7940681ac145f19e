"""Experiment scenarios: parameters, node placement, noise, and RNG streams."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "STREAMS",
    "PackingFailed",
    "Scenario",
    "Layout",
    "stream",
    "place_users",
    "place_repeaters_hex",
    "place_repeaters_circle",
    "noise_power",
    "build_layout",
    "load_config",
    "dbm_to_watt",
    "watt_to_dbm",
]

# Stream ids for the counter-based generator. Changing one source of
# randomness (say, fading) leaves the others untouched.
STREAMS = {
    "placement": 1,
    "los": 2,
    "shadowing": 3,
    "fading": 4,
    "misc": 5,
}


class PackingFailed(ValueError):
    pass


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, name, *sub)``.

    ``sub`` lets callers split a stream further, e.g. per trial.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[name], *[int(s) for s in sub]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass(frozen=True)
class Scenario:
    """Single-cell deployment parameters.

    Defaults follow the FR1 setup (6 GHz, 20 MHz, 1000 m cell).
    """

    cell_radius_m: float = 1000.0
    M: int = 64
    K: int = 20
    N: int = 40
    carrier_hz: float = 6e9
    bandwidth_hz: float = 20e6
    h_bs_m: float = 25.0
    h_rep_m: float = 10.0
    h_ue_m: float = 1.5
    p_max_dbm: float = 23.0
    p_max_rep_dbm: float = 23.0
    a_max_db: float = 90.0
    noise_figure_db: float = 9.0
    noise_density_dbm_hz: float = -174.0
    rep_noise_ratio: float = 1.0
    min_ue_bs_dist_m: float = 35.0
    min_rep_bs_dist_m: float = 100.0
    seed: int = 0
    eta: float = 0.9
    los_r2b_forced: bool = True
    bs_gain_dbi: float = 8.0

    def __post_init__(self):
        for name in ("M", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.M < self.N:
            raise ValueError("need at least as many BS antennas as repeaters (M >= N)")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        for name in ("cell_radius_m", "h_bs_m", "h_rep_m", "h_ue_m", "carrier_hz", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rep_noise_ratio < 0:
            raise ValueError("rep_noise_ratio must be nonnegative")
        if self.min_ue_bs_dist_m >= self.cell_radius_m:
            raise ValueError("min_ue_bs_dist_m must be below the cell radius")

    @classmethod
    def from_mapping(cls, data: dict) -> "Scenario":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(names)
        if unknown:
            raise KeyError(f"unknown scenario keys: {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            typ = names[k].type
            if typ == "int":
                kw[k] = int(v)
            elif typ == "bool":
                kw[k] = _as_bool(v)
            else:
                kw[k] = float(v)
        return cls(**kw)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def p_max(self) -> float:
        return float(dbm_to_watt(self.p_max_dbm))

    @property
    def p_max_rep(self) -> float:
        return float(dbm_to_watt(self.p_max_rep_dbm))

    @property
    def a_max(self) -> float:
        """Maximum amplitude gain (linear)."""
        return 10.0 ** (self.a_max_db / 20.0)

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.carrier_hz


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    return bool(v)


def load_config(path) -> dict:
    """Load a JSON or YAML key-value tree."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


@dataclass
class Layout:
    bs_pos: np.ndarray
    user_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    rep_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))


def place_users(s: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Draw ``K`` user positions uniformly over the annulus around the BS.

    The radius is drawn by inverting the area CDF, so the point density is
    uniform over ``[min_ue_bs_dist_m, cell_radius_m]``.
    """
    r_in, r_out = s.min_ue_bs_dist_m, s.cell_radius_m
    u = rng.random(s.K)
    theta = rng.random(s.K) * 2.0 * math.pi
    r = np.sqrt(r_in**2 + u * (r_out**2 - r_in**2))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(s.K, s.h_ue_m)])


def _hex_points(pitch: float, radius: float, r_min: float) -> np.ndarray:
    kmax = int(math.ceil(2.0 * radius / pitch)) + 2
    i, j = np.meshgrid(np.arange(-kmax, kmax + 1), np.arange(-kmax, kmax + 1), indexing="ij")
    x = pitch * (i + 0.5 * j)
    y = pitch * (math.sqrt(3.0) / 2.0) * j
    pts = np.column_stack([x.ravel(), y.ravel()])
    r = np.hypot(pts[:, 0], pts[:, 1])
    eps = 1e-9 * radius
    return pts[(r <= radius + eps) & (r >= r_min - eps)]


def place_repeaters_hex(s: Scenario, n: int | None = None) -> np.ndarray:
    """Place repeaters on a hexagonal lattice centred at the BS.

    The pitch is the largest one (found by bisection) whose lattice has at
    least ``n`` points inside the annulus ``[min_rep_bs_dist_m, radius]``;
    the ``n`` innermost points are kept, ties broken by angle.
    """
    n = s.N if n is None else n
    if n == 0:
        return np.zeros((0, 3))
    radius, r_min = s.cell_radius_m, s.min_rep_bs_dist_m
    if r_min > radius:
        raise PackingFailed("exclusion radius exceeds the cell radius")

    def count(p):
        return _hex_points(p, radius, r_min).shape[0]

    area = math.pi * (radius**2 - r_min**2)
    lo = 0.5 * math.sqrt(area / (n * math.sqrt(3.0) / 2.0)) if area > 0 else 1.0
    while count(lo) < n:
        lo *= 0.5
        if lo < 1.0:
            raise PackingFailed(f"cannot fit {n} repeaters at pitch >= 1 m")
    hi = 2.0 * radius + 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if count(mid) >= n:
            lo = mid
        else:
            hi = mid
    if lo < 1.0:
        raise PackingFailed(f"cannot fit {n} repeaters at pitch >= 1 m")
    pts = _hex_points(lo, radius, r_min)
    r = np.round(np.hypot(pts[:, 0], pts[:, 1]), 6)
    ang = np.round(np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * math.pi), 9)
    order = np.lexsort((ang, r))[:n]
    pts = pts[order]
    return np.column_stack([pts, np.full(n, s.h_rep_m)])


def place_repeaters_circle(n: int, radius_m: float, height_m: float = 0.0) -> np.ndarray:
    """``n`` points evenly spaced on a circle, starting at angle 0."""
    if n < 2:
        raise ValueError("need at least two repeaters on the circle")
    ang = 2.0 * math.pi * np.arange(n) / n
    return np.column_stack([radius_m * np.cos(ang), radius_m * np.sin(ang), np.full(n, height_m)])


def noise_power(s: Scenario) -> tuple[float, float]:
    """Return ``(sigma_b2, sigma_r2)`` in watts."""
    if s.bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    dbm = s.noise_density_dbm_hz + s.noise_figure_db + 10.0 * math.log10(s.bandwidth_hz)
    sb2 = float(dbm_to_watt(dbm))
    return sb2, s.rep_noise_ratio * sb2


def build_layout(s: Scenario, trial: int = 0) -> Layout:
    rng = stream(s.seed, "placement", trial)
    return Layout(
        bs_pos=np.array([0.0, 0.0, s.h_bs_m]),
        user_pos=place_users(s, rng),
        rep_pos=place_repeaters_hex(s),
    )
