"""One function per figure-level experiment.

Every experiment is a pure function of its :class:`ExperimentSpec`; trials
run in order and each owns its channel realization, so reruns reproduce
the output files byte for byte.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import stability as stab
from .channel import PathlossModel, RepeaterConfig, build_channels, large_scale_gain, los_probability
from .io import write_csv, write_json
from .optimizer import Limits, OptConfig, full_g_rate, run
from .scenario import Layout, Scenario, build_layout, noise_power, place_users, stream
from .uplink import assemble, placement_gain, placement_snr, sum_capacity, user_rates

__all__ = ["ExperimentSpec", "EXPERIMENTS", "run_experiment"]


@dataclass
class ExperimentSpec:
    name: str
    scenario: Scenario = field(default_factory=Scenario)
    pathloss: object = "tr38901"
    optimizer: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    out: Path = Path("out")

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise KeyError(f"unknown experiment {self.name!r}; choose from {sorted(EXPERIMENTS)}")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        self.out = Path(self.out)
        self.scenario = self.scenario.replace(seed=int(self.seed))

    def model(self, s: Scenario | None = None) -> PathlossModel:
        s = self.scenario if s is None else s
        return PathlossModel.from_config(self.pathloss, s.carrier_hz, s.bs_gain_dbi)

    def opt_config(self) -> OptConfig:
        kw = {"eta": self.scenario.eta, "enforce_c5": True}
        kw.update(self.optimizer)
        if kw.get("gamma") is not None:
            kw["gamma"] = tuple(kw["gamma"])
        return OptConfig(**kw)

    def param(self, key, default):
        return self.params.get(key, default)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario.to_dict(),
            "pathloss": self.pathloss,
            "optimizer": dataclasses.asdict(self.opt_config()),
            "params": self.params,
            "trials": self.trials,
            "seed": self.seed,
        }


def _channels(spec: ExperimentSpec, s: Scenario, trial: int):
    layout = build_layout(s, trial)
    return build_channels(s, layout, spec.model(s), trial, rep_delay_s=float(spec.param("rep_delay_s", 0.0)))


def _pad(trace, n):
    return list(trace) + [trace[-1]] * (n - len(trace))


def _run_pair(spec: ExperimentSpec, s: Scenario, trial: int, cfg: OptConfig):
    cs = _channels(spec, s, trial)
    lim = Limits.from_scenario(s)
    return cs, lim, run(cs, lim, cfg)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def exp_motivating(spec: ExperimentSpec) -> dict:
    """Two users, one repeater moved along a line parallel to theirs."""
    s = spec.scenario
    dist = float(spec.param("user_distance_m", 500.0))
    gap = float(spec.param("user_spacing_m", 40.0))
    offset = float(spec.param("line_offset_m", 40.0))
    half = float(spec.param("half_span_m", 200.0))
    step = float(spec.param("step_m", 1.0))
    window = float(spec.param("window_m", 4.0))
    alpha_db = spec.param("alpha_db", "max")
    model = spec.model()
    if spec.param("deterministic", True):
        model = model.replace_links(force_los=True, shadow_los_db=0.0, shadow_nlos_db=0.0)
    lim = Limits.from_scenario(s)
    users = np.array([[dist, -gap / 2, s.h_ue_m], [dist, gap / 2, s.h_ue_m]])
    bs = np.array([0.0, 0.0, s.h_bs_m])
    rho = np.full(2, lim.p_max)
    ys = -half + step * np.arange(int(round(2 * half / step)) + 1)
    base_cs = build_channels(s, Layout(bs, users, np.zeros((0, 3))), model)
    baseline = float(np.sum(user_rates(assemble(base_cs, RepeaterConfig(np.zeros(0)), lim.noise), rho)))
    rows = []
    for y in ys:
        rep = np.array([[dist - offset, y, s.h_rep_m]])
        cs = build_channels(s, Layout(bs, users, rep), model)
        if alpha_db == "max":
            rx = float(np.sum(np.abs(cs.HU[0]) ** 2 * rho)) + lim.sigma_r2
            a = min(lim.a_max, math.sqrt(lim.p_max_rep / rx))
        else:
            a = 10.0 ** (float(alpha_db) / 20.0)
        r = user_rates(assemble(cs, RepeaterConfig(np.array([a])), lim.noise), rho)
        rows.append([y, r.sum(), r[0], r[1], 20.0 * math.log10(a) if a > 0 else -math.inf])
    rows = np.array(rows)
    ma = uniform_filter1d(rows[:, 1], size=max(1, int(round(window / step))), mode="nearest")
    write_csv(spec.out / "motivating.csv",
              ["rep_y_m", "sum_rate", "sum_rate_ma", "rate_u1", "rate_u2", "alpha_db", "baseline"],
              [(*r[:2], m, *r[2:], baseline) for r, m in zip(rows, ma)])
    mid = int(np.argmin(np.abs(ys)))
    return {"baseline": baseline, "mid_sum_rate": float(ma[mid]), "peak_sum_rate": float(ma.max())}


def exp_placement(spec: ExperimentSpec) -> dict:
    """Received SNR of a cell-edge user as one repeater moves towards the BS."""
    s = spec.scenario
    step = float(spec.param("step_m", 5.0))
    ratios = [float(r) for r in spec.param("noise_ratios", [0.0, 1.0, 10.0])]
    model = spec.model()
    sb2, _ = noise_power(s)
    R = s.cell_radius_m
    xs = np.arange(step, R, step)

    def avg_gain(link, d2d, h_hi, h_lo, force=False):
        d3d = np.hypot(d2d, h_hi - h_lo)
        g_los = large_scale_gain(link, d2d, d3d, h_hi, h_lo, s.carrier_hz, True)
        if force:
            return g_los
        g_nlos = large_scale_gain(link, d2d, d3d, h_hi, h_lo, s.carrier_hz, False)
        p = los_probability(link, d2d, h_lo)
        return p * g_los + (1.0 - p) * g_nlos

    beta_d = float(avg_gain(model["direct"], np.array(R), s.h_bs_m, s.h_ue_m))
    beta_u = avg_gain(model["u2r"], R - xs, s.h_rep_m, s.h_ue_m)
    beta_b = avg_gain(model["r2b"], xs, s.h_bs_m, s.h_rep_m, force=s.los_r2b_forced)
    snr_direct = 10.0 * math.log10(s.p_max * beta_d / sb2)
    rows = []
    for ratio in ratios:
        sr2 = ratio * sb2
        a = placement_gain(beta_d, beta_u, sb2, sr2, s.p_max, s.p_max_rep, s.a_max)
        snr = placement_snr(a, beta_d, beta_u, beta_b, sb2, sr2, s.p_max)
        with np.errstate(divide="ignore"):
            adb = 20.0 * np.log10(a)
        rows += [(ratio, x, ad, 10.0 * math.log10(v), snr_direct) for x, ad, v in zip(xs, adb, snr)]
    write_csv(spec.out / "placement.csv", ["noise_ratio", "distance_m", "alpha_db", "snr_db", "snr_direct_db"], rows)
    return {"snr_direct_db": snr_direct}


def exp_convergence(spec: ExperimentSpec) -> dict:
    """Weighted sum rate per iteration with and without repeaters."""
    s = spec.scenario
    cfg = spec.opt_config()
    n_it = cfg.i_max + 1
    raw, cap_rows = [], []
    with_t, without_t = [], []
    for trial in range(spec.trials):
        cs, lim, st = _run_pair(spec, s, trial, cfg)
        st0 = run(cs.drop_repeaters(), lim, cfg)
        a = _pad(st.trace, n_it)
        b = _pad(st0.trace, n_it)
        with_t.append(a)
        without_t.append(b)
        raw += [(trial, i, x, y) for i, (x, y) in enumerate(zip(a, b))]
        sys = assemble(cs, RepeaterConfig(st.alpha, cs.rep_delays_s), lim.noise)
        try:
            fg = full_g_rate(cs, st, lim, base=cfg.base)
        except np.linalg.LinAlgError:
            fg = math.nan
        cap_rows.append((trial, st.trace[-1], sum_capacity(sys, lim.p_max, cfg.base), st0.trace[-1], fg, st.iter))
    mw, mo = np.mean(with_t, axis=0), np.mean(without_t, axis=0)
    write_csv(spec.out / "convergence_trials.csv", ["trial", "iteration", "rate_with", "rate_without"], raw)
    write_csv(spec.out / "convergence.csv", ["iteration", "mean_rate_with", "mean_rate_without"],
              [(i, x, y) for i, (x, y) in enumerate(zip(mw, mo))])
    write_csv(spec.out / "capacity.csv",
              ["trial", "final_rate", "sum_capacity", "rate_without", "full_g_rate", "iterations"], cap_rows)
    return {"mean_final_with": float(mw[-1]), "mean_final_without": float(mo[-1]),
            "gain_ratio": float(mw[-1] / mo[-1]) if mo[-1] > 0 else math.inf}


def _n_sweep(spec: ExperimentSpec, default):
    s = spec.scenario
    cfg = spec.opt_config()
    out = []
    for n in [int(v) for v in spec.param("n_list", default)]:
        sn = s.replace(N=n)
        for trial in range(spec.trials):
            cs, lim, st = _run_pair(spec, sn, trial, cfg)
            rates = user_rates(assemble(cs, RepeaterConfig(st.alpha, cs.rep_delays_s), lim.noise), st.rho, cfg.base)
            out.append((n, trial, st, rates))
    return out


def exp_repeater_count(spec: ExperimentSpec) -> dict:
    res = _n_sweep(spec, [0, 10, 20, 40])
    raw = [(n, t, float(np.sum(r)), float(np.mean(st.rho == 0.0))) for n, t, st, r in res]
    ns = sorted({r[0] for r in raw})
    mean = [(n, float(np.mean([r[2] for r in raw if r[0] == n]))) for n in ns]
    write_csv(spec.out / "repeater_count_trials.csv", ["N", "trial", "sum_rate", "zero_power_fraction"], raw)
    write_csv(spec.out / "repeater_count.csv", ["N", "mean_sum_rate"], mean)
    return {"mean_sum_rate": {str(n): m for n, m in mean}}


def exp_rate_cdf(spec: ExperimentSpec) -> dict:
    res = _n_sweep(spec, [0, 10, 40])
    raw = []
    for n, t, st, rates in res:
        raw += [(n, t, k, r, p) for k, (r, p) in enumerate(zip(rates, st.rho))]
    write_csv(spec.out / "rate_cdf_raw.csv", ["N", "trial", "user", "rate", "rho_w"], raw)
    cdf, summary = [], {}
    for n in sorted({r[0] for r in raw}):
        rates = np.sort([r[3] for r in raw if r[0] == n])
        cdf += [(n, r, (i + 1) / rates.size) for i, r in enumerate(rates)]
        zero = float(np.mean([r[4] == 0.0 for r in raw if r[0] == n]))
        summary[str(n)] = {"zero_power_fraction": zero, "median_rate": float(np.median(rates))}
    write_csv(spec.out / "rate_cdf.csv", ["N", "rate", "cdf"], cdf)
    return summary


def exp_eta_sweep(spec: ExperimentSpec) -> dict:
    s = spec.scenario
    grid = [float(e) for e in spec.param("eta_grid", [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])]
    check = bool(spec.param("check_nyquist", False))
    sweep = stab.SweepGrid(s.carrier_hz, float(spec.param("span_hz", s.bandwidth_hz)),
                           float(spec.param("step_hz", 100.0)))
    raw = []
    for eta in grid:
        cfg = dataclasses.replace(spec.opt_config(), eta=eta)
        for trial in range(spec.trials):
            cs, lim, st = _run_pair(spec, s, trial, cfg)
            rc = RepeaterConfig(st.alpha, cs.rep_delays_s)
            _, _, d = stab.gershgorin_metrics(cs, rc)
            wn = stab.nyquist_sweep(cs, rc, sweep).winding_number if check and cs.N else 0
            raw.append((eta, trial, st.trace[-1], d, wn))
    mean = [(e, float(np.mean([r[2] for r in raw if r[0] == e]))) for e in grid]
    write_csv(spec.out / "eta_sweep_trials.csv", ["eta", "trial", "sum_rate", "d", "winding_number"], raw)
    write_csv(spec.out / "eta_sweep.csv", ["eta", "mean_sum_rate"], mean)
    return {"mean_sum_rate": {("%g" % e): m for e, m in mean}}


def exp_circle_nyquist(spec: ExperimentSpec) -> dict:
    """Repeaters on a circle: margin sweep around the common-gain bound."""
    n = int(spec.param("n", 15))
    radius = float(spec.param("radius_m", 1000.0))
    grid = stab.SweepGrid(float(spec.param("center_hz", 2e9)), float(spec.param("span_hz", 20e6)),
                          float(spec.param("step_hz", 100.0)))
    amplitude = spec.param("amplitude", "flat")
    offsets = sorted(float(o) for o in spec.param(
        "offsets_db", [-10, -8, -6, -4, -3, -2, -1, -0.5, 0, 0.5, 1, 2]))
    images = [float(o) for o in spec.param("image_offsets_db", [-6, 0])]
    cs = stab.circle_channelset(n, radius, grid.center_hz)
    ag = stab.alpha_g(cs, grid, amplitude)
    alphas = [ag * 10.0 ** (o / 20.0) for o in offsets]
    sweep = stab.margin_sweep(cs, alphas, grid, amplitude)
    stab.write_margin_csv(spec.out / "margin.csv", sweep)
    verdicts = {}
    for o in images:
        cfg = RepeaterConfig(np.full(n, ag * 10.0 ** (o / 20.0)), cs.rep_delays_s)
        try:
            ny = stab.nyquist_sweep(cs, cfg, grid, amplitude)
        except stab.GridTooCoarse:
            verdicts["%g" % o] = None
            continue
        stab.write_nyquist_csv(spec.out / ("nyquist_%+gdB.csv" % o), ny)
        verdicts["%g" % o] = {"winding_number": ny.winding_number, "min_abs_det": ny.min_abs_det}
    at = dict(sweep)
    return {"alpha_g_db": float(stab.amp_db(ag)),
            "min_abs_det_at_alpha_g": at.get(ag, math.nan),
            "images": verdicts}


def exp_link_snr(spec: ExperimentSpec) -> dict:
    """Median pre-processing SNR at the BS of cell-edge users.

    Four figures: the direct link; a repeater transmitting at its full
    output power; the user signal relayed by the nearest repeater at the
    single-user gain rule (capped by ``A_max``); and the SNR received at that
    repeater (repeater noise equal to BS noise). Repeater noise is ignored
    at the BS throughout.
    """
    s = spec.scenario
    model = spec.model()
    sb2, _ = noise_power(s)
    direct, full, relayed, at_rep = [], [], [], []
    edge = s.replace(min_ue_bs_dist_m=s.cell_radius_m * (1 - 1e-9))
    for trial in range(spec.trials):
        lay = build_layout(s, trial)
        lay.user_pos = place_users(edge, stream(s.seed, "placement", trial))
        cs = build_channels(s, lay, model, trial)
        direct += list(s.p_max * cs.info["beta_d"] / sb2)
        if cs.N:
            d = np.linalg.norm(lay.rep_pos[:, None, :2] - lay.user_pos[None, :, :2], axis=2)
            near = np.argmin(d, axis=0)
            bu = cs.info["beta_u"][near, np.arange(cs.K)]
            bb = cs.info["beta_b"][near]
            full += list(s.p_max_rep * cs.info["beta_b"] / sb2)
            a = np.minimum(s.a_max, np.sqrt(s.p_max_rep / (s.p_max * bu)))
            relayed += list(s.p_max * a**2 * bu * bb / sb2)
            at_rep += list(s.p_max * bu / sb2)
    med_u = 10.0 * math.log10(float(np.median(direct)))
    med = {"cell_edge_user_db": med_u}
    for key, vals in (("repeater_full_power_db", full), ("via_repeater_db", relayed),
                      ("at_repeater_db", at_rep)):
        med[key] = 10.0 * math.log10(float(np.median(vals))) if vals else math.nan
    write_csv(spec.out / "link_snr.csv", ["source", "median_snr_db"], sorted(med.items()))
    return med


def exp_dump(spec: ExperimentSpec) -> dict:
    """Write the channel matrices of each trial as (row, col, re, im) CSV."""
    s = spec.scenario
    for trial in range(spec.trials):
        cs = _channels(spec, s, trial)
        for name in ("HD", "HU", "HB", "HR"):
            m = getattr(cs, name)
            rows = [(i, j, m[i, j].real, m[i, j].imag) for i in range(m.shape[0]) for j in range(m.shape[1])]
            write_csv(spec.out / f"trial{trial}_{name}.csv", ["row", "col", "re", "im"], rows)
    return {"trials": spec.trials}


EXPERIMENTS = {
    "motivating": exp_motivating,
    "placement": exp_placement,
    "convergence": exp_convergence,
    "repeater_count": exp_repeater_count,
    "rate_cdf": exp_rate_cdf,
    "eta_sweep": exp_eta_sweep,
    "circle_nyquist": exp_circle_nyquist,
    "link_snr": exp_link_snr,
    "dump": exp_dump,
}


def run_experiment(spec: ExperimentSpec) -> dict:
    spec.out.mkdir(parents=True, exist_ok=True)
    write_json(spec.out / "config.json", spec.to_dict())
    summary = EXPERIMENTS[spec.name](spec)
    write_json(spec.out / "summary.json", summary)
    return summary
