import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from repswarm.channel import ChannelSet, RepeaterConfig
from repswarm.stability import (
    GridTooCoarse, SweepGrid, alpha_g, amp_db, certify, circle_channelset, circle_det_closed_form, det_at,
    gershgorin_metrics, margin_sweep, nyquist_sweep, two_repeater_channelset, two_repeater_impulse_train,
    winding_number, write_margin_csv, write_nyquist_csv,
)

# two repeaters 300 m apart: tau = 1 us, det is periodic in f with period 500 kHz
TAU = 1e-6
PAIR_GRID = SweepGrid(2e9, 2e6, 1e3)


def pair(alpha, beta, nu=0.0):
    cs = two_repeater_channelset(beta, TAU, 2e9, nu)
    return cs, RepeaterConfig(np.full(2, alpha), np.full(2, nu))


def random_swarm(rng, n, scale):
    h = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = h + h.T
    np.fill_diagonal(h, 0)
    d = rng.uniform(50, 500, (n, n))
    d = np.triu(d, 1)
    d = d + d.T
    return ChannelSet(np.zeros((1, 1)), np.zeros((n, 1)), np.zeros((1, n)), scale * h, np.zeros(n), 2e9,
                      d / 299792458.0)


def test_grid():
    g = SweepGrid(2e9, 20e6, 100.0)
    f = g.freqs()
    assert g.size == 200001
    assert f[0] == pytest.approx(1.99e9) and f[-1] == pytest.approx(2.01e9)
    with pytest.raises(ValueError):
        SweepGrid(2e9, 1.0, 10.0)
    with pytest.raises(ValueError):
        SweepGrid(2e9, 1e6, 0.0)


def test_zero_gain_is_trivially_stable():
    cs, cfg = pair(0.0, 1e-6)
    assert gershgorin_metrics(cs, cfg) == (0.0, 0.0, 0.0)
    r = nyquist_sweep(cs, cfg, PAIR_GRID)
    np.testing.assert_array_equal(r.det, 1.0)
    assert r.winding_number == 0 and r.min_abs_det == 1.0


def test_pair_gershgorin():
    cs, cfg = pair(100.0, 1e-6)
    d1, d2, d = gershgorin_metrics(cs, cfg)
    assert d1 == pytest.approx(0.1) and d2 == pytest.approx(0.1) and d == pytest.approx(0.1)
    _, _, d_2x = gershgorin_metrics(cs, RepeaterConfig(cfg.alpha * 2))
    assert d_2x == pytest.approx(2 * d)


def test_d1_d2_differ_for_unequal_gains():
    cs = random_swarm(np.random.default_rng(0), 4, 1.0)
    cfg = RepeaterConfig([1.0, 0.1, 0.1, 0.1])
    d1, d2, d = gershgorin_metrics(cs, cfg)
    h = np.abs(cs.HR)
    assert d1 == pytest.approx(np.max(cfg.alpha * h.sum(1)))
    assert d2 == pytest.approx(np.max(h @ cfg.alpha))
    assert d == min(d1, d2)


def test_alpha_g():
    cs, _ = pair(1.0, 4e-6)
    assert alpha_g(cs) == pytest.approx(500.0)
    assert alpha_g(two_repeater_channelset(0.0, TAU, 2e9)) == math.inf


def test_pair_circle_radius():
    # det = 1 - a^2 beta exp(-2 j w tau): a circle of radius 0.25 about 1
    cs, cfg = pair(0.5 / math.sqrt(1e-6), 1e-6)
    r = nyquist_sweep(cs, cfg, PAIR_GRID)
    np.testing.assert_allclose(np.abs(r.det - 1.0), 0.25, atol=1e-12)
    assert r.min_abs_det == pytest.approx(0.75, abs=1e-6)
    assert r.winding_number == 0


def test_pair_unstable_encircles():
    cs, cfg = pair(1.1 / math.sqrt(1e-6), 1e-6)
    r = nyquist_sweep(cs, cfg, PAIR_GRID)
    assert r.winding_number != 0


def test_grid_too_coarse():
    cs, cfg = pair(1.1e3, 1e-6)
    coarse = SweepGrid(2e9, 2e6, 2e5)
    with pytest.raises(GridTooCoarse):
        nyquist_sweep(cs, cfg, coarse, refine=1)
    # one automatic refinement is enough here
    assert nyquist_sweep(cs, cfg, coarse, refine=100).grid.step_hz == pytest.approx(2e3)


def test_winding_number_circle():
    t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    assert winding_number(np.exp(1j * t)) == 1
    assert winding_number(np.exp(-2j * t)) == -2
    assert winding_number(2 + np.exp(1j * t)) == 0


def test_refinement_does_not_change_verdict(rng):
    for _ in range(5):
        cs = random_swarm(rng, 4, 0.4)
        cfg = RepeaterConfig(rng.uniform(0, 1, 4))
        g = SweepGrid(2e9, 4e6, 200.0)
        a = nyquist_sweep(cs, cfg, g).winding_number
        b = nyquist_sweep(cs, cfg, g.refined(4)).winding_number
        assert a == b


@pytest.mark.parametrize("n", [3, 5, 7, 9, 11, 13, 15])
def test_circle_closed_form_matches_direct(n):
    cs = circle_channelset(n, 1000.0, 2e9)
    rng = np.random.default_rng(n)
    a = 0.7 * alpha_g(cs)
    cfg = RepeaterConfig(np.full(n, a))
    for w in 2 * np.pi * rng.uniform(1.99e9, 2.01e9, 5):
        ref = det_at(cs, cfg, w)
        got = circle_det_closed_form(n, 1000.0, a, 0.0, w, cs.omega)
        assert abs(got - ref) <= 1e-8 * abs(ref)


def test_circle_closed_form_edge_cases():
    assert circle_det_closed_form(5, 100.0, 0.0, 0.0, 1e9) == 1.0
    with pytest.raises(ValueError):
        circle_det_closed_form(4, 100.0, 1.0, 0.0, 1e9)


def test_circle_hr_is_circulant():
    hr = circle_channelset(7, 500.0, 2e9).HR
    for k in range(7):
        np.testing.assert_allclose(np.roll(hr[0], k), hr[k], rtol=0, atol=1e-9 * np.abs(hr).max())


def test_impulse_train():
    tr = two_repeater_impulse_train(1.0, 0.5, 1e-6, 1e-7, 3)
    assert [a for _, a in tr] == [1.0, 0.5, 0.25]
    assert [t for t, _ in tr] == pytest.approx([0.0, 2.2e-6, 4.4e-6])
    assert {a for _, a in two_repeater_impulse_train(1.0, 1.0, 1e-6, 0.0, 5)} == {1.0}
    tot = sum(a for _, a in two_repeater_impulse_train(1.0, 0.9, 1e-6, 0.0, 400))
    assert tot == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        two_repeater_impulse_train(1.0, 0.5, 1e-6, 0.0, 0)


def test_margin_sweep():
    cs, _ = pair(1.0, 1e-6)
    assert margin_sweep(cs, [0.0], PAIR_GRID) == [(0.0, 1.0)]
    out = margin_sweep(cs, [500.0, 900.0, 1000.0, 1100.0], PAIR_GRID)
    m = [v for _, v in out]
    assert m[0] == pytest.approx(0.75, abs=1e-6)
    assert m[2] < 1e-5  # alpha = 1/sqrt(beta)
    assert m[1] > m[2] and m[3] > m[2]
    with pytest.raises(ValueError):
        margin_sweep(cs, [2.0, 1.0], PAIR_GRID)


def test_certify_margin():
    cs, cfg = pair(0.95e3, 1e-6)
    assert certify(cs, cfg, PAIR_GRID).gershgorin_pass
    rep = certify(cs, cfg, PAIR_GRID, eta=0.9)
    assert not rep.gershgorin_pass and rep.nyquist_pass
    assert rep.d == min(rep.d1, rep.d2)


def test_free_space_amplitude_is_more_conservative():
    cs = circle_channelset(5, 300.0, 2e9)
    g = SweepGrid(2e9, 20e6, 1e4)
    assert alpha_g(cs, g, "free-space") < alpha_g(cs, g, "flat")
    with pytest.raises(ValueError):
        alpha_g(cs, g, "bogus")


def test_csv_writers(tmp_path):
    cs, cfg = pair(500.0, 1e-6)
    r = nyquist_sweep(cs, cfg, SweepGrid(2e9, 1e4, 1e3))
    p = write_nyquist_csv(tmp_path / "n.csv", r)
    lines = p.read_text().splitlines()
    assert lines[0] == "omega_rad_s,re_det,im_det" and len(lines) == 12
    q = write_margin_csv(tmp_path / "m.csv", [(10.0, 0.5)])
    assert q.read_text().splitlines()[1] == "20,0.5"


@given(st.integers(0, 10**6), st.integers(2, 6), st.floats(0.05, 0.99))
def test_gershgorin_soundness(seed, n, target):
    # D < 1 implies no encirclement
    rng = np.random.default_rng(seed)
    cs = random_swarm(rng, n, 1.0)
    alpha = rng.uniform(0.2, 1.0, n)
    _, _, d = gershgorin_metrics(cs, RepeaterConfig(alpha))
    cfg = RepeaterConfig(alpha * target / d)
    assert gershgorin_metrics(cs, cfg)[2] < 1
    assert nyquist_sweep(cs, cfg, SweepGrid(2e9, 4e6, 500.0)).winding_number == 0


@given(st.integers(0, 10**6), st.floats(1.0, 3.0))
def test_gershgorin_monotone_in_alpha(seed, factor):
    rng = np.random.default_rng(seed)
    cs = random_swarm(rng, 5, 1.0)
    a = rng.uniform(0, 1, 5)
    b = a * np.where(rng.random(5) < 0.5, factor, 1.0)
    da, db = gershgorin_metrics(cs, RepeaterConfig(a)), gershgorin_metrics(cs, RepeaterConfig(b))
    assert all(y >= x - 1e-15 for x, y in zip(da, db))


def test_amp_db():
    assert amp_db(10.0) == pytest.approx(20.0)
