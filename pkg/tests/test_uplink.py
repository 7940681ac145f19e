import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from repswarm.channel import ChannelSet, RepeaterConfig
from repswarm.uplink import (
    TooManyUsers, UplinkSystem, UserState, ZeroCombiner, assemble, blue_toy_matrix, blue_variance_toy,
    capacity_region_constraints, mmse_combiner, mmse_combiners, mse, placement_gain, placement_snr, sinr,
    sinr_mmse, sum_capacity, user_rates, weighted_sum_rate,
)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def random_cs(rng, M=6, K=3, N=3, coupling=0.0):
    hr = coupling * crandn(rng, N, N)
    hr = hr + hr.T
    np.fill_diagonal(hr, 0)
    return ChannelSet(crandn(rng, M, K), crandn(rng, N, K), crandn(rng, M, N), hr, np.zeros(N), 1e9)


def random_sys(rng, M=6, K=3, sr2=0.3):
    cs = random_cs(rng, M, K)
    return assemble(cs, RepeaterConfig(rng.uniform(0, 1, cs.N)), (0.5, sr2))


def state(sys, rho, combiners=None):
    c = np.zeros((sys.K, sys.M), complex) if combiners is None else combiners
    return UserState(rho, c, np.ones(sys.K))


def test_assemble_repeaters_off(rng):
    cs = random_cs(rng)
    sys = assemble(cs, RepeaterConfig(np.zeros(3)), (0.5, 0.3))
    np.testing.assert_array_equal(sys.H, cs.HD)
    np.testing.assert_allclose(sys.Sigma, 0.5 * np.eye(6))


def test_assemble_noiseless_repeaters(rng):
    cs = random_cs(rng)
    sys = assemble(cs, RepeaterConfig([1.0, 2.0, 3.0]), (0.5, 0.0))
    np.testing.assert_allclose(sys.Sigma, 0.5 * np.eye(6))


def test_assemble_composite_channel(rng):
    cs = random_cs(rng)
    a = np.array([0.5, 1.0, 2.0])
    sys = assemble(cs, RepeaterConfig(a), (0.5, 0.3))
    np.testing.assert_allclose(sys.H, cs.HD + cs.HB @ np.diag(a) @ cs.HU)
    BG = cs.HB @ np.diag(a)
    np.testing.assert_allclose(sys.Sigma, 0.5 * np.eye(6) + 0.3 * BG @ BG.conj().T)


def test_full_g_without_coupling_matches(rng):
    cs = random_cs(rng)
    cfg = RepeaterConfig([0.5, 1.0, 2.0])
    a, b = assemble(cs, cfg, (0.5, 0.3)), assemble(cs, cfg, (0.5, 0.3), use_full_G=True)
    np.testing.assert_allclose(a.H, b.H)
    np.testing.assert_allclose(a.Sigma, b.Sigma)


def test_full_g_differs_with_coupling(rng):
    cs = random_cs(rng, coupling=0.1)
    cfg = RepeaterConfig([1.0, 1.0, 1.0])
    assert not np.allclose(assemble(cs, cfg, (0.5, 0.3)).H, assemble(cs, cfg, (0.5, 0.3), use_full_G=True).H)


def test_sigma_floor(rng):
    sys = random_sys(rng)
    assert np.min(np.linalg.eigvalsh(sys.Sigma)) >= 0.5 - 1e-12


def test_system_validation():
    with pytest.raises(ValueError):
        UplinkSystem(np.zeros((2, 1)), np.eye(2), 0.0, 0.0)
    with pytest.raises(ValueError):
        UplinkSystem(np.zeros((2, 1)), np.array([[1, 1], [0, 1]], complex), 1.0, 0.0)


def test_capacity_parallel_channels():
    H = np.eye(4)[:, :3].astype(complex)
    sys = UplinkSystem(H, 0.5 * np.eye(4, dtype=complex), 0.5, 0.0)
    assert sum_capacity(sys, 2.0) == pytest.approx(3 * math.log2(1 + 4.0))
    assert sum_capacity(sys, 2.0, base=math.e) == pytest.approx(3 * math.log(5.0))


def test_capacity_zero_channel():
    sys = UplinkSystem(np.zeros((4, 2), complex), np.eye(4, dtype=complex), 1.0, 0.0)
    assert sum_capacity(sys, 1.0) == 0.0


def test_capacity_eigen_oracle(rng):
    for _ in range(10):
        sys = random_sys(rng, M=4, K=2)
        lam = np.linalg.eigvals(np.linalg.solve(sys.Sigma, sys.H @ sys.H.conj().T)).real
        assert sum_capacity(sys, 3.0) == pytest.approx(np.sum(np.log2(1 + 3.0 * lam)), rel=1e-10)


def test_capacity_region(rng):
    sys = random_sys(rng, M=6, K=3)
    region = dict(capacity_region_constraints(sys, 2.0))
    assert len(region) == 7
    assert region[(0, 1, 2)] == sum_capacity(sys, 2.0)
    for S, v in region.items():
        for T, w in region.items():
            if set(S) < set(T):
                assert v <= w + 1e-12
    single = random_sys(rng, M=4, K=1)
    assert capacity_region_constraints(single, 2.0)[0][1] == pytest.approx(sum_capacity(single, 2.0))
    with pytest.raises(TooManyUsers):
        capacity_region_constraints(random_sys(rng, M=12, K=11), 1.0)


def test_capacity_region_orthogonal_symmetric():
    sys = UplinkSystem(np.eye(3)[:, :2].astype(complex), np.eye(3, dtype=complex), 1.0, 0.0)
    r = dict(capacity_region_constraints(sys, 1.0))
    assert r[(0,)] == pytest.approx(r[(1,)])
    assert r[(0, 1)] == pytest.approx(r[(0,)] + r[(1,)])


def test_sinr_matched_filter():
    h = np.array([[1.0], [1j], [0.5]])
    sys = UplinkSystem(h, 0.1 * np.eye(3, dtype=complex), 0.1, 0.0)
    assert sinr(sys, state(sys, [2.0], h.T), 0) == pytest.approx(2.0 * 2.25 / 0.1)


def test_sinr_orthogonal_combiner_and_zero(rng):
    sys = random_sys(rng, K=1)
    h = sys.H[:, 0]
    c = crandn(rng, sys.M)
    c = c - (h.conj() @ c) / (h.conj() @ h) * h
    assert sinr(sys, state(sys, [1.0], c[None]), 0) == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(ZeroCombiner):
        sinr(sys, state(sys, [1.0]), 0)


@given(st.integers(0, 10**6), st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_sinr_scale_invariant(seed, z):
    rng = np.random.default_rng(seed)
    sys = random_sys(rng)
    c = crandn(rng, sys.K, sys.M)
    rho = rng.uniform(0.1, 2, sys.K)
    assert sinr(sys, state(sys, rho, z * c), 1) == pytest.approx(sinr(sys, state(sys, rho, c), 1), rel=1e-9)


def test_mmse_single_user_is_matched_filter(rng):
    h = crandn(rng, 5, 1)
    sys = UplinkSystem(h, 0.2 * np.eye(5, dtype=complex), 0.2, 0.0)
    c = mmse_combiner(sys, state(sys, [1.5]), 0)
    cos = abs(c.conj() @ h[:, 0]) / (np.linalg.norm(c) * np.linalg.norm(h))
    assert cos == pytest.approx(1.0, abs=1e-10)


def test_mmse_inner_product_real_positive(rng):
    sys = random_sys(rng)
    C = mmse_combiners(sys, [1.0, 0.5, 2.0])
    ch = np.einsum("km,mk->k", C.conj(), sys.H)
    assert np.all(ch.real > 0)
    np.testing.assert_allclose(ch.imag, 0, atol=1e-12)


def test_mmse_beats_random_combiners(rng):
    for _ in range(5):
        sys = random_sys(rng)
        rho = rng.uniform(0.1, 2, sys.K)
        best = sinr(sys, state(sys, rho, mmse_combiners(sys, rho)), 0)
        for _ in range(100):
            c = crandn(rng, sys.K, sys.M)
            assert sinr(sys, state(sys, rho, c), 0) <= best * (1 + 1e-10)


def test_mmse_identities(rng):
    sys = random_sys(rng)
    rho = rng.uniform(0.1, 2, sys.K)
    C = mmse_combiners(sys, rho)
    st_ = state(sys, rho, C)
    s_id = sinr_mmse(sys, rho)
    for k in range(sys.K):
        s_q = sinr(sys, st_, k)
        assert s_q == pytest.approx(s_id[k], rel=1e-9)
        xi = mse(sys, st_, k)
        assert xi == pytest.approx(1 - math.sqrt(rho[k]) * (sys.H[:, k].conj() @ C[k]).real, abs=1e-12)
        assert math.log(xi) == pytest.approx(-math.log1p(s_id[k]), abs=1e-9)


def test_mse_of_zero_combiner(rng):
    sys = random_sys(rng)
    assert mse(sys, state(sys, [1.0, 1.0, 1.0]), 2) == 1.0


def test_rate_below_capacity(rng):
    for _ in range(20):
        sys = random_sys(rng)
        p = rng.uniform(0.1, 5)
        assert weighted_sum_rate(sys, np.full(sys.K, p)) <= sum_capacity(sys, p) + 1e-9


def test_user_rates_zero_power(rng):
    sys = random_sys(rng)
    r = user_rates(sys, [0.0, 1.0, 1.0])
    assert r[0] == 0.0 and np.all(r[1:] > 0)


def test_sigma_increases_with_gain(rng):
    cs = random_cs(rng)
    a = rng.uniform(0, 1, 3)
    b = a.copy()
    b[1] += 0.5
    sa = assemble(cs, RepeaterConfig(a), (0.5, 0.3)).Sigma
    sb = assemble(cs, RepeaterConfig(b), (0.5, 0.3)).Sigma
    assert np.min(np.linalg.eigvalsh(sb - sa)) >= -1e-12


def test_blue_toy_values():
    assert blue_variance_toy(0.0, 2.0) == 2.0
    assert blue_variance_toy(1.0, 3.0) == pytest.approx(2.0)
    assert blue_variance_toy(math.inf, 1.0) == 0.5
    assert blue_variance_toy(1e8, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        blue_variance_toy(-1.0, 1.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_blue_toy_monotone(a, b):
    lo, hi = sorted((a, b))
    assert blue_variance_toy(hi, 1.0) <= blue_variance_toy(lo, 1.0) + 1e-15


def test_blue_toy_matches_covariance():
    for a in (0.3, 1.0, 4.0):
        H = blue_toy_matrix(a)
        cov = np.linalg.inv(H.T @ H)
        assert cov[0, 0] == pytest.approx(blue_variance_toy(a, 1.0))


def test_placement_rule():
    kw = dict(sigma_b2=1.0, p_max=1.0, p_max_rep=4.0, a_max=100.0)
    # helpful repeater, power-limited gain
    assert placement_gain(1e-3, 1.0, sigma_r2=1.0, **kw) == pytest.approx(math.sqrt(4.0 / 2.0))
    # A_max-limited
    assert placement_gain(1e-3, 1e-8, sigma_r2=1e-9, **kw) == 100.0
    # repeater hears the user worse than the BS does
    assert placement_gain(1.0, 0.1, sigma_r2=1.0, **kw) == 0.0
    # noiseless repeater is always switched on
    assert placement_gain(1.0, 0.1, sigma_r2=0.0, **kw) > 0.0


def test_placement_snr():
    assert placement_snr(0.0, 2.0, 1.0, 1.0, 0.5, 0.5, 1.0) == pytest.approx(4.0)
    assert placement_snr(2.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0) == pytest.approx(4.0)
