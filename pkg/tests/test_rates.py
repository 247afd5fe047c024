import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import complex_circular_rate, interference_by_loops, random_hermitian_psd, rate_by_loops
from rno.model import ChannelSet, CovSet, InvalidInputError, NetworkConfig, NumericalDomainError, ReflectState
from rno.model import proper_covariance
from rno.rates import (
    energy_efficiency,
    evaluate,
    interference_cov,
    rate_cross,
    rate_strong,
    rate_weak,
    rate_weak_own,
    rates_tin,
)

from conftest import random_channelset, random_covset


def instance(seed, L=2, K=1, N=2, M=2, R=3, proper=False):
    r = np.random.default_rng(seed)
    U = 2 * K
    ch = random_channelset(r, L, U, N, M, R)
    theta = ReflectState(np.exp(1j * r.uniform(0, 2 * np.pi, (M, R))))
    cfg = NetworkConfig(L=L, K=K, N_BS=N, M=M, N_RIS=R, p=1.0)
    return ch, theta, random_covset(r, cfg, proper=proper), cfg


def siso(h, p=1.0):
    # strong/weak pair in one cell; only the strong user transmits
    ch = ChannelSet(np.array([[[[h]], [[h]]]]), np.zeros((1, 1, 1, 1)), np.zeros((1, 2, 1, 1)))
    P = np.zeros((1, 2, 2, 2))
    P[0, 0] = proper_covariance([[p]])
    return ch, ReflectState(np.zeros((1, 1))), CovSet(P)


class TestInterference:
    def test_noise_only(self):
        ch, th, covs = siso(1.0)
        np.testing.assert_allclose(interference_cov(0, 0, {0}, ch, th, covs, 0.3), 0.15 * np.eye(2))

    def test_unit_noise_floor(self):
        ch, th, covs = siso(1.0)
        np.testing.assert_allclose(interference_cov(0, 0, {0}, ch, th, covs, 2.0), np.eye(2))

    def test_matches_loops(self):
        ch, th, covs, _ = instance(1, L=2, K=1)
        for l in range(2):
            for k in range(2):
                for ex in ({k}, {0, 1}):
                    got = interference_cov(l, k, ex, ch, th, covs, 0.7)
                    want = interference_by_loops(ch, th.theta, covs.P, l, k, ex, 0.7)
                    np.testing.assert_allclose(got, want, atol=1e-12)

    def test_dimension_mismatch(self):
        ch, th, covs, _ = instance(2)
        with pytest.raises(InvalidInputError):
            interference_cov(0, 0, {0}, ch, th, CovSet(covs.P[:, :, :2, :2]), 1.0)

    @given(st.integers(0, 10_000))
    def test_floor_at_half_noise(self, seed):
        ch, th, covs, _ = instance(seed)
        D = interference_cov(1, 0, {0}, ch, th, covs, 0.4)
        np.testing.assert_allclose(D, D.T)
        assert np.linalg.eigvalsh(D).min() >= 0.2 - 1e-12


class TestStrong:
    def test_zero_power(self):
        ch, th, covs, _ = instance(3)
        zero = CovSet(np.zeros_like(covs.P))
        assert rate_strong(0, 0, ch, th, zero, 1.0) == 0.0

    def test_siso_unit_snr_one_bit(self):
        ch, th, covs = siso(1.0)
        assert rate_strong(0, 0, ch, th, covs, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_proper_matches_complex_formula(self):
        r = np.random.default_rng(4)
        ch, th, _, cfg = instance(4, proper=True)
        Q = np.array([[random_hermitian_psd(r, 2, 0.3) for _ in range(2)] for _ in range(2)])
        P = np.array([[proper_covariance(Q[l, u]) for u in range(2)] for l in range(2)])
        got = rate_strong(1, 0, ch, th, CovSet(P, "PGS"), 0.5)
        want = complex_circular_rate(ch, th.theta, Q, 1, 0, 0, {0, 1}, 0.5)
        assert got == pytest.approx(want, abs=1e-10)

    def test_singular_noise(self):
        ch, th, covs = siso(1.0)
        with pytest.raises(NumericalDomainError):
            rate_strong(0, 0, ch, th, covs, 0.0)

    @given(st.integers(0, 10_000))
    def test_ratio_equals_difference(self, seed):
        ch, th, covs, _ = instance(seed)
        for fn, k in ((rate_strong, 0), (rate_weak_own, 1), (rate_cross, 0)):
            a = fn(1, k, ch, th, covs, 0.3)
            b = fn(1, k, ch, th, covs, 0.3, form="difference")
            assert a == pytest.approx(b, abs=1e-9)


class TestWeak:
    def test_collapses_without_strong_power(self):
        ch, th, covs, _ = instance(5, L=1)
        P = covs.P.copy()
        P[0, 0] = 0
        covs = CovSet(P)
        want = rate_by_loops(ch, th.theta, P, 0, 1, 1, {0, 1}, 1.0)
        assert rate_weak_own(0, 1, ch, th, covs, 1.0) == pytest.approx(want, abs=1e-12)

    def test_zero_weak_power(self):
        ch, th, covs, _ = instance(6)
        P = covs.P.copy()
        P[0, 1] = 0
        assert rate_weak_own(0, 1, ch, th, CovSet(P), 1.0) == 0.0
        assert rate_cross(0, 0, ch, th, CovSet(P), 1.0) == 0.0

    def test_cross_equals_own_when_symmetric(self):
        # identical channels for both users and no strong-user power
        ch, th, covs, _ = instance(7, L=1)
        d = np.array(ch.d)
        d[0, 1] = d[0, 0]
        f = np.array(ch.f)
        f[0, 1] = f[0, 0]
        ch = ChannelSet(d, ch.G, f)
        P = covs.P.copy()
        P[0, 0] = 0
        covs = CovSet(P)
        assert rate_cross(0, 0, ch, th, covs, 1.0) == pytest.approx(rate_weak_own(0, 1, ch, th, covs, 1.0))

    def test_min_of_branches(self):
        ch, th, covs, _ = instance(8)
        want = min(rate_by_loops(ch, th.theta, covs.P, 1, 1, 1, {1}, 0.2),
                   rate_by_loops(ch, th.theta, covs.P, 1, 0, 1, {1}, 0.2))
        assert rate_weak(1, 1, ch, th, covs, 0.2) == pytest.approx(want, abs=1e-12)

    @given(st.integers(0, 10_000))
    def test_weak_bounded_by_both(self, seed):
        ch, th, covs, _ = instance(seed)
        w = rate_weak(0, 1, ch, th, covs, 0.5)
        assert w <= rate_weak_own(0, 1, ch, th, covs, 0.5)
        assert w <= rate_cross(0, 0, ch, th, covs, 0.5)


class TestTIN:
    def test_weak_user_matches_noma_own_decoding(self):
        ch, th, covs, _ = instance(9)
        P = covs.P.copy()
        P[:, 0] = 0
        covs = CovSet(P)
        assert rates_tin(ch, th, covs, 1.0)[1, 1] == pytest.approx(rate_weak_own(1, 1, ch, th, covs, 1.0))

    def test_single_user_cells(self):
        r = np.random.default_rng(10)
        cfg = NetworkConfig(L=2, K=1, cluster_size=1, N_BS=2, M=2, N_RIS=2)
        ch = random_channelset(r, 2, 1, 2, 2, 2)
        th = ReflectState(np.exp(1j * r.uniform(0, 6, (2, 2))))
        covs = random_covset(r, cfg)
        rep = evaluate(ch, th, covs, cfg.with_(sigma2=0.3))
        np.testing.assert_allclose(rates_tin(ch, th, covs, 0.3), rep.r, atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_sic_helps_strong_user(self, seed):
        ch, th, covs, _ = instance(seed, K=2, N=1)
        tin = rates_tin(ch, th, covs, 0.5)
        for k in range(2):
            assert tin[0, k] <= rate_strong(0, k, ch, th, covs, 0.5) + 1e-12


class TestMonotonicity:
    @given(st.integers(0, 10_000))
    def test_more_interference_never_helps(self, seed):
        ch, th, covs, _ = instance(seed)
        r = np.random.default_rng(seed + 1)
        P = covs.P.copy()
        A = r.standard_normal((4, 4))
        P[1, 0] = P[1, 0] + 0.2 * A @ A.T
        assert rate_strong(0, 0, ch, th, CovSet(P), 0.5) <= rate_strong(0, 0, ch, th, covs, 0.5) + 1e-12
        assert rate_weak(0, 1, ch, th, CovSet(P), 0.5) <= rate_weak(0, 1, ch, th, covs, 0.5) + 1e-12


class TestEnergyEfficiency:
    def test_zero_rate(self):
        assert energy_efficiency(0.0, np.eye(2), 1.0, 2.0) == 0.0

    def test_zero_power(self):
        assert energy_efficiency(3.0, np.zeros((2, 2)), 1.5, 2.0) == pytest.approx(2.0)

    def test_direct_formula(self, rng):
        A = rng.standard_normal((4, 4))
        P = A @ A.T
        assert energy_efficiency(1.7, P, 0.4, 3.0) == pytest.approx(1.7 / (0.4 + 3.0 * np.trace(P)))

    def test_nonpositive_denominator(self):
        with pytest.raises(InvalidInputError):
            energy_efficiency(1.0, np.zeros((2, 2)), 0.0, 2.0)


class TestEvaluate:
    def test_report(self):
        ch, th, covs, cfg = instance(11, K=1)
        th = ReflectState(th.theta, "I")
        cfg = cfg.with_(sigma2=0.4, weights=[[1.0, 2.0], [0.5, 1.0]])
        rep = evaluate(ch, th, covs, cfg)
        assert np.all(rep.r >= 0)
        assert rep.min_weighted_rate == pytest.approx((cfg.lam() * rep.r).min())
        assert rep.feasible
        assert rep.r[0, 1] == pytest.approx(rate_weak(0, 1, ch, th, covs, 0.4), abs=1e-9)
        assert rep.r[1, 0] == pytest.approx(rate_strong(1, 0, ch, th, covs, 0.4), abs=1e-9)
