import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rno.model import ChannelSet, CovSet, InvalidInputError, NetworkConfig, NumericalDomainError, ReflectState
from rno.rates import rate_terms, real_channels, term_rates
from rno.surrogates import (
    logdet_ratio_lower_bound,
    logdet_affine_upper,
    rate_lower_bounds_in_P,
    rate_lower_bounds_in_theta,
)

from conftest import random_channelset, random_covset


def logdet(X):
    return np.linalg.slogdet(X)[1]


def rand_psd(r, n, scale=1.0):
    A = r.standard_normal((n, n))
    return scale * A @ A.T


def instance(seed, L=2, K=1, N=1, M=2, R=2, sic=True):
    r = np.random.default_rng(seed)
    cfg = NetworkConfig(L=L, K=K, N_BS=N, M=M, N_RIS=R, p=1.0, sigma2=0.3, sic_enabled=sic)
    ch = random_channelset(r, L, 2 * K, N, M, R)
    th = ReflectState(np.exp(1j * r.uniform(0, 2 * np.pi, (M, R))))
    return r, cfg, ch, th, random_covset(r, cfg)


def true_terms(cfg, ch, th, P):
    return term_rates(real_channels(ch, th), P, rate_terms(cfg), cfg.sigma2)


class TestAffineUpper:
    def test_tangent(self, rng):
        A, B, P0 = rand_psd(rng, 2) + np.eye(2), rng.standard_normal((2, 4)), rand_psd(rng, 4)
        b = logdet_affine_upper(A, B, P0)
        assert b(P0) == pytest.approx(logdet(A + B @ P0 @ B.T), abs=1e-12)

    def test_zero_B(self, rng):
        A = rand_psd(rng, 2) + np.eye(2)
        b = logdet_affine_upper(A, np.zeros((2, 4)), rand_psd(rng, 4))
        assert b.const == pytest.approx(logdet(A))
        assert np.all(b.grad == 0)

    def test_gradient_psd(self, rng):
        b = logdet_affine_upper(np.eye(2), rng.standard_normal((2, 4)), rand_psd(rng, 4))
        assert np.linalg.eigvalsh(b.grad).min() >= -1e-12

    def test_singular(self):
        with pytest.raises(NumericalDomainError):
            logdet_affine_upper(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2))

    @given(st.integers(0, 10_000))
    def test_upper_bound(self, seed):
        r = np.random.default_rng(seed)
        A, B = rand_psd(r, 2) + 0.1 * np.eye(2), r.standard_normal((2, 4))
        b = logdet_affine_upper(A, B, rand_psd(r, 4))
        P = rand_psd(r, 4, 3.0)
        assert b(P) >= logdet(A + B @ P @ B.T) - 1e-9

    def test_gradient_finite_differences(self, rng):
        A, B, P0 = rand_psd(rng, 2) + np.eye(2), rng.standard_normal((2, 4)), rand_psd(rng, 4)
        b = logdet_affine_upper(A, B, P0)
        h = 1e-6
        for i in range(4):
            for j in range(i, 4):
                E = np.zeros((4, 4))
                E[i, j] = E[j, i] = 1.0
                fd = (logdet(A + B @ (P0 + h * E) @ B.T) - logdet(A + B @ (P0 - h * E) @ B.T)) / (2 * h)
                assert np.sum(b.grad * E) == pytest.approx(fd, rel=1e-4, abs=1e-9)


class TestCovarianceSurrogates:
    @given(st.integers(0, 10_000), st.booleans())
    def test_tangent_at_anchor(self, seed, sic):
        _, cfg, ch, th, covs = instance(seed, sic=sic)
        s = rate_lower_bounds_in_P(covs, th, ch, cfg)
        np.testing.assert_allclose(s.term_values(covs.P), true_terms(cfg, ch, th, covs.P), atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_minorant(self, seed):
        r, cfg, ch, th, covs = instance(seed, N=2)
        s = rate_lower_bounds_in_P(covs, th, ch, cfg)
        P = random_covset(r, cfg).P
        assert np.all(s.term_values(P) <= true_terms(cfg, ch, th, P) + 1e-9)

    def test_interference_free_single_user_exact(self, rng):
        cfg = NetworkConfig(L=1, K=1, cluster_size=1, N_BS=2, M=1, N_RIS=2, sigma2=0.5)
        ch = random_channelset(rng, 1, 1, 2, 1, 2)
        th = ReflectState(np.ones((1, 2)))
        s = rate_lower_bounds_in_P(random_covset(rng, cfg), th, ch, cfg)
        assert np.all(s.g == 0)
        for _ in range(5):
            P = random_covset(rng, cfg).P
            np.testing.assert_allclose(s.term_values(P), true_terms(cfg, ch, th, P), atol=1e-12)

    def test_gradient_matches_true_rate(self):
        _, cfg, ch, th, covs = instance(3, N=2)
        s = rate_lower_bounds_in_P(covs, th, ch, cfg)
        h = 1e-6
        r = np.random.default_rng(0)
        for _ in range(4):
            E = np.zeros_like(covs.P)
            l, u = r.integers(2), r.integers(2)
            S = r.standard_normal((4, 4))
            E[l, u] = S + S.T
            fd_true = (true_terms(cfg, ch, th, covs.P + h * E) - true_terms(cfg, ch, th, covs.P - h * E)) / (2 * h)
            fd_surr = (s.term_values(covs.P + h * E) - s.term_values(covs.P - h * E)) / (2 * h)
            np.testing.assert_allclose(fd_surr, fd_true, rtol=1e-4, atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_midpoint_concave(self, seed):
        r, cfg, ch, th, covs = instance(seed)
        s = rate_lower_bounds_in_P(covs, th, ch, cfg)
        P1, P2 = random_covset(r, cfg).P, random_covset(r, cfg).P
        mid = s.term_values(0.5 * (P1 + P2))
        assert np.all(mid >= 0.5 * (s.term_values(P1) + s.term_values(P2)) - 1e-10)


class TestThetaSurrogates:
    @given(st.integers(0, 10_000), st.booleans())
    def test_tangent_at_anchor(self, seed, sic):
        _, cfg, ch, th, covs = instance(seed, sic=sic, M=2)
        s = rate_lower_bounds_in_theta(covs, th, ch, cfg)
        np.testing.assert_allclose(s.term_values(th.z), true_terms(cfg, ch, th, covs.P), atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_minorant(self, seed):
        r, cfg, ch, th, covs = instance(seed, N=2, M=2)
        s = rate_lower_bounds_in_theta(covs, th, ch, cfg)
        t = r.standard_normal((2, 2)) + 1j * r.standard_normal((2, 2))
        other = ReflectState(t)
        assert np.all(s.term_values(other.z) <= true_terms(cfg, ch, th.__class__(t), covs.P) + 1e-9)

    def test_gradient_matches_true_rate(self):
        _, cfg, ch, th, covs = instance(5, N=2, M=2)
        s = rate_lower_bounds_in_theta(covs, th, ch, cfg)
        z0, h = th.z, 1e-6
        for t in range(z0.size):
            e = np.zeros_like(z0)
            e[t] = h
            up = ReflectState.from_z(z0 + e, th.theta.shape, "U")
            dn = ReflectState.from_z(z0 - e, th.theta.shape, "U")
            fd_true = (true_terms(cfg, ch, up, covs.P) - true_terms(cfg, ch, dn, covs.P)) / (2 * h)
            fd_surr = (s.term_values(z0 + e) - s.term_values(z0 - e)) / (2 * h)
            np.testing.assert_allclose(fd_surr, fd_true, rtol=1e-4, atol=1e-8)

    def test_non_psd_rejected(self):
        _, cfg, ch, th, covs = instance(6)
        P = covs.P.copy()
        P[0, 0] = -np.eye(2)
        with pytest.raises(InvalidInputError):
            rate_lower_bounds_in_theta(CovSet(P), th, ch, cfg)

    def test_no_ris_paths_constant(self):
        _, cfg, ch, th, covs = instance(7, M=2)
        ch0 = ChannelSet(ch.d, np.zeros_like(ch.G), ch.f)
        s = rate_lower_bounds_in_theta(covs, th, ch0, cfg)
        assert np.all(s.g == 0) and np.all(s.B == 0)


class TestLogdetRatioBound:
    @given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
    def test_inequality(self, seed, n, m):
        r = np.random.default_rng(seed)
        V, Vb = r.standard_normal((n, m)), r.standard_normal((n, m))
        Y, Yb = rand_psd(r, n) + 0.1 * np.eye(n), rand_psd(r, n) + 0.1 * np.eye(n)
        true = logdet(np.eye(n) + V @ V.T @ np.linalg.inv(Y))
        assert logdet_ratio_lower_bound(V, Y, Vb, Yb) <= true + 1e-9
        assert logdet_ratio_lower_bound(V, Y, V, Y) == pytest.approx(true, abs=1e-9)
