import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from rno.channel import make_rng, sample_channels, sample_topology  # noqa: E402
from rno.model import ChannelSet, CovSet, NetworkConfig, proper_covariance  # noqa: E402
from rno.ris import random_reflect_state  # noqa: E402

settings.register_profile("ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def small_config(**kw) -> NetworkConfig:
    base = dict(L=2, K=1, N_BS=1, M=2, N_RIS=4, p=1.0)
    base.update(kw)
    return NetworkConfig(**base)


def random_channelset(rng, L, U, N, M, R, scale=1.0) -> ChannelSet:
    def cn(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelSet(cn(L, U, L, N), cn(M, L, R, N), cn(L, U, M, R))


def random_covset(rng, config: NetworkConfig, proper=False) -> CovSet:
    L, U, n = config.L, config.U, 2 * config.N_BS
    if proper:
        P = np.zeros((L, U, n, n))
        for l in range(L):
            for u in range(U):
                A = rng.standard_normal((n // 2, n // 2)) + 1j * rng.standard_normal((n // 2, n // 2))
                P[l, u] = proper_covariance(A @ A.conj().T)
    else:
        A = rng.standard_normal((L, U, n, n))
        P = A @ np.swapaxes(A, -1, -2)
    tr = np.trace(P, axis1=2, axis2=3).sum(axis=1)
    P = P * (config.power() / tr * rng.uniform(0.3, 1.0, size=L))[:, None, None, None]
    return CovSet(P, "PGS" if proper else "IGS")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    """Small sampled scenario: config, channels and a common initial point seed."""
    cfg = small_config()
    seed = (3, 0)
    ch = sample_channels(sample_topology(cfg, seed), cfg, seed)
    return cfg, ch


def sampled(cfg: NetworkConfig, seed):
    return sample_channels(sample_topology(cfg, seed), cfg, seed)


def reflect0(cfg: NetworkConfig, seed, set_tag=None):
    return random_reflect_state((cfg.M, cfg.N_RIS), set_tag or cfg.feasibility_set, make_rng(seed, 9), cfg.tc_params)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
