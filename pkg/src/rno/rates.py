"""Achievable NOMA / TIN rates and energy efficiency.

Every rate in the system has the same shape: a receiver ``rx`` of cell ``l``
decodes the signal of user ``desired`` of the same cell while the signals of
the users in ``excluded`` are not interference (already cancelled, or the
desired signal itself).  A :class:`RateTerm` records that triple; a user's
rate is the minimum over the terms it owns (one term for strong and TIN
users, two for a weak NOMA user).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .channel import compose_all
from .model import (
    ChannelSet,
    CovSet,
    InvalidInputError,
    NetworkConfig,
    NumericalDomainError,
    RateReport,
    ReflectState,
    real_decompose_channel,
    validate_covset,
)
from .ris import in_set

LOG2E = 1.0 / math.log(2.0)
COND_LIMIT = 1e12

TermKind = Literal["strong", "weak_own", "cross", "tin"]


@dataclass(frozen=True)
class RateTerm:
    cell: int
    rx: int
    desired: int
    excluded: frozenset
    kind: TermKind

    @property
    def owner(self) -> int:
        return self.desired


def rate_terms(config: NetworkConfig, sic: bool | None = None) -> list[RateTerm]:
    """All decoding terms, ordered by cell then user structure."""
    sic = config.sic_enabled if sic is None else sic
    K, U = config.K, config.U
    terms = []
    for l in range(config.L):
        if sic and config.cluster_size == 2:
            for k in range(K):
                kb = K + k
                terms.append(RateTerm(l, k, k, frozenset({k, kb}), "strong"))
                terms.append(RateTerm(l, kb, kb, frozenset({kb}), "weak_own"))
                terms.append(RateTerm(l, k, kb, frozenset({kb}), "cross"))
        else:
            for u in range(U):
                terms.append(RateTerm(l, u, u, frozenset({u}), "tin"))
    return terms


def interferer_mask(term: RateTerm, L: int, U: int) -> np.ndarray:
    """``mask[i, j] = 1`` if user (i, j) interferes with ``term``."""
    mask = np.ones((L, U))
    for j in term.excluded:
        mask[term.cell, j] = 0.0
    return mask


# ---------------------------------------------------------------------------
# Low-level evaluation on real-decomposed channels
# ---------------------------------------------------------------------------


def real_channels(channels: ChannelSet, theta: ReflectState) -> np.ndarray:
    """Real-decomposed composite channels ``H[l, k, i]`` of shape (L, U, L, 2, 2N)."""
    return real_decompose_channel(compose_all(channels, theta))


def received_covariances(H: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``S[l, k, i, j] = H[l,k,i] P[i,j] H[l,k,i]^T``, shape (L, U, L, U, 2, 2)."""
    return np.einsum("lkiab,ijbc,lkidc->lkijad", H, P, H, optimize=True)


def term_covariances(S: np.ndarray, term: RateTerm, noise: float) -> tuple[np.ndarray, np.ndarray]:
    """(interference-plus-noise D, desired received covariance) for one term."""
    L, U = S.shape[2], S.shape[3]
    mask = interferer_mask(term, L, U)
    D = 0.5 * noise * np.eye(2) + np.einsum("ij,ijab->ab", mask, S[term.cell, term.rx])
    return D, S[term.cell, term.rx, term.cell, term.desired]


def _logdet_pd(X: np.ndarray) -> float:
    sign, ld = np.linalg.slogdet(X)
    if sign <= 0 or not np.isfinite(ld):
        raise NumericalDomainError("matrix is not positive definite")
    return float(ld)


def rate_from_covariances(D: np.ndarray, S: np.ndarray, form: str = "ratio", diagnostics: dict | None = None) -> float:
    """``(1/2) log2 det(I + D^{-1} S)`` in ratio or difference form."""
    D = 0.5 * (D + D.T)
    if form == "difference":
        return 0.5 * LOG2E * (_logdet_pd(D + S) - _logdet_pd(D))
    w = np.linalg.eigvalsh(D)
    if w[0] <= 0 or not np.isfinite(w[0]):
        raise NumericalDomainError("interference-plus-noise covariance is singular")
    if w[-1] / w[0] > COND_LIMIT:
        D = D + 1e-12 * np.trace(D) * np.eye(D.shape[0])
        if diagnostics is not None:
            diagnostics["regularized"] = diagnostics.get("regularized", 0) + 1
    C = np.linalg.cholesky(D)
    Ci = np.linalg.inv(C)
    return 0.5 * LOG2E * _logdet_pd(np.eye(D.shape[0]) + Ci @ S @ Ci.T)


def term_rates(H: np.ndarray, P: np.ndarray, terms: list[RateTerm], noise: float, form: str = "ratio") -> np.ndarray:
    S = received_covariances(H, P)
    out = np.empty(len(terms))
    for q, term in enumerate(terms):
        D, Sd = term_covariances(S, term, noise)
        out[q] = rate_from_covariances(D, Sd, form)
    return out


def user_rates_from_terms(values: np.ndarray, terms: list[RateTerm], L: int, U: int) -> np.ndarray:
    r = np.full((L, U), np.inf)
    for v, term in zip(values, terms):
        r[term.cell, term.owner] = min(r[term.cell, term.owner], v)
    return r


def user_rates(H: np.ndarray, P: np.ndarray, config: NetworkConfig, noise: float, sic: bool | None = None) -> np.ndarray:
    terms = rate_terms(config, sic)
    return user_rates_from_terms(term_rates(H, P, terms, noise), terms, config.L, config.U)


# ---------------------------------------------------------------------------
# Public per-user operations
# ---------------------------------------------------------------------------


def _check_dims(channels: ChannelSet, covs: CovSet):
    L, U, N, _, _ = channels.dims
    if covs.P.shape != (L, U, 2 * N, 2 * N):
        raise InvalidInputError(f"covariances {covs.P.shape} do not match channels {(L, U, 2 * N, 2 * N)}")


def interference_cov(l, k, exclude, channels: ChannelSet, theta: ReflectState, covs: CovSet, sigma2: float) -> np.ndarray:
    """Interference-plus-noise covariance at user (l, k).

    ``exclude`` lists the users of cell ``l`` whose signals do not count as
    interference.
    """
    _check_dims(channels, covs)
    L, U = covs.P.shape[:2]
    if any(not 0 <= j < U for j in exclude):
        raise InvalidInputError("exclude must be users of cell l")
    H = real_channels(channels, theta)
    S = received_covariances(H, covs.P)
    term = RateTerm(l, k, k, frozenset(exclude), "tin")
    return term_covariances(S, term, sigma2)[0]


def _single_term(l, rx, desired, excluded, channels, theta, covs, sigma2, form):
    _check_dims(channels, covs)
    H = real_channels(channels, theta)
    S = received_covariances(H, covs.P)
    D, Sd = term_covariances(S, RateTerm(l, rx, desired, frozenset(excluded), "tin"), sigma2)
    return rate_from_covariances(D, Sd, form)


def _partner(k: int, U: int) -> tuple[int, int]:
    K = U // 2
    return (k, K + k) if k < K else (k - K, k)


def rate_strong(l, k, channels, theta, covs, sigma2, form="ratio") -> float:
    """Rate of strong user ``k`` after cancelling its paired weak user."""
    _, kb = _partner(k, covs.P.shape[1])
    return _single_term(l, k, k, {k, kb}, channels, theta, covs, sigma2, form)


def rate_weak_own(l, kb, channels, theta, covs, sigma2, form="ratio") -> float:
    """Rate at weak user ``kb`` decoding its own signal, strong partner as interference."""
    return _single_term(l, kb, kb, {kb}, channels, theta, covs, sigma2, form)


def rate_cross(l, k, channels, theta, covs, sigma2, form="ratio") -> float:
    """Rate at strong user ``k`` decoding the signal of its weak partner."""
    _, kb = _partner(k, covs.P.shape[1])
    return _single_term(l, k, kb, {kb}, channels, theta, covs, sigma2, form)


def rate_weak(l, kb, channels, theta, covs, sigma2, form="ratio") -> float:
    k, _ = _partner(kb, covs.P.shape[1])
    return min(
        rate_weak_own(l, kb, channels, theta, covs, sigma2, form),
        rate_cross(l, k, channels, theta, covs, sigma2, form),
    )


def rates_tin(channels, theta, covs, sigma2) -> np.ndarray:
    """Per-user rates when every receiver treats all other signals as noise."""
    _check_dims(channels, covs)
    L, U = covs.P.shape[:2]
    H = real_channels(channels, theta)
    terms = [RateTerm(l, u, u, frozenset({u}), "tin") for l in range(L) for u in range(U)]
    return term_rates(H, covs.P, terms, sigma2).reshape(L, U)


def energy_efficiency(rate, P, P_c: float, eta: float):
    """Rate over consumed power ``P_c + eta * Tr(P)``; ``P`` may be batched."""
    P = np.asarray(P, dtype=float)
    den = P_c + eta * np.trace(P, axis1=-2, axis2=-1)
    if np.any(den <= 0):
        raise InvalidInputError("consumed power must be positive")
    return np.asarray(rate) / den


def evaluate(
    channels: ChannelSet, theta: ReflectState, covs: CovSet, config: NetworkConfig, *, sic: bool | None = None
) -> RateReport:
    """Rates, energy efficiencies and feasibility diagnostics of one operating point."""
    _check_dims(channels, covs)
    H = real_channels(channels, theta)
    terms = rate_terms(config, sic)
    values = term_rates(H, covs.P, terms, config.sigma2)
    r = np.maximum(user_rates_from_terms(values, terms, config.L, config.U), 0.0)
    ee = energy_efficiency(r, covs.P, config.P_c, config.eta)
    lam = config.lam()
    checks = validate_covset(covs, config)
    theta_ok = in_set(theta, config.tc_params)
    qos_slack = r - config.rth()
    diagnostics = {
        "term_rates": values,
        "budget_slack": config.power() - covs.traces.sum(axis=1),
        "min_eig": np.linalg.eigvalsh(covs.P).min(axis=-1),
        "qos_slack": qos_slack,
        "modulus": np.abs(theta.theta),
        "cov_checks": checks,
        "theta_in_set": theta_ok,
    }
    return RateReport(
        r=r,
        ee=ee,
        min_weighted_rate=float((lam * r).min()),
        min_weighted_ee=float((lam * ee).min()),
        feasible=bool(checks["ok"] and theta_ok),
        diagnostics=diagnostics,
    )
