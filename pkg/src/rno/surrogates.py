"""Majorization-minimization surrogates of the rate functions.

In the covariances each rate is a difference of two concave log-dets; the
subtracted one is replaced by its tangent plane, giving a concave minorant
(:func:`rate_lower_bounds_in_P`).  In the reflecting coefficients every rate
is bounded below by a concave quadratic of the stacked vector
``z = [Re theta; Im theta]`` (:func:`rate_lower_bounds_in_theta`), because the
real channels are affine in ``z``.

Both surrogate families expose their coefficients in the flat form consumed
by :mod:`rno.backend`, together with numpy evaluators used for acceptance
checks and tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import cascade_coefficients
from .model import (
    ChannelSet,
    CovSet,
    InvalidInputError,
    NetworkConfig,
    NumericalDomainError,
    ReflectState,
    is_psd,
    psd_sqrt,
    real_decompose_channel,
)
from .rates import (
    RateTerm,
    interferer_mask,
    rate_from_covariances,
    rate_terms,
    real_channels,
    received_covariances,
    term_covariances,
    user_rates_from_terms,
)

KAPPA = 1.0 / (2.0 * math.log(2.0))  # nats of log det -> bits of a real 2-dim rate
ENTRY_INDEX = ((0, 0), (0, 1), (1, 1))


def _logdet(X: np.ndarray) -> float:
    sign, ld = np.linalg.slogdet(X)
    if sign <= 0:
        raise NumericalDomainError("matrix is not positive definite")
    return float(ld)


# ---------------------------------------------------------------------------
# Tangent plane of log det(A + B P B^T)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineBound:
    """``const + Tr(grad (P - anchor))``, an upper bound on a concave log-det."""

    const: float
    grad: np.ndarray
    anchor: np.ndarray

    def __call__(self, P) -> float:
        return self.const + float(np.sum(self.grad * (np.asarray(P) - self.anchor)))


def logdet_affine_upper(A, B, P_anchor) -> AffineBound:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    P_anchor = np.asarray(P_anchor, dtype=float)
    X = A + B @ P_anchor @ B.T
    try:
        Xi = np.linalg.inv(X)
    except np.linalg.LinAlgError as exc:
        raise NumericalDomainError("A + B P B^T is singular") from exc
    grad = B.T @ Xi @ B
    return AffineBound(_logdet(X), 0.5 * (grad + grad.T), P_anchor)


# ---------------------------------------------------------------------------
# Surrogates in the covariances
# ---------------------------------------------------------------------------


def covariance_vector(P: np.ndarray) -> np.ndarray:
    """Concatenation of the column-major vectorized covariances of all users."""
    L, U, n, _ = P.shape
    return np.concatenate([P[l, u].flatten(order="F") for l in range(L) for u in range(U)])


@dataclass
class CovSurrogates:
    """Concave minorants of every rate term, affine data in ``vec(P)``.

    For term ``q``: ``X_q(P) = x0[q] + A[q] @ vec(P)`` holds the three distinct
    entries (11, 12, 22) of the 2x2 matrix inside the kept log-det, and
    ``value_q(P) = KAPPA * logdet X_q(P) - c[q] - g[q] @ vec(P)``.
    """

    terms: list[RateTerm]
    A: np.ndarray  # (Q, 3, nvec)
    x0: np.ndarray  # (Q, 3)
    g: np.ndarray  # (Q, nvec)
    c: np.ndarray  # (Q,)
    L: int
    U: int

    def term_values(self, P: np.ndarray) -> np.ndarray:
        v = covariance_vector(np.asarray(P, float))
        X = self.x0 + self.A @ v
        det = X[:, 0] * X[:, 2] - X[:, 1] ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            ld = np.where(det > 0, np.log(np.where(det > 0, det, 1.0)), -np.inf)
        return KAPPA * ld - self.c - self.g @ v

    def user_values(self, P: np.ndarray) -> np.ndarray:
        return user_rates_from_terms(self.term_values(P), self.terms, self.L, self.U)


def rate_lower_bounds_in_P(
    anchor: CovSet, theta_fixed: ReflectState, channels: ChannelSet, config: NetworkConfig,
    *, noise: float | None = None, sic: bool | None = None,
) -> CovSurrogates:
    noise = config.sigma2 if noise is None else noise
    H = real_channels(channels, theta_fixed)
    P0 = anchor.P
    L, U, n, _ = P0.shape
    S = received_covariances(H, P0)
    terms = rate_terms(config, sic)
    nb = n * n
    Q = len(terms)
    A = np.zeros((Q, 3, L * U * nb))
    g = np.zeros((Q, L * U * nb))
    c = np.zeros(Q)
    x0 = np.tile([0.5 * noise, 0.0, 0.5 * noise], (Q, 1))
    v0 = covariance_vector(P0)
    for q, term in enumerate(terms):
        D, _ = term_covariances(S, term, noise)
        Di = np.linalg.inv(D)
        mask = interferer_mask(term, L, U)
        keep = mask.copy()
        keep[term.cell, term.desired] = 1.0
        for i in range(L):
            Hq = H[term.cell, term.rx, i]
            Gq = KAPPA * (Hq.T @ Di @ Hq)
            for u in range(U):
                sl = slice((i * U + u) * nb, (i * U + u + 1) * nb)
                if keep[i, u]:
                    for e, (a, b) in enumerate(ENTRY_INDEX):
                        A[q, e, sl] = np.outer(Hq[a], Hq[b]).flatten(order="F")
                if mask[i, u]:
                    g[q, sl] = Gq.flatten(order="F")
        c[q] = KAPPA * _logdet(D) - g[q] @ v0
    return CovSurrogates(terms, A, x0, g, c, L, U)


# ---------------------------------------------------------------------------
# Surrogates in the reflecting coefficients
# ---------------------------------------------------------------------------


def logdet_ratio_lower_bound(V, Y, Vb, Yb) -> float:
    """Right-hand side of the concave minorant of ``ln det(I + V V^T Y^{-1})``."""
    Ybi = np.linalg.inv(Yb)
    Sb = Vb @ Vb.T
    Cm = Ybi - np.linalg.inv(Sb + Yb)
    return (
        _logdet(np.eye(Yb.shape[0]) + Sb @ Ybi)
        - np.trace(Sb @ Ybi)
        + 2.0 * np.trace(Vb.T @ Ybi @ V)
        - np.trace(Cm.T @ (V @ V.T + Y))
    )


@dataclass
class ThetaBasis:
    """Real channels as an affine function of ``z``: ``H(z) = H0 + sum_t z_t E[t]``."""

    H0: np.ndarray  # (L, U, L, 2, 2N)
    E: np.ndarray  # (T, L, U, L, 2, 2N)
    shape: tuple[int, int]

    def channels(self, z: np.ndarray) -> np.ndarray:
        return self.H0 + np.tensordot(z, self.E, axes=(0, 0))


def theta_basis(channels: ChannelSet) -> ThetaBasis:
    L, U, N, M, R = channels.dims
    c = cascade_coefficients(channels).reshape(L, U, L, M * R, N)
    c = np.moveaxis(c, 3, 0)  # (MR, L, U, L, N)
    E = np.concatenate([real_decompose_channel(c), real_decompose_channel(1j * c)], axis=0)
    return ThetaBasis(real_decompose_channel(channels.d), E, (M, R))


@dataclass
class ThetaSurrogates:
    """Concave quadratic minorants ``c0[q] + g[q] @ z - ||a[q] + B[q] @ z||^2``."""

    terms: list[RateTerm]
    c0: np.ndarray  # (Q,)
    g: np.ndarray  # (Q, T)
    a: np.ndarray  # (Q, R)
    B: np.ndarray  # (Q, R, T)
    L: int
    U: int

    def term_values(self, z: np.ndarray) -> np.ndarray:
        res = self.a + self.B @ z
        return self.c0 + self.g @ z - np.sum(res**2, axis=1)

    def user_values(self, z: np.ndarray) -> np.ndarray:
        return user_rates_from_terms(self.term_values(z), self.terms, self.L, self.U)


def rate_lower_bounds_in_theta(
    cov_fixed: CovSet, theta_anchor: ReflectState, channels: ChannelSet, config: NetworkConfig,
    *, noise: float | None = None, sic: bool | None = None, basis: ThetaBasis | None = None,
) -> ThetaSurrogates:
    noise = config.sigma2 if noise is None else noise
    P = cov_fixed.P
    if not is_psd(P):
        raise InvalidInputError("covariances must be PSD")
    basis = basis or theta_basis(channels)
    L, U, n, _ = P.shape
    T = basis.E.shape[0]
    Psq = psd_sqrt(P)  # (L, U, n, n)
    Hb = basis.channels(theta_anchor.z)
    S = received_covariances(Hb, P)
    terms = rate_terms(config, sic)
    Q = len(terms)
    R = L * U * 2 * n
    c0 = np.zeros(Q)
    g = np.zeros((Q, T))
    a = np.zeros((Q, R))
    B = np.zeros((Q, R, T))
    sk = math.sqrt(KAPPA)
    N2 = 0.5 * noise * np.eye(2)
    for q, term in enumerate(terms):
        l, rx, s = term.cell, term.rx, term.desired
        Yb, Sb = term_covariances(S, term, noise)
        Ybi = np.linalg.inv(Yb)
        Cm = Ybi - np.linalg.inv(Yb + Sb)
        Cm = 0.5 * (Cm + Cm.T)
        Ch = psd_sqrt(Cm)
        Vb = Hb[l, rx, l] @ Psq[l, s]
        W = Ybi @ Vb @ Psq[l, s]
        rbar = rate_from_covariances(Yb, Sb)
        g[q] = 2 * KAPPA * np.einsum("ab,tab->t", W, basis.E[:, l, rx, l])
        c0[q] = (
            rbar
            - KAPPA * np.trace(Sb @ Ybi)
            - KAPPA * np.trace(Cm @ N2)
            + 2 * KAPPA * np.sum(W * basis.H0[l, rx, l])
        )
        keep = interferer_mask(term, L, U)
        keep[l, s] = 1.0
        Pm = Psq * keep[:, :, None, None]
        a[q] = sk * np.einsum("ab,ibc,iucd->iuad", Ch, basis.H0[l, rx], Pm).reshape(R)
        B[q] = sk * np.einsum("ab,tibc,iucd->tiuad", Ch, basis.E[:, l, rx], Pm, optimize=True).reshape(T, R).T
    return ThetaSurrogates(terms, c0, g, a, B, L, U)
