"""Shared domain types and the complex-to-real signal decomposition.

All signals are handled in the real-decomposition form: a complex vector
``x`` becomes ``[Re x; Im x]`` and a complex row channel ``h`` acting on it
becomes the ``2 x 2N`` real matrix ``[[Re h, -Im h], [Im h, Re h]]``.
Transmit covariances are ``2N x 2N`` real PSD matrices; proper (circular)
signals are the subset with the block structure ``[[A, -B], [B, A]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SetTag = Literal["U", "I", "C"]
Signaling = Literal["IGS", "PGS"]

PSD_RTOL = 1e-8
PROPER_TOL = 1e-8
MODULUS_TOL = 1e-9


class RNOError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(RNOError, ValueError):
    """An argument violates a documented precondition."""


class NumericalDomainError(RNOError, ArithmeticError):
    """A quantity is undefined for the given inputs (e.g. singular covariance)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class TCParams(BaseModel):
    """Phase-dependent amplitude law parameters for feasibility set C."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    theta_min: float = Field(0.2, ge=0.0, le=1.0)
    alpha: float = Field(1.6, ge=0.0)
    phi: float = 0.43 * math.pi


class PathLossParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    PL0: float = -30.0
    G0: float = 0.0
    alpha_los: float = Field(2.2, gt=0.0)
    alpha_nlos: float = Field(3.67, gt=0.0)
    d0: float = Field(1.0, gt=0.0)


class Geometry(BaseModel):
    """Fixed node positions (meters) and reflection-space visibility.

    ``cluster_centers[l][c]`` is the (x, y) center of cluster ``c`` of cell
    ``l``; ``c = 0`` is the cell-centric square and ``c = 1`` the cell-edge one.
    ``bs_ris_visible[m][i]`` and ``ris_cluster_visible[m][l][c]`` switch
    individual RIS links off (``None`` means everything is visible).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    bs_pos: list[tuple[float, float, float]]
    ris_pos: list[tuple[float, float, float]]
    cluster_centers: list[list[tuple[float, float]]]
    cluster_side: float = Field(20.0, ge=0.0)
    user_height: float = 1.5
    element_spacing: float = Field(0.5, gt=0.0)
    bs_ris_visible: list[list[bool]] | None = None
    ris_cluster_visible: list[list[list[bool]]] | None = None


def default_geometry(L: int, M: int, cell_spacing: float = 200.0) -> Geometry:
    """Line of ``L`` cells; each cell has a cell-centric and a cell-edge square.

    With ``M = 2L`` every cluster square gets a RIS at its center, with
    ``M = L`` only the cell-edge squares do; other values cycle through the
    cluster centers.
    """
    bs_pos, centers = [], []
    for l in range(L):
        x0 = cell_spacing * l
        s = 1.0 if l % 2 == 0 else -1.0
        bs_pos.append((x0, 0.0, 25.0))
        centers.append([(x0 + s * 40.0, 30.0), (x0 + s * 90.0, 30.0)])
    if M == L:
        slots = [centers[l][1] for l in range(L)]
    else:
        flat = [centers[l][c] for l in range(L) for c in range(2)]
        slots = [flat[m % len(flat)] for m in range(M)]
    ris_pos = [(x, y, 15.0) for (x, y) in slots]
    return Geometry(bs_pos=bs_pos, ris_pos=ris_pos, cluster_centers=centers)


class NetworkConfig(BaseModel):
    """All constants of one scenario.

    Users of cell ``l`` are indexed ``0 .. U-1`` with ``U = cluster_size*K``.
    With ``cluster_size = 2`` user ``k < K`` is the strong (SIC) user of
    cluster ``k`` and user ``K + k`` its paired weak user.
    Per-cell / per-user quantities given as scalars are broadcast.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    L: int = Field(2, ge=1)
    K: int = Field(2, ge=1)
    cluster_size: Literal[1, 2] = 2
    N_BS: int = Field(1, ge=1)
    M: int = Field(4, ge=1)
    N_RIS: int = Field(9, ge=1)
    p: list[float] = Field(default_factory=lambda: [1.0])
    sigma2: float = Field(1e-12, gt=0.0)
    weights: list[list[float]] = Field(default_factory=lambda: [[1.0]])
    P_c: float = Field(1.0, ge=0.0)
    eta: float = Field(2.0, gt=0.0)
    r_th: list[list[float]] = Field(default_factory=lambda: [[0.0]])
    feasibility_set: SetTag = "I"
    signaling: Signaling = "IGS"
    sic_enabled: bool = True
    tc_params: TCParams = Field(default_factory=TCParams)
    rician_gamma: float = Field(3.0, ge=0.0)
    pathloss: PathLossParams = Field(default_factory=PathLossParams)
    geometry: Geometry | None = None

    @model_validator(mode="before")
    @classmethod
    def _broadcast(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        L = int(data.get("L", 2))
        K = int(data.get("K", 2))
        U = int(data.get("cluster_size", 2)) * K
        p = data.get("p", 1.0)
        if isinstance(p, (int, float)):
            data["p"] = [float(p)] * L
        for key, dflt in (("weights", 1.0), ("r_th", 0.0)):
            v = data.get(key, dflt)
            if isinstance(v, (int, float)):
                data[key] = [[float(v)] * U for _ in range(L)]
        if data.get("geometry") is None:
            data["geometry"] = default_geometry(L, int(data.get("M", 4)))
        return data

    @field_validator("p")
    @classmethod
    def _positive_power(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("power budgets must be positive")
        return v

    @field_validator("weights")
    @classmethod
    def _positive_weights(cls, v):
        if any(x <= 0 for row in v for x in row):
            raise ValueError("weights must be positive")
        return v

    @field_validator("r_th")
    @classmethod
    def _nonneg_rth(cls, v):
        if any(x < 0 for row in v for x in row):
            raise ValueError("minimum rates must be non-negative")
        return v

    @model_validator(mode="after")
    def _shapes(self):
        L, U = self.L, self.U
        if self.M < self.L:
            raise ValueError(f"M={self.M} must be >= L={self.L}")
        if len(self.p) != L:
            raise ValueError(f"p must have L={L} entries")
        for name in ("weights", "r_th"):
            arr = getattr(self, name)
            if len(arr) != L or any(len(row) != U for row in arr):
                raise ValueError(f"{name} must be L x U = {L} x {U}")
        g = self.geometry
        if len(g.bs_pos) != L or len(g.ris_pos) != self.M or len(g.cluster_centers) != L:
            raise ValueError("geometry does not match L / M")
        if any(len(c) != 2 for c in g.cluster_centers):
            raise ValueError("each cell needs exactly two cluster centers")
        if g.bs_ris_visible is not None and (
            len(g.bs_ris_visible) != self.M or any(len(r) != L for r in g.bs_ris_visible)
        ):
            raise ValueError("bs_ris_visible must be M x L")
        if g.ris_cluster_visible is not None and (
            len(g.ris_cluster_visible) != self.M
            or any(len(r) != L or any(len(c) != 2 for c in r) for r in g.ris_cluster_visible)
        ):
            raise ValueError("ris_cluster_visible must be M x L x 2")
        return self

    @property
    def U(self) -> int:
        """Users per cell."""
        return self.cluster_size * self.K

    @property
    def n_users(self) -> int:
        return self.L * self.U

    def lam(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def rth(self) -> np.ndarray:
        return np.asarray(self.r_th, dtype=float)

    def power(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    def with_(self, **changes) -> "NetworkConfig":
        """Copy with fields replaced; broadcast fields are re-validated."""
        data = self.model_dump()
        data.update(changes)
        dims = {"L", "K", "cluster_size", "M"}
        if dims & changes.keys():
            # per-user arrays and geometry no longer fit: rebuild from scalars
            for key in ("weights", "r_th"):
                if key not in changes:
                    data[key] = float(np.asarray(getattr(self, key)).flat[0])
            if "p" not in changes:
                data["p"] = float(self.p[0])
            if "geometry" not in changes and {"L", "M"} & changes.keys():
                data["geometry"] = None
        return NetworkConfig(**data)


# ---------------------------------------------------------------------------
# Numeric state types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization.

    ``d[l, k, i]``: direct link BS ``i`` -> user (l, k), shape (L, U, L, N_BS).
    ``G[m, i]``: BS ``i`` -> RIS ``m``, shape (M, L, N_RIS, N_BS).
    ``f[l, k, m]``: RIS ``m`` -> user (l, k), shape (L, U, M, N_RIS).
    """

    d: np.ndarray
    G: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        for name in ("d", "G", "f"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"channel {name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        L, U, L2, N = self.d.shape
        M, L3, R, N2 = self.G.shape
        if not (L == L2 == L3 and N == N2 and self.f.shape == (L, U, M, R)):
            raise InvalidInputError("inconsistent channel dimensions")

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        """(L, U, N_BS, M, N_RIS)."""
        L, U, _, N = self.d.shape
        M, _, R, _ = self.G.shape
        return L, U, N, M, R

    def scaled(self, s: float) -> "ChannelSet":
        """All links multiplied by ``s`` (used to normalize noise to one)."""
        return ChannelSet(self.d * s, self.G * math.sqrt(s), self.f * math.sqrt(s))

    def without_ris(self) -> "ChannelSet":
        return ChannelSet(self.d, np.zeros_like(self.G), self.f)


@dataclass(frozen=True)
class ReflectState:
    """Reflecting coefficients ``theta[m, n]`` of all RISs and their set tag."""

    theta: np.ndarray
    set_tag: SetTag = "U"

    def __post_init__(self):
        arr = np.array(self.theta, dtype=complex)
        if arr.ndim != 2:
            raise InvalidInputError("theta must be M x N_RIS")
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    @property
    def z(self) -> np.ndarray:
        """Stacked real vector ``[Re theta; Im theta]`` (row-major over m, n)."""
        t = self.theta.ravel()
        return np.concatenate([t.real, t.imag])

    @classmethod
    def from_z(cls, z: np.ndarray, shape: tuple[int, int], set_tag: SetTag) -> "ReflectState":
        n = shape[0] * shape[1]
        return cls((z[:n] + 1j * z[n:]).reshape(shape), set_tag)


@dataclass(frozen=True)
class CovSet:
    """Real-domain transmit covariances ``P[l, k]`` of shape (L, U, 2N, 2N)."""

    P: np.ndarray
    mode: Signaling = "IGS"

    def __post_init__(self):
        arr = np.array(self.P, dtype=float)
        if arr.ndim != 4 or arr.shape[2] != arr.shape[3] or arr.shape[2] % 2:
            raise InvalidInputError("P must be L x U x 2N x 2N")
        arr.setflags(write=False)
        object.__setattr__(self, "P", arr)

    @property
    def traces(self) -> np.ndarray:
        return np.trace(self.P, axis1=2, axis2=3)


@dataclass
class RateReport:
    r: np.ndarray
    ee: np.ndarray
    min_weighted_rate: float
    min_weighted_ee: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Real decomposition and signaling structure
# ---------------------------------------------------------------------------


def real_decompose_channel(h) -> np.ndarray:
    """``[[Re h, -Im h], [Im h, Re h]]`` for a complex row (or stack of rows).

    Leading axes are treated as batch dimensions; the last axis is the
    antenna axis.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim == 0:
        h = h.reshape(1)
    if not np.all(np.isfinite(h)):
        raise InvalidInputError("channel has non-finite entries")
    top = np.concatenate([h.real, -h.imag], axis=-1)
    bot = np.concatenate([h.imag, h.real], axis=-1)
    return np.stack([top, bot], axis=-2)


def real_decompose_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real, x.imag], axis=-1)


def proper_covariance(Q) -> np.ndarray:
    """Real-domain covariance of a proper signal with complex covariance ``Q``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    if Q.shape[0] != Q.shape[1]:
        raise InvalidInputError("Q must be square")
    scale = 1.0 + np.abs(Q).max()
    if np.abs(Q - Q.conj().T).max() > 1e-10 * scale:
        raise InvalidInputError("Q must be Hermitian")
    return 0.5 * np.block([[Q.real, -Q.imag], [Q.imag, Q.real]])


def proper_part(P: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a symmetric matrix onto the proper structure.

    Averages ``P`` with its rotation by 90 degrees, which preserves trace and
    positive semidefiniteness.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[-1] // 2
    A = 0.5 * (P[..., :n, :n] + P[..., n:, n:])
    B = 0.5 * (P[..., n:, :n] - P[..., :n, n:])
    top = np.concatenate([A, -B], axis=-1)
    bot = np.concatenate([B, A], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def is_proper(P, tol: float = PROPER_TOL) -> bool:
    P = np.asarray(P, dtype=float)
    n = P.shape[-1] // 2
    A, Bneg = P[..., :n, :n], P[..., :n, n:]
    B, A2 = P[..., n:, :n], P[..., n:, n:]
    scale = 1.0 + np.abs(P).max()
    return bool(
        np.abs(A - A2).max() <= tol * scale
        and np.abs(B + Bneg).max() <= tol * scale
        and np.abs(A - np.swapaxes(A, -1, -2)).max() <= tol * scale
        and np.abs(B + np.swapaxes(B, -1, -2)).max() <= tol * scale
    )


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def is_psd(P, rtol: float = PSD_RTOL) -> bool:
    S = symmetrize(np.asarray(P, dtype=float))
    w = np.linalg.eigvalsh(S)
    tr = np.trace(S, axis1=-2, axis2=-1)
    return bool(np.all(w.min(axis=-1) >= -rtol * (1.0 + np.abs(tr))))


def psd_sqrt(P: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root with eigenvalues clamped at zero."""
    w, V = np.linalg.eigh(symmetrize(P))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def project_psd(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(P))
    w = np.clip(w, 0.0, None)
    return symmetrize((V * w[..., None, :]) @ np.swapaxes(V, -1, -2))


def validate_covset(covs: CovSet, config: NetworkConfig, tol: float = 1e-7) -> dict:
    """Check trace budgets, PSD and (for PGS) proper structure.

    Returns a dict of named checks; ``ok`` is their conjunction.
    """
    P = covs.P
    L, U = config.L, config.U
    checks = {
        "shape": P.shape == (L, U, 2 * config.N_BS, 2 * config.N_BS),
        "symmetric": bool(np.abs(P - np.swapaxes(P, -1, -2)).max() <= 1e-10 * (1 + np.abs(P).max())),
        "psd": is_psd(P),
    }
    budget = covs.traces.sum(axis=1)
    checks["budget"] = bool(np.all(budget <= config.power() + tol))
    checks["proper"] = covs.mode == "IGS" or is_proper(P)
    checks["ok"] = all(checks.values())
    return checks


def feasible_covset(P: np.ndarray, config: NetworkConfig, mode: Signaling) -> CovSet:
    """Repair solver round-off: symmetrize, clip to PSD, impose structure, fit budget."""
    P = project_psd(np.asarray(P, dtype=float))
    if mode == "PGS":
        P = proper_part(P)
    tr = np.trace(P, axis1=2, axis2=3).sum(axis=1)
    p = config.power()
    scale = np.where(tr > p, p / np.maximum(tr, 1e-300), 1.0)
    P = P * scale[:, None, None, None]
    return CovSet(P, mode)
