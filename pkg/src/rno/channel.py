"""Scenario geometry, path loss, fading, and composite RIS channels."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import (
    ChannelSet,
    InvalidInputError,
    NetworkConfig,
    PathLossParams,
    ReflectState,
)

# independent RNG streams derived from one seed
STREAM_TOPOLOGY = 0
STREAM_CHANNEL = 1


def make_rng(seed, stream: int) -> np.random.Generator:
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.default_rng(np.random.SeedSequence(entropy + [stream]))


@dataclass(frozen=True)
class Topology:
    bs_pos: np.ndarray  # (L, 3)
    ris_pos: np.ndarray  # (M, 3)
    user_pos: np.ndarray  # (L, U, 3)
    cluster: np.ndarray  # (L, U) 0 = cell-centric, 1 = cell-edge

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("bs_pos", "ris_pos", "user_pos", "cluster")}

    @classmethod
    def from_dict(cls, data: dict) -> "Topology":
        return cls(
            np.asarray(data["bs_pos"], float),
            np.asarray(data["ris_pos"], float),
            np.asarray(data["user_pos"], float),
            np.asarray(data["cluster"], int),
        )


def user_clusters(config: NetworkConfig) -> np.ndarray:
    """Cluster square of every user: strong users cell-centric, weak users cell-edge.

    Without pairing (``cluster_size = 1``) users alternate between the squares.
    """
    U = config.U
    if config.cluster_size == 2:
        row = np.array([0] * config.K + [1] * config.K)
    else:
        row = np.arange(U) % 2
    return np.tile(row, (config.L, 1))


def sample_topology(config: NetworkConfig, seed) -> Topology:
    g = config.geometry
    rng = make_rng(seed, STREAM_TOPOLOGY)
    cluster = user_clusters(config)
    centers = np.asarray(g.cluster_centers, float)  # (L, 2, 2)
    half = g.cluster_side / 2.0
    offsets = rng.uniform(-half, half, size=(config.L, config.U, 2))
    xy = centers[np.arange(config.L)[:, None], cluster] + offsets
    z = np.full((config.L, config.U, 1), g.user_height)
    return Topology(
        bs_pos=np.asarray(g.bs_pos, float),
        ris_pos=np.asarray(g.ris_pos, float),
        user_pos=np.concatenate([xy, z], axis=-1),
        cluster=cluster,
    )


def path_loss_db(d, los: bool, params: PathLossParams):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise InvalidInputError("distance must be positive")
    alpha = params.alpha_los if los else params.alpha_nlos
    return params.PL0 + params.G0 - 10.0 * alpha * np.log10(d / params.d0)


def attenuation(d, los: bool, params: PathLossParams):
    """Linear power attenuation ``10**(PL/10)``."""
    return 10.0 ** (path_loss_db(d, los, params) / 10.0)


def steering_vector(n_elems: int, angle, d_over_lambda: float = 0.5) -> np.ndarray:
    k = np.arange(n_elems)
    return np.exp(1j * 2 * np.pi * k * d_over_lambda * np.sin(angle))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(topology: Topology, config: NetworkConfig, seed) -> ChannelSet:
    """Rayleigh direct links and Rician RIS links with ULA line-of-sight parts."""
    rng = make_rng(seed, STREAM_CHANNEL)
    L, U, N, M, R = config.L, config.U, config.N_BS, config.M, config.N_RIS
    pl = config.pathloss
    g = config.geometry
    gamma = config.rician_gamma
    w_los = np.sqrt(gamma / (1.0 + gamma))
    w_nlos = np.sqrt(1.0 / (1.0 + gamma))
    spacing = g.element_spacing

    bs, ris, users = topology.bs_pos, topology.ris_pos, topology.user_pos

    dist_d = np.linalg.norm(users[:, :, None, :] - bs[None, None, :, :], axis=-1)  # (L,U,L)
    beta_d = attenuation(dist_d, False, pl)
    d = np.sqrt(beta_d)[..., None] * _cn(rng, (L, U, L, N))

    dist_g = np.linalg.norm(ris[:, None, :] - bs[None, :, :], axis=-1)  # (M, L)
    beta_g = attenuation(dist_g, True, pl)
    phi_a = rng.uniform(0.0, 2 * np.pi, size=(M, L))
    phi_d = rng.uniform(0.0, 2 * np.pi, size=(M, L))
    a_r = steering_vector(R, phi_a[..., None], spacing)  # (M, L, R)
    a_t = steering_vector(N, phi_d[..., None], spacing)  # (M, L, N)
    G_los = a_r[..., :, None] * a_t.conj()[..., None, :]
    G = np.sqrt(beta_g)[..., None, None] * (w_los * G_los + w_nlos * _cn(rng, (M, L, R, N)))

    dist_f = np.linalg.norm(users[:, :, None, :] - ris[None, None, :, :], axis=-1)  # (L,U,M)
    beta_f = attenuation(dist_f, True, pl)
    phi_f = rng.uniform(0.0, 2 * np.pi, size=(L, U, M))
    f_los = steering_vector(R, phi_f[..., None], spacing).conj()
    f = np.sqrt(beta_f)[..., None] * (w_los * f_los + w_nlos * _cn(rng, (L, U, M, R)))

    if g.bs_ris_visible is not None:
        G = G * np.asarray(g.bs_ris_visible, float)[:, :, None, None]
    if g.ris_cluster_visible is not None:
        vis = np.asarray(g.ris_cluster_visible, float)  # (M, L, 2)
        per_user = vis[:, np.arange(L)[:, None], topology.cluster]  # (M, L, U)
        f = f * np.moveaxis(per_user, 0, -1)[..., None]
    return ChannelSet(d, G, f)


def cascade_coefficients(channels: ChannelSet) -> np.ndarray:
    """``c[l, k, i, m, n, :] = f[l,k,m,n] * G[m, i, n, :]``.

    The composite channel is ``d[l,k,i] + sum_{m,n} theta[m,n] c[l,k,i,m,n]``.
    """
    return np.einsum("lkmn,minb->lkimnb", channels.f, channels.G)


def compose_all(channels: ChannelSet, theta: ReflectState) -> np.ndarray:
    """Composite channels for every (receiver, transmitter): shape (L, U, L, N_BS)."""
    L, U, N, M, R = channels.dims
    if theta.theta.shape != (M, R):
        raise InvalidInputError(f"theta shape {theta.theta.shape} != {(M, R)}")
    return channels.d + np.einsum("lkmn,mn,minb->lkib", channels.f, theta.theta, channels.G)


def compose_channel(channels: ChannelSet, theta: ReflectState, l: int, k: int, i: int) -> np.ndarray:
    L, U, N, M, R = channels.dims
    if theta.theta.shape != (M, R):
        raise InvalidInputError(f"theta shape {theta.theta.shape} != {(M, R)}")
    h = channels.d[l, k, i].copy()
    for m in range(M):
        h = h + (channels.f[l, k, m] * theta.theta[m]) @ channels.G[m, i]
    return h


# ---------------------------------------------------------------------------
# Text serialization: complex arrays become nested lists of [re, im] pairs
# ---------------------------------------------------------------------------


def _cplx_to_list(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _list_to_cplx(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def channels_to_dict(channels: ChannelSet) -> dict:
    return {
        "format": "rno.channelset/1",
        "d": _cplx_to_list(channels.d),
        "G": _cplx_to_list(channels.G),
        "f": _cplx_to_list(channels.f),
    }


def channels_from_dict(data: dict) -> ChannelSet:
    return ChannelSet(_list_to_cplx(data["d"]), _list_to_cplx(data["G"]), _list_to_cplx(data["f"]))


def dump_channels(channels: ChannelSet) -> str:
    return json.dumps(channels_to_dict(channels))


def load_channels(text: str) -> ChannelSet:
    return channels_from_dict(json.loads(text))


def dump_topology(topology: Topology) -> str:
    return json.dumps({"format": "rno.topology/1", **topology.to_dict()})


def load_topology(text: str) -> Topology:
    return Topology.from_dict(json.loads(text))
