"""Reflecting-coefficient feasibility sets and their convex approximations.

Set U: ``|theta| <= 1``.  Set I: ``|theta| = 1``.  Set C: ``|theta| = f(angle)``
with the phase-dependent amplitude law of :func:`amplitude_law`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MODULUS_TOL, ReflectState, SetTag, TCParams

__all__ = [
    "TCParams",
    "AffineModulusBound",
    "amplitude_law",
    "project_to_set",
    "linearize_unit_modulus",
    "linearize_min_modulus",
    "in_set",
    "random_reflect_state",
]


def amplitude_law(angle, params: TCParams):
    s = (np.sin(np.asarray(angle, dtype=float) - params.phi) + 1.0) / 2.0
    s = np.clip(s, 0.0, 1.0)
    amp = params.theta_min + (1.0 - params.theta_min) * s**params.alpha
    return np.clip(amp, params.theta_min, 1.0)


def project_to_set(theta_raw: ReflectState, set_tag: SetTag, params: TCParams | None = None) -> ReflectState:
    t = np.asarray(theta_raw.theta, dtype=complex)
    if set_tag == "U":
        mag = np.abs(t)
        out = np.where(mag > 1.0, t / np.where(mag > 0, mag, 1.0), t)
    elif set_tag == "I":
        mag = np.abs(t)
        out = np.where(mag > 0, t / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
    elif set_tag == "C":
        params = params or TCParams()
        ang = np.angle(t)
        out = amplitude_law(ang, params) * np.exp(1j * ang)
    else:
        raise ValueError(f"unknown feasibility set {set_tag!r}")
    return ReflectState(out, set_tag)


def in_set(theta: ReflectState, params: TCParams | None = None, tol: float = MODULUS_TOL) -> bool:
    mag = np.abs(theta.theta)
    if theta.set_tag == "U":
        return bool(np.all(mag <= 1.0 + tol))
    if theta.set_tag == "I":
        return bool(np.all(np.abs(mag - 1.0) <= tol))
    params = params or TCParams()
    return bool(np.all(np.abs(mag - amplitude_law(np.angle(theta.theta), params)) <= tol))


@dataclass(frozen=True)
class AffineModulusBound:
    """Elementwise linear constraint ``a_re*x + a_im*y >= rhs`` on ``theta = x + jy``.

    Comes from the first-order minorant of ``|theta|^2`` around ``theta_prev``:
    ``|t0|^2 + 2 Re(t0 (theta - t0)^*) = 2 Re(t0^* theta) - |t0|^2``.
    It is always paired with the convex bound ``|theta|^2 <= 1``.
    """

    a_re: np.ndarray
    a_im: np.ndarray
    rhs: np.ndarray

    def lhs(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=complex)
        return self.a_re * theta.real + self.a_im * theta.imag

    def minorant(self, theta) -> np.ndarray:
        """Value of the affine minorant of ``|theta|^2`` at ``theta``."""
        t0 = self.a_re / 2 + 1j * self.a_im / 2
        return self.lhs(theta) - np.abs(t0) ** 2

    def satisfied(self, theta, tol: float = 0.0) -> np.ndarray:
        return self.lhs(theta) >= self.rhs - tol


def _linearize(theta_prev, floor_sq) -> AffineModulusBound:
    t0 = np.asarray(theta_prev, dtype=complex)
    # 2 Re(t0^* theta) - |t0|^2 >= floor_sq  <=>  2 Re(t0) x + 2 Im(t0) y >= floor_sq + |t0|^2
    return AffineModulusBound(2 * t0.real, 2 * t0.imag, floor_sq + np.abs(t0) ** 2)


def linearize_unit_modulus(theta_prev, epsilon_slack: float = 0.0) -> AffineModulusBound:
    return _linearize(theta_prev, np.full(np.shape(theta_prev), 1.0 - epsilon_slack))


def linearize_min_modulus(theta_prev, theta_min: float) -> AffineModulusBound:
    return _linearize(theta_prev, np.full(np.shape(theta_prev), theta_min**2))


def random_reflect_state(
    shape: tuple[int, int], set_tag: SetTag, rng: np.random.Generator, params: TCParams | None = None
) -> ReflectState:
    """Unit-modulus coefficients with uniform phases, projected onto ``set_tag``."""
    phases = rng.uniform(0.0, 2 * np.pi, size=shape)
    return project_to_set(ReflectState(np.exp(1j * phases), set_tag), set_tag, params)
