"""Sphero-conical coordinates and their image under the sphere map.

All functions here assume strictly decreasing inertia parameters
``a_1 > a_2 > ... > a_n > 0`` so that the poles ``1/a_i`` increase.
Coordinates determine only the squares of the Cartesian components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import x_to_gamma
from .types import BallConfig, ConfigError

BISECTION_ITERS = 200


@dataclass(frozen=True)
class SpheroConical:
    """Separation coordinates ``1/a_1 < u_1 < 1/a_2 < ... < u_{n-1} < 1/a_n``."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


def _require_decreasing(cfg: BallConfig) -> np.ndarray:
    if np.any(np.diff(cfg.a) >= 0):
        raise ConfigError("sphero-conical coordinates need strictly decreasing a")
    return cfg.a_inv


def check_interlacing(cfg: BallConfig, u) -> np.ndarray:
    poles = _require_decreasing(cfg)
    u = np.asarray(u.u if isinstance(u, SpheroConical) else u, dtype=float)
    if u.shape != (cfg.n - 1,):
        raise ConfigError(f"expected {cfg.n - 1} coordinates, got {u.size}")
    if not np.all((poles[:-1] < u) & (u < poles[1:])):
        raise ConfigError(f"interlacing violated: u={u.tolist()}, poles={poles.tolist()}")
    return u


def u_from_x(cfg: BallConfig, x) -> SpheroConical:
    """Roots of ``sum_i x_i^2 / (z - 1/a_i) = 0``, one between each pair of poles.

    The function decreases strictly from +inf to -inf between consecutive
    poles, so plain bisection brackets each root.
    """
    poles = _require_decreasing(cfg)
    x = np.asarray(x, dtype=float)
    x2 = x * x
    if np.any(x2 == 0):
        raise ConfigError("non-generic point: some x_i = 0 puts a root on a pole")

    def fn(z):
        return float(np.sum(x2 / (z - poles)))

    roots = np.empty(cfg.n - 1)
    for k in range(cfg.n - 1):
        lo, hi = poles[k], poles[k + 1]
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if fn(mid) > 0:
                lo = mid
            else:
                hi = mid
        roots[k] = 0.5 * (lo + hi)
    return SpheroConical(roots)


def x_from_u(cfg: BallConfig, u) -> np.ndarray:
    """Squared Cartesian coordinates ``x_i^2`` of a sphero-conical point."""
    u = check_interlacing(cfg, u)
    poles = cfg.a_inv
    out = np.empty(cfg.n)
    for i in range(cfg.n):
        others = np.delete(poles, i)
        out[i] = np.prod(poles[i] - u) / np.prod(poles[i] - others)
    return out


def gamma_from_u(cfg: BallConfig, u) -> np.ndarray:
    """Squared coordinates ``gamma_i^2`` of the preimage under the sphere map."""
    u = check_interlacing(cfg, u)
    nu2 = np.sum(cfg.a_inv) - np.sum(u)
    return x_from_u(cfg, u) / (cfg.a * nu2)


def signed_sqrt(squares, reference) -> np.ndarray:
    """Square roots carrying the signs of ``reference``."""
    sign = np.where(np.asarray(reference) < 0, -1.0, 1.0)
    return sign * np.sqrt(np.clip(squares, 0.0, None))


def gamma_from_u_via_x(cfg: BallConfig, u) -> np.ndarray:
    """``gamma_i^2`` obtained by mapping the positive-root x through the inverse sphere map."""
    x = np.sqrt(x_from_u(cfg, u))
    return x_to_gamma(cfg, x) ** 2


def bm_params(cfg: BallConfig) -> np.ndarray:
    """``(J_1, J_2, J_3) = (a_2 a_3, a_1 a_3, a_1 a_2)`` for ``n = 3``."""
    if cfg.n != 3:
        raise ConfigError("the Borisov-Mamaev parameters exist only for n = 3")
    a1, a2, a3 = cfg.a
    return np.array([a2 * a3, a1 * a3, a1 * a2])


def bm_gamma_squares(J, u_bm: float, v_bm: float) -> tuple[np.ndarray, float]:
    """Squared coordinates and ``eta^2`` from the Borisov-Mamaev formulas."""
    J = np.asarray(J, dtype=float)
    eta2 = 1.0 / (np.sum(J) - u_bm - v_bm)
    out = np.empty(3)
    for i in range(3):
        others = np.delete(J, i)
        out[i] = eta2 * J[i] * (J[i] - u_bm) * (J[i] - v_bm) / np.prod(J[i] - others)
    return out, eta2


def bm_correspondence_check(cfg: BallConfig, u) -> float:
    """Largest disagreement between the two closed forms of ``gamma_i^2``.

    Compares the sphere-map image of sphero-conical coordinates with the
    Borisov-Mamaev expressions at ``u = a1 a2 a3 u_1``, ``v = a1 a2 a3 u_2``,
    and folds in the residual of ``eta^2 a1 a2 a3 nu^2 = 1``.
    """
    u = check_interlacing(cfg, u)
    J = bm_params(cfg)
    P = float(np.prod(cfg.a))
    bm, eta2 = bm_gamma_squares(J, P * u[0], P * u[1])
    nu2 = np.sum(cfg.a_inv) - np.sum(u)
    return float(max(np.max(np.abs(bm - gamma_from_u(cfg, u))), abs(eta2 * P * nu2 - 1.0)))


def conic_residual(cfg: BallConfig, gamma, z: float) -> float:
    """Left side of ``sum_i a_i gamma_i^2 / (J_i - z) = 0`` for ``n = 3``."""
    J = bm_params(cfg)
    if np.any(J == z):
        raise ZeroDivisionError(f"z={z} hits a pole of the conic pencil")
    g = np.asarray(gamma, dtype=float)
    return float(np.sum(cfg.a * g * g / (J - z)))


def sort_decreasing(a):
    """Permutation putting ``a`` in strictly decreasing order, and the sorted values."""
    a = np.asarray(a, dtype=float)
    perm = np.argsort(-a, kind="stable")
    return perm, a[perm]
