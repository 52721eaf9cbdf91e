"""Metrics, wedge operators, the sphere map and the reduction tensors.

Wedge convention: ``(a ^ b) c = a (b, c) - b (a, c)`` with no 1/2 factor.
All inner products ``(., .)`` are Euclidean unless a metric is named.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .types import BallConfig, ConfigError

TANGENT_TOL = 1e-9


class MetricKind(str, Enum):
    REDUCED_G0 = "reduced_g0"
    CHAPLYGIN_GSTAR = "chaplygin_gstar"
    CONFORMAL_X = "conformal_x"
    STANDARD = "standard"


class TangencyError(ValueError):
    """A vector is not tangent to the sphere at the given base point."""


def _check_tangent(base, *vectors) -> None:
    for v in vectors:
        scale = max(1.0, float(np.linalg.norm(v)))
        if abs(base @ v) > TANGENT_TOL * scale:
            raise TangencyError(f"vector not tangent at base point: (base, v) = {base @ v:.3e}")


def wedge_apply(a, b, c) -> np.ndarray:
    """Apply the bivector ``a ^ b`` to ``c``."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    return a * (b @ c) - b * (a @ c)


def wedge_matrix(a, b) -> np.ndarray:
    """Matrix of ``a ^ b`` acting on column vectors."""
    return np.outer(a, b) - np.outer(b, a)


def inertia_wedge_apply(cfg: BallConfig, a, b, c) -> np.ndarray:
    """Apply ``I(a ^ b) = Aa ^ Ab`` to ``c``."""
    return wedge_apply(cfg.a * np.asarray(a, dtype=float), cfg.a * np.asarray(b, dtype=float), c)


def tangent_basis(gamma) -> np.ndarray:
    """Orthonormal basis of the tangent space at ``gamma`` as columns (n, n-1).

    Built from the Householder reflector sending ``e1`` to ``-sign(gamma_1) gamma``.
    """
    g = np.asarray(gamma, dtype=float)
    n = g.size
    s = 1.0 if g[0] >= 0 else -1.0
    u = g.copy()
    u[0] += s
    h = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    return h[:, 1:]


def _a_dot(cfg, u, v):
    return float(np.sum(cfg.a * u * v))


def _g0_core(cfg: BallConfig, gamma, X, Y) -> float:
    ag = cfg.a * gamma
    return _a_dot(cfg, X, Y) * (ag @ gamma) - (ag @ X) * (ag @ Y)


def inner(metric, cfg: BallConfig | None, base, X, Y) -> float:
    """Evaluate one of the sphere metrics at ``base`` on tangent vectors ``X, Y``.

    Parameters
    ----------
    metric : MetricKind or str
        ``reduced_g0``, ``chaplygin_gstar``, ``conformal_x`` or ``standard``.
    cfg : BallConfig
        Required for every metric except ``standard``.
    base : array_like
        Unit vector (``gamma`` for the first two metrics, ``x`` for ``conformal_x``).
    """
    metric = MetricKind(metric)
    base = np.asarray(base, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_tangent(base, X, Y)
    if metric is MetricKind.STANDARD:
        return float(X @ Y)
    if cfg is None:
        raise ConfigError(f"metric {metric.value} needs a BallConfig")
    eps = cfg.epsilon
    if metric is MetricKind.REDUCED_G0:
        return _g0_core(cfg, base, X, Y) / eps**2
    if metric is MetricKind.CHAPLYGIN_GSTAR:
        w = _a_dot(cfg, base, base)
        return w ** (1.0 / eps - 2.0) * _g0_core(cfg, base, X, Y)
    w_inv = float(np.sum(cfg.a_inv * base * base))
    return w_inv ** (-1.0 / eps) * float(X @ Y)


def metric_matrix(metric, cfg: BallConfig, base) -> np.ndarray:
    """Ambient (n, n) matrix ``G`` with ``inner(X, Y) = X^T G Y`` on tangent vectors."""
    metric = MetricKind(metric)
    base = np.asarray(base, dtype=float)
    if metric is MetricKind.STANDARD:
        return np.eye(base.size)
    eps = cfg.epsilon
    ag = cfg.a * base
    core = (ag @ base) * np.diag(cfg.a) - np.outer(ag, ag)
    if metric is MetricKind.REDUCED_G0:
        return core / eps**2
    if metric is MetricKind.CHAPLYGIN_GSTAR:
        return (ag @ base) ** (1.0 / eps - 2.0) * core
    w_inv = float(np.sum(cfg.a_inv * base * base))
    return w_inv ** (-1.0 / eps) * np.eye(base.size)


def gamma_to_x(cfg: BallConfig, gamma) -> np.ndarray:
    """Sphere map ``x = A^(1/2) gamma / sqrt((A gamma, gamma))``.

    Vectorized over leading axes.
    """
    g = np.asarray(gamma, dtype=float)
    w = np.sum(cfg.a * g * g, axis=-1)
    return cfg.a_sqrt * g / np.sqrt(w)[..., None]


def x_to_gamma(cfg: BallConfig, x) -> np.ndarray:
    """Inverse sphere map ``gamma = A^(-1/2) x / sqrt((A^-1 x, x))``."""
    x = np.asarray(x, dtype=float)
    w = np.sum(cfg.a_inv * x * x, axis=-1)
    return x / cfg.a_sqrt / np.sqrt(w)[..., None]


def gamma_to_x_jet(cfg: BallConfig, gamma, gamma_dot, gamma_ddot=None):
    """Push a 2-jet ``(gamma, gamma_dot, gamma_ddot)`` through the sphere map.

    Returns ``(x, x_dot)`` or ``(x, x_dot, x_ddot)``; leading axes broadcast.
    """
    g = np.asarray(gamma, dtype=float)
    v = np.asarray(gamma_dot, dtype=float)
    sa = cfg.a_sqrt
    w = np.sum(cfg.a * g * g, axis=-1)[..., None]
    w1 = 2.0 * np.sum(cfg.a * g * v, axis=-1)[..., None]
    x = sa * g * w**-0.5
    x_dot = sa * v * w**-0.5 - 0.5 * sa * g * w**-1.5 * w1
    if gamma_ddot is None:
        return x, x_dot
    acc = np.asarray(gamma_ddot, dtype=float)
    w2 = 2.0 * np.sum(cfg.a * v * v, axis=-1)[..., None] + 2.0 * np.sum(cfg.a * g * acc, axis=-1)[..., None]
    x_ddot = (sa * acc * w**-0.5
              - sa * v * w**-1.5 * w1
              + sa * g * (0.75 * w**-2.5 * w1**2 - 0.5 * w**-1.5 * w2))
    return x, x_dot, x_ddot


def sigma(cfg: BallConfig, gamma, X, Y, Z) -> float:
    """Reduction tensor ``((2 eps - 1) / eps^3) (I(gamma ^ X) Y, Z)``."""
    gamma = np.asarray(gamma, dtype=float)
    _check_tangent(gamma, X, Y, Z)
    eps = cfg.epsilon
    return (2 * eps - 1) / eps**3 * float(inertia_wedge_apply(cfg, gamma, X, Y) @ np.asarray(Z, dtype=float))


def _g0_gram(cfg, gamma, basis):
    G = basis.T @ metric_matrix(MetricKind.REDUCED_G0, cfg, gamma) @ basis
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("reduced metric Gram matrix is singular") from exc
    return G


def b_tensor(cfg: BallConfig, gamma, X, Y) -> np.ndarray:
    """Tangent vector ``B(X, Y)`` defined by ``<B(X, Y), Z>_0 = Sigma(X, Y, Z)``."""
    gamma = np.asarray(gamma, dtype=float)
    E = tangent_basis(gamma)
    rhs = np.array([sigma(cfg, gamma, X, Y, E[:, k]) for k in range(E.shape[1])])
    return E @ np.linalg.solve(_g0_gram(cfg, gamma, E), rhs)


def c_tensor(cfg: BallConfig, gamma, Y, Z) -> np.ndarray:
    """Tangent vector ``C(Y, Z)`` defined by ``<X, C(Y, Z)>_0 = Sigma(X, Y, Z)``."""
    gamma = np.asarray(gamma, dtype=float)
    E = tangent_basis(gamma)
    rhs = np.array([sigma(cfg, gamma, E[:, k], Y, Z) for k in range(E.shape[1])])
    return E @ np.linalg.solve(_g0_gram(cfg, gamma, E), rhs)


def x_to_gamma_jet(cfg: BallConfig, x, x_dot):
    """Push ``(x, x_dot)`` through the inverse sphere map."""
    x = np.asarray(x, dtype=float)
    xd = np.asarray(x_dot, dtype=float)
    isa = 1.0 / cfg.a_sqrt
    u = np.sum(cfg.a_inv * x * x, axis=-1)[..., None]
    u1 = 2.0 * np.sum(cfg.a_inv * x * xd, axis=-1)[..., None]
    return isa * x * u**-0.5, isa * xd * u**-0.5 - 0.5 * isa * x * u**-1.5 * u1
