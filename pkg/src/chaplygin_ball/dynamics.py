"""Right-hand sides of the flows.

Sphere flows (reduced rolling, natural Neumann/Braden) return a
:class:`Derivative` holding the acceleration and the constraint multiplier.
The flat testbed flows live on a box in Euclidean space with the identity
metric, so every Christoffel symbol of the background vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import inertia_wedge_apply, tangent_basis
from .types import BallConfig, DomainError, FlatFieldConfig, SphereState


@dataclass(frozen=True)
class Derivative:
    acceleration: np.ndarray
    lagrange_multiplier: float = 0.0


def reduced_rhs(cfg: BallConfig, state: SphereState) -> Derivative:
    """Acceleration of the reduced rolling equation and its multiplier.

    The time derivative on the left of the reduced equation is expanded, and
    ``(gamma_ddot, lambda)`` solve the dense (n+1) x (n+1) system formed with
    the twice-differentiated sphere constraint
    ``(gamma_ddot, gamma) = -(gamma_dot, gamma_dot)``.
    """
    g, v = state.gamma, state.gamma_dot
    a, eps, n = cfg.a, cfg.epsilon, cfg.n
    ag, av = a * g, a * v
    w = ag @ g
    agv = ag @ v
    avv = av @ v
    kin = avv * ag - agv * av

    M = np.zeros((n + 1, n + 1))
    # eps [ (A g, gdd) A g - (A g, g) A gdd ] - lambda g
    M[:n, :n] = eps * (np.outer(ag, ag) - w * np.diag(a))
    M[:n, n] = -g
    M[n, :n] = g
    rhs = np.empty(n + 1)
    # eps * I(g ^ gd) gd from the expanded derivative plus (1 - eps) * I(g ^ gd) gd
    rhs[:n] = -kin
    rhs[n] = -(v @ v)
    sol = np.linalg.solve(M, rhs)
    return Derivative(sol[:n], float(sol[n]))


def weak_form_residual(cfg: BallConfig, state: SphereState, derivative) -> float:
    """Largest tangent component of the weak-form reduced equation.

    Evaluates ``eps d/dt[I(g ^ gd) g] + (1 - eps) I(g ^ gd) gd`` with
    ``d/dt[I(g ^ gd) g] = I(g ^ gdd) g + I(g ^ gd) gd`` and returns the
    max absolute pairing with an orthonormal tangent basis.
    """
    g, v = state.gamma, state.gamma_dot
    acc = derivative.acceleration if isinstance(derivative, Derivative) else np.asarray(derivative)
    eps = cfg.epsilon
    gyro = inertia_wedge_apply(cfg, g, v, v)
    ddt = inertia_wedge_apply(cfg, g, acc, g) + gyro
    vec = eps * ddt + (1.0 - eps) * gyro
    return float(np.max(np.abs(tangent_basis(g).T @ vec)))


def natural_rhs(cfg: BallConfig, state: SphereState) -> Derivative:
    """Natural system on the sphere with potential ``-(A^-1 x, x)^(-1/eps)``."""
    x, xp = state.gamma, state.gamma_dot
    eps = cfg.epsilon
    ainv_x = cfg.a_inv * x
    w = ainv_x @ x
    lam = (2.0 / eps) * w ** (-1.0 / eps) - xp @ xp
    acc = -(2.0 / eps) * w ** (-1.0 / eps - 1.0) * ainv_x + lam * x
    return Derivative(acc, float(lam))


def _check_domain(fields: FlatFieldConfig, q) -> None:
    if not fields.contains(q):
        raise DomainError(f"point {np.asarray(q).tolist()} left the declared domain box")


def newton_force(fields: FlatFieldConfig, q, q_dot) -> np.ndarray:
    """Velocity-dependent force ``F(q_dot, q)`` built from ``f`` and ``nu``."""
    gl_nu = fields.grad_ln_nu(q)
    gl_f = fields.grad_ln_f(q)
    return (gl_nu @ q_dot) * q_dot - 2.0 * (gl_f @ q_dot) * q_dot + (q_dot @ q_dot) * gl_f


def flat_newton_rhs(fields: FlatFieldConfig, q, q_dot) -> np.ndarray:
    """``q_ddot = F(q_dot, q)`` on the flat background."""
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    _check_domain(fields, q)
    return newton_force(fields, q, q_dot)


def conformal_christoffel(fields: FlatFieldConfig, q) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` of ``f^2 * Euclidean``."""
    q = np.asarray(q, dtype=float)
    n = q.size
    df_over_f = fields.grad_ln_f(q)
    eye = np.eye(n)
    return (np.einsum("kj,i->kij", eye, df_over_f)
            + np.einsum("ki,j->kij", eye, df_over_f)
            - np.einsum("ij,k->kij", eye, df_over_f))


def conformal_geodesic_rhs(fields: FlatFieldConfig, q, q_prime) -> np.ndarray:
    """Geodesic acceleration of the conformal metric ``f^2 * Euclidean``."""
    q = np.asarray(q, dtype=float)
    q_prime = np.asarray(q_prime, dtype=float)
    _check_domain(fields, q)
    return -np.einsum("kij,i,j->k", conformal_christoffel(fields, q), q_prime, q_prime)


@dataclass(frozen=True)
class Flow:
    """A second-order flow: tag, its configuration and whether it lives on the sphere."""

    tag: str
    config: object

    @property
    def on_sphere(self) -> bool:
        return self.tag in ("reduced", "natural")

    def acceleration(self, q, v) -> np.ndarray:
        if self.tag == "reduced":
            return _sphere_accel(reduced_rhs, self.config, q, v)
        if self.tag == "natural":
            return _sphere_accel(natural_rhs, self.config, q, v)
        if self.tag == "flat_newton":
            return flat_newton_rhs(self.config, q, v)
        if self.tag == "conformal_geodesic":
            return conformal_geodesic_rhs(self.config, q, v)
        raise ValueError(f"unknown flow tag {self.tag!r}")


def _sphere_accel(rhs, cfg, q, v):
    # intermediate Runge-Kutta stages sit slightly off the sphere; the formulas
    # are evaluated there without re-validating the state
    state = SphereState.__new__(SphereState)
    object.__setattr__(state, "gamma", np.asarray(q, dtype=float))
    object.__setattr__(state, "gamma_dot", np.asarray(v, dtype=float))
    return rhs(cfg, state).acceleration


FLOW_TAGS = ("reduced", "natural", "flat_newton", "conformal_geodesic")


def make_flow(tag: str, config) -> Flow:
    if tag not in FLOW_TAGS:
        raise ValueError(f"unknown flow tag {tag!r}; expected one of {FLOW_TAGS}")
    return Flow(tag, config)
