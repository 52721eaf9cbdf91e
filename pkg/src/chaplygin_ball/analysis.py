"""Conserved quantities, trajectory correspondences and comparison tools."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .dynamics import make_flow, natural_rhs
from .geometry import MetricKind, gamma_to_x_jet, inner, metric_matrix
from .integrate import Trajectory, integrate, resample, time_map
from .types import AffinePower, BallConfig, ConfigError, FlatFieldConfig, SphereState, project_state

UNIT_ENERGY_TOL = 1e-9


class NonConservedWarning(UserWarning):
    """A Noether quantity was requested for a pair with a_i != a_j."""


@dataclass(frozen=True)
class DriftReport:
    """Deviation of a scalar along a trajectory.

    Deviations are measured from ``reference`` when given (a target level
    such as the zero-energy surface), otherwise from the initial value.
    """

    quantity: str
    initial: float
    max_abs_dev: float
    rel_dev: float
    threshold: Optional[float] = None
    reference: Optional[float] = None
    relative: bool = False

    @property
    def passed(self) -> Optional[bool]:
        if self.threshold is None:
            return None
        return bool((self.rel_dev if self.relative else self.max_abs_dev) <= self.threshold)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


def drift_report(quantity: str, values, threshold: Optional[float] = None,
                 reference: Optional[float] = None, relative: bool = False) -> DriftReport:
    values = np.asarray(values, dtype=float)
    ref = values[0] if reference is None else reference
    dev = float(np.max(np.abs(values - ref)))
    rel = dev / abs(ref) if ref != 0 else dev
    return DriftReport(quantity, float(values[0]), dev, rel, threshold, reference, relative)


# -- conserved quantities -----------------------------------------------------

def energy_g0(cfg: BallConfig, state: SphereState) -> float:
    """Kinetic energy ``<gamma_dot, gamma_dot>_0 / 2`` of the reduced metric."""
    return 0.5 * inner(MetricKind.REDUCED_G0, cfg, state.gamma, state.gamma_dot, state.gamma_dot)


def reduced_lagrangian(cfg: BallConfig, state: SphereState) -> float:
    g, v, a = state.gamma, state.gamma_dot, cfg.a
    return ((a * v) @ v * ((a * g) @ g) - ((a * g) @ v) ** 2) / (2 * cfg.epsilon**2)


def gstar_energy(cfg: BallConfig, gamma, gamma_prime) -> float:
    return 0.5 * inner(MetricKind.CHAPLYGIN_GSTAR, cfg, gamma, gamma_prime, gamma_prime)


def natural_energy(cfg: BallConfig, state: SphereState) -> float:
    """``(x', x') / 2 - (A^-1 x, x)^(-1/eps)``; zero on the invariant surface."""
    x, xp = state.gamma, state.gamma_dot
    return 0.5 * (xp @ xp) - ((cfg.a_inv * x) @ x) ** (-1.0 / cfg.epsilon)


def _check_pair(cfg, i, j):
    if not (0 <= i < cfg.n and 0 <= j < cfg.n) or i == j:
        raise IndexError(f"invalid index pair ({i}, {j}) for n={cfg.n}")
    if cfg.a[i] != cfg.a[j]:
        warnings.warn(f"a[{i}] != a[{j}]: Noether quantity is not conserved", NonConservedWarning, stacklevel=3)


def noether_phi(cfg: BallConfig, i: int, j: int, state: SphereState) -> float:
    """Noether integral in the original time: ``(a_i/eps)(A g, g)^(1/(2 eps)) (g_i gd_j - g_j gd_i)``.

    Conserved only when ``a_i == a_j``; other pairs are evaluated but
    trigger a :class:`NonConservedWarning`.
    """
    _check_pair(cfg, i, j)
    g, v = state.gamma, state.gamma_dot
    w = (cfg.a * g) @ g
    return cfg.a[i] / cfg.epsilon * w ** (0.5 / cfg.epsilon) * (g[i] * v[j] - g[j] * v[i])


def noether_phi_star(cfg: BallConfig, i: int, j: int, gamma, gamma_prime) -> float:
    """Noether integral of the ``g*`` geodesic flow, ``g_i dL*/dg'_j - g_j dL*/dg'_i``."""
    _check_pair(cfg, i, j)
    p = metric_matrix(MetricKind.CHAPLYGIN_GSTAR, cfg, gamma) @ np.asarray(gamma_prime, dtype=float)
    return float(gamma[i] * p[j] - gamma[j] * p[i])


def noether_phi_x(i: int, j: int, x, x_prime) -> float:
    """Angular momentum ``x_i x'_j - x_j x'_i`` of the natural system."""
    return float(x[i] * x_prime[j] - x[j] * x_prime[i])


def quad_integral(fields: FlatFieldConfig, q, q_dot) -> float:
    """Quadratic first integral ``f^2 / (2 nu^2) (q_dot, q_dot)`` of the Newton flow."""
    nu = fields.nu(q)
    if nu == 0:
        raise ZeroDivisionError("nu vanishes")
    q_dot = np.asarray(q_dot, dtype=float)
    return float(fields.f(q) ** 2 / (2 * nu**2) * (q_dot @ q_dot))


def normalize_unit_energy(cfg: BallConfig, state: SphereState) -> SphereState:
    """Rescale the velocity so that ``<gamma_dot, gamma_dot>_0 / 2 = 1``."""
    e = energy_g0(cfg, state)
    if e <= 0:
        raise ConfigError("cannot normalize a zero velocity")
    return SphereState(state.gamma, state.gamma_dot / np.sqrt(e))


# -- multipliers -----------------------------------------------------------------

def redsym_multiplier(cfg: BallConfig) -> AffinePower:
    """``eps (A gamma, gamma)^(1/(2 eps) - 1)``, turning the reduced flow into ``g*`` geodesics."""
    return AffinePower(0.0, cfg.a, 0.5 / cfg.epsilon - 1.0, cfg.epsilon)


def redsym_multiplier_x(cfg: BallConfig) -> AffinePower:
    """The same multiplier written on the x-sphere: ``eps (A^-1 x, x)^(1 - 1/(2 eps))``."""
    return AffinePower(0.0, cfg.a_inv, 1.0 - 0.5 / cfg.epsilon, cfg.epsilon)


def chain_multiplier(cfg: BallConfig) -> AffinePower:
    """``ds/dt = eps (A^-1 x, x)^(1 + 1/(2 eps))`` on the x-sphere."""
    return AffinePower(0.0, cfg.a_inv, 1.0 + 0.5 / cfg.epsilon, cfg.epsilon)


def maupertuis_x_multiplier(cfg: BallConfig) -> AffinePower:
    """``ds/dtau = (A^-1 x, x)^(1/eps)``: Jacobi time back to the natural time."""
    return AffinePower(0.0, cfg.a_inv, 1.0 / cfg.epsilon, 1.0)


# -- trajectory maps -----------------------------------------------------------------

def map_trajectory_to_x(cfg: BallConfig, traj: Trajectory) -> Trajectory:
    """Push every node of a gamma-trajectory through the sphere map (time unchanged)."""
    x, xd, xdd = gamma_to_x_jet(cfg, traj.positions, traj.velocities, traj.accelerations)
    return Trajectory(traj.times, x, xd, xdd, on_sphere=True, meta=dict(traj.meta))


def reparametrize_reduced(cfg: BallConfig, traj: Trajectory, num: Optional[int] = None) -> Trajectory:
    """Reduced trajectory in the time ``d tau = eps (A g, g)^(1/(2 eps) - 1) dt``."""
    mult = redsym_multiplier(cfg)
    return resample(traj, time_map(traj, mult), mult, num=num)


def _natural_residuals(cfg, traj):
    res = np.empty(len(traj))
    energy = np.empty(len(traj))
    for k in range(len(traj)):
        st = _raw_state(traj.positions[k], traj.velocities[k])
        res[k] = np.max(np.abs(traj.accelerations[k] - natural_rhs(cfg, st).acceleration))
        energy[k] = natural_energy(cfg, st)
    return energy, res


def _raw_state(q, v):
    state = SphereState.__new__(SphereState)
    object.__setattr__(state, "gamma", np.asarray(q, dtype=float))
    object.__setattr__(state, "gamma_dot", np.asarray(v, dtype=float))
    return state


def _check_unit_energy(cfg, traj):
    e = 0.5 * np.einsum("i,ij,j->", traj.velocities[0],
                        metric_matrix(MetricKind.REDUCED_G0, cfg, traj.positions[0]), traj.velocities[0])
    if abs(e - 1.0) > UNIT_ENERGY_TOL:
        raise ConfigError(f"reduced trajectory has kinetic energy {e!r}, expected 1 (use normalize_unit_energy)")


CHAIN_ROUTES = ("direct", "map_first", "reparam_first")


def chaplygin_chain(cfg: BallConfig, reduced_traj: Trajectory, num: Optional[int] = None,
                    route: str = "direct", energy_threshold: float = 1e-7,
                    residual_threshold: float = 1e-5):
    """Map a unit-energy reduced trajectory to a zero-energy natural trajectory.

    Parameters
    ----------
    route : {"direct", "map_first", "reparam_first"}
        ``direct`` applies the sphere map and the single reparametrization
        ``ds = eps (A^-1 x, x)^(1 + 1/(2 eps)) dt``.  The other two routes
        compose the Chaplygin reparametrization, the sphere map and the
        inverse Maupertuis reparametrization in the two possible groupings.

    Returns
    -------
    natural_traj : Trajectory
        The image ``x(s)`` sampled uniformly in ``s``.
    reports : list of DriftReport
        ``natural_energy`` measured from the zero level and the equation
        residual ``|x'' - natural_rhs(x, x')|`` measured from zero.
    """
    if route not in CHAIN_ROUTES:
        raise ValueError(f"unknown route {route!r}")
    _check_unit_energy(cfg, reduced_traj)
    if route == "direct":
        x_t = map_trajectory_to_x(cfg, reduced_traj)
        mult = chain_multiplier(cfg)
        out = resample(x_t, time_map(x_t, mult), mult, num=num)
    else:
        if route == "map_first":
            x_t = map_trajectory_to_x(cfg, reduced_traj)
            m1 = redsym_multiplier_x(cfg)
            x_tau = resample(x_t, time_map(x_t, m1), m1, num=num)
        else:
            g_tau = reparametrize_reduced(cfg, reduced_traj, num=num)
            x_tau = map_trajectory_to_x(cfg, g_tau)
        m2 = maupertuis_x_multiplier(cfg)
        out = resample(x_tau, time_map(x_tau, m2), m2, num=num)
    energy, res = _natural_residuals(cfg, out)
    reports = [
        drift_report("natural_energy", energy, energy_threshold, reference=0.0),
        drift_report("natural_rhs_residual", res, residual_threshold, reference=0.0),
    ]
    return out, reports


def cross_check_chain(cfg: BallConfig, reduced_traj: Trajectory, chain: Optional[Trajectory] = None,
                      rel_tol: float = 1e-11, abs_tol: float = 1e-11) -> float:
    """Max position gap between the chain image and an independent natural-flow run.

    The natural system is integrated from the mapped initial condition over
    the same ``s`` interval and compared at the chain's sample points.
    """
    if chain is None:
        chain, _ = chaplygin_chain(cfg, reduced_traj)
    s0, s1 = chain.times[0], chain.times[-1]
    start = project_state(chain.positions[0], chain.velocities[0])
    ref = integrate(make_flow("natural", cfg), start, (s0, s1), rel_tol, abs_tol)
    q_ref = ref.evaluate(chain.times, derivatives=0)[0]
    return float(np.max(np.linalg.norm(q_ref - chain.positions, axis=1)))


def maupertuis_map(fields: FlatFieldConfig, traj: Trajectory, h: float,
                   energy_tol: float = 1e-8) -> Trajectory:
    """Jacobi-time image ``d tau = (h - V) dt`` of an energy-``h`` Newton trajectory."""
    q, v = traj.positions, traj.velocities
    V = fields.potential(q)
    energy = 0.5 * np.sum(v * v, axis=1) + V
    if np.max(np.abs(energy - h)) > energy_tol:
        raise ConfigError(f"trajectory is not on the energy level h={h} (max gap {np.max(np.abs(energy - h)):.3e})")
    if np.any(h - V <= 0):
        raise ConfigError("potential reaches the energy level along the trajectory")
    k = np.zeros(fields.n) if fields.potential_k is None else fields.potential_k
    mult = AffinePower(h, -0.5 * k, 1.0)
    return resample(traj, time_map(traj, mult), mult)


def jacobi_energy(fields: FlatFieldConfig, h: float, q, q_prime) -> float:
    q_prime = np.asarray(q_prime, dtype=float)
    return 0.5 * (h - fields.potential(q)) * float(q_prime @ q_prime)


def great_circle_deviation(traj: Trajectory) -> float:
    """Max distance of the samples from the plane spanned by the initial state."""
    g0, v0 = traj.positions[0], traj.velocities[0]
    v_perp = v0 - (v0 @ g0) / (g0 @ g0) * g0
    if np.linalg.norm(v_perp) < 1e-12 * max(1.0, np.linalg.norm(v0)):
        raise ValueError("degenerate initial frame: velocity is (nearly) zero or normal")
    basis = np.stack([g0 / np.linalg.norm(g0), v_perp / np.linalg.norm(v_perp)], axis=1)
    q = traj.positions
    off = q - (q @ basis) @ basis.T
    return float(np.max(np.linalg.norm(off, axis=1)))


def conserved_along(fn, traj: Trajectory):
    """Evaluate ``fn(q, v)`` at every node."""
    return np.array([fn(traj.positions[k], traj.velocities[k]) for k in range(len(traj))])
