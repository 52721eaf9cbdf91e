"""Adaptive integration of second-order flows and time reparametrization.

The integrator is a Dormand-Prince 5(4) pair with PI step control.  Sphere
flows are stabilized by projecting every accepted state back onto the
constraint manifold.  Trajectories carry position, velocity and acceleration
at each node and interpolate with a quintic Hermite polynomial per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .dynamics import Flow
from .types import AffinePower, SphereState, project_state

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 10.0

PROJECTION_REJECT = 1e-8
CONSTRAINT_FATAL = 1e-6


class IntegrationError(RuntimeError):
    """The integrator could not advance."""


class StepSizeError(IntegrationError):
    pass


class ConstraintViolationError(IntegrationError):
    pass


def _quintic_hermite_matrix() -> np.ndarray:
    # rows: P(0), P'(0), P''(0), P(1), P'(1), P''(1) for P(s) = sum c_j s^j
    M = np.zeros((6, 6))
    for j in range(6):
        M[0, j] = 1.0 if j == 0 else 0.0
        M[1, j] = 1.0 if j == 1 else 0.0
        M[2, j] = 2.0 if j == 2 else 0.0
        M[3, j] = 1.0
        M[4, j] = j
        M[5, j] = j * (j - 1)
    return np.linalg.inv(M)


_HERMITE = _quintic_hermite_matrix()


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped samples of a second-order flow with dense output.

    ``times`` is strictly monotone (increasing or decreasing).  Between two
    nodes the position is the quintic Hermite interpolant matching position,
    velocity and acceleration at both ends.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    on_sphere: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a trajectory needs at least two samples")
        d = np.diff(t)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("trajectory times must be strictly monotone")
        arrays = [np.asarray(x, dtype=float) for x in (self.positions, self.velocities, self.accelerations)]
        for arr in arrays:
            if arr.shape != (t.size, arrays[0].shape[1]):
                raise ValueError("state arrays must have shape (len(times), n)")
        for name, arr in zip(("times", "positions", "velocities", "accelerations"), [t, *arrays]):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.times.size

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def direction(self) -> int:
        return 1 if self.times[-1] > self.times[0] else -1

    def state(self, k: int) -> SphereState:
        return project_state(self.positions[k], self.velocities[k])

    @property
    def states(self) -> list:
        return [self.state(k) for k in range(len(self))]

    def _locate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = min(self.times[0], self.times[-1]), max(self.times[0], self.times[-1])
        span = hi - lo
        if np.any(t < lo - 1e-12 * max(1.0, span)) or np.any(t > hi + 1e-12 * max(1.0, span)):
            raise ValueError(f"time outside trajectory range [{lo}, {hi}]")
        key = self.times if self.direction > 0 else -self.times
        tk = t if self.direction > 0 else -t
        k = np.clip(np.searchsorted(key, tk, side="right") - 1, 0, len(self) - 2)
        return t, k

    def evaluate(self, t, derivatives: int = 2):
        """Dense output at ``t``: ``(q, q_dot, q_ddot)`` (leading axis follows ``t``)."""
        scalar = np.ndim(t) == 0
        t, k = self._locate(t)
        t0 = self.times[k]
        h = (self.times[k + 1] - t0)[:, None]
        s = ((t - t0) / h[:, 0])[:, None]
        data = np.stack([
            self.positions[k], h * self.velocities[k], h * h * self.accelerations[k],
            self.positions[k + 1], h * self.velocities[k + 1], h * h * self.accelerations[k + 1],
        ])  # (6, m, n)
        coeffs = np.einsum("jr,rmn->jmn", _HERMITE, data)  # polynomial coefficients in s
        powers = np.arange(6)
        out = []
        for d in range(derivatives + 1):
            fact = np.array([_falling(j, d) for j in powers], dtype=float)
            sp = np.where(powers >= d, s ** np.maximum(powers - d, 0), 0.0)  # (m, 6)
            val = np.einsum("mj,jmn->mn", sp * fact, coeffs) / h**d
            out.append(val[0] if scalar else val)
        return tuple(out)

    def __call__(self, t):
        q, v = self.evaluate(t, derivatives=1)
        return q, v

    def constraint_deviation(self) -> tuple[float, float]:
        """``(max ||q| - 1|, max |(q, q_dot)|)`` over stored samples."""
        norms = np.linalg.norm(self.positions, axis=1)
        tang = np.abs(np.sum(self.positions * self.velocities, axis=1))
        return float(np.max(np.abs(norms - 1.0))), float(np.max(tang))


def _falling(j: int, d: int) -> int:
    out = 1
    for r in range(d):
        out *= j - r
    return out


def _initial_step(fun, t0, y0, f0, direction, rtol, atol) -> float:
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = fun(y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _unpack_state(state0):
    if isinstance(state0, SphereState):
        return state0.gamma.copy(), state0.gamma_dot.copy()
    q, v = state0
    return np.asarray(q, dtype=float).copy(), np.asarray(v, dtype=float).copy()


def integrate(flow: Flow, state0, t_span, rel_tol: float = 1e-10, abs_tol: float = 1e-10,
              max_step: float = np.inf, max_steps: int = 1_000_000) -> Trajectory:
    """Integrate a second-order flow with Dormand-Prince 5(4) and PI step control.

    Parameters
    ----------
    flow : Flow
        What to integrate (see :func:`chaplygin_ball.dynamics.make_flow`).
    state0 : SphereState or (q, q_dot)
        Initial condition; sphere flows require a :class:`SphereState`.
    t_span : (t0, t1)
        Integration interval; ``t1 < t0`` integrates backwards.
    rel_tol, abs_tol : float
        Local error tolerances, each in ``[1e-13, 1e-3]``.

    Raises
    ------
    StepSizeError
        Step size underflow.
    ConstraintViolationError
        Sphere constraint drift above ``1e-6`` that step rejection cannot cure.
    """
    for tol in (rel_tol, abs_tol):
        if not 1e-13 <= tol <= 1e-3:
            raise ValueError(f"tolerance {tol} outside [1e-13, 1e-3]")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 == t1:
        raise ValueError("empty integration interval")
    if flow.on_sphere and not isinstance(state0, SphereState):
        raise TypeError("sphere flows need a SphereState initial condition")
    q0, v0 = _unpack_state(state0)
    n = q0.size
    direction = 1.0 if t1 > t0 else -1.0

    def fun(y):
        q, v = y[:n], y[n:]
        return np.concatenate([v, flow.acceleration(q, v)])

    y = np.concatenate([q0, v0])
    f = fun(y)
    h = min(_initial_step(fun, t0, y, f, direction, rel_tol, abs_tol), max_step, abs(t1 - t0))

    ts, ys, fs = [t0], [y.copy()], [f.copy()]
    t = t0
    err_prev = 1e-4
    constraint_rejects = 0
    K = np.empty((7, 2 * n))
    for _ in range(max_steps):
        if direction * (t1 - t) <= 0:
            break
        if h < 10 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StepSizeError(f"step size underflow at t={t}")
        h = min(h, abs(t1 - t))
        hs = direction * h
        K[0] = f
        for i in range(1, 7):
            K[i] = fun(y + hs * (np.asarray(_A[i]) @ K[:i]))
        y_new = y + hs * (_B5 @ K)
        err_vec = hs * (_E @ K)
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            h *= _FAC_MIN
            continue
        if err > 1.0:
            h *= max(_FAC_MIN, _SAFETY * err ** -_EXPO)
            continue

        if flow.on_sphere:
            q, v = y_new[:n], y_new[n:]
            drift = max(abs(np.linalg.norm(q) - 1.0), abs(q @ v) / max(1.0, np.linalg.norm(v)))
            if drift > PROJECTION_REJECT:
                constraint_rejects += 1
                if constraint_rejects > 30 and drift > CONSTRAINT_FATAL:
                    raise ConstraintViolationError(f"constraint drift {drift:.3e} at t={t}")
                h *= 0.5
                continue
            st = project_state(q, v)
            y_new = np.concatenate([st.gamma, st.gamma_dot])
            f_new = fun(y_new)
        else:
            f_new = K[6].copy()
        constraint_rejects = 0

        t = t1 if h == abs(t1 - t) else t + hs
        y, f = y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        fs.append(f.copy())

        fac = err ** _EXPO / err_prev ** _BETA / _SAFETY if err > 0 else 1.0 / _FAC_MAX
        fac = min(1.0 / _FAC_MIN, max(1.0 / _FAC_MAX, fac))
        h = min(h / fac, max_step)
        err_prev = max(err, 1e-4)
    else:
        raise StepSizeError(f"exceeded {max_steps} steps")

    Y = np.array(ys)
    F = np.array(fs)
    return Trajectory(np.array(ts), Y[:, :n], Y[:, n:], F[:, n:], on_sphere=flow.on_sphere,
                      meta={"flow": flow.tag, "rel_tol": rel_tol, "abs_tol": abs_tol})


_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def _gauss_legendre(fn: Callable, a: float, b: float) -> float:
    nodes = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return 0.5 * (b - a) * float(_GL_W @ fn(nodes))


class MultiplierSignError(ValueError):
    """The time-map multiplier changes sign or vanishes along the trajectory."""


@dataclass(frozen=True)
class ReparamMap:
    """Monotone correspondence ``tau(t) = tau_0 + int nu(q(s)) ds``.

    Nodes sit at the trajectory samples; between nodes the integral is
    evaluated by 5-point Gauss-Legendre quadrature on the dense output.
    """

    t_nodes: np.ndarray
    tau_nodes: np.ndarray
    multiplier_sign: int
    density: Optional[Callable] = field(default=None, compare=False, repr=False)
    quadrature_error: float = 0.0

    def __post_init__(self):
        if self.multiplier_sign not in (1, -1):
            raise ValueError("multiplier_sign must be +1 or -1")
        t = np.asarray(self.t_nodes, dtype=float)
        tau = np.asarray(self.tau_nodes, dtype=float)
        if t.shape != tau.shape:
            raise ValueError("t_nodes and tau_nodes differ in length")
        dt, dtau = np.diff(t), np.diff(tau)
        if not np.all(np.sign(dtau) == np.sign(dt) * self.multiplier_sign):
            raise ValueError("tau_nodes are not strictly monotone in the multiplier direction")
        object.__setattr__(self, "t_nodes", t)
        object.__setattr__(self, "tau_nodes", tau)

    @property
    def tau_range(self) -> tuple[float, float]:
        return float(self.tau_nodes[0]), float(self.tau_nodes[-1])

    def _step(self, k, t):
        if self.density is None:
            t0, t1 = self.t_nodes[k], self.t_nodes[k + 1]
            return self.tau_nodes[k] + (t - t0) / (t1 - t0) * (self.tau_nodes[k + 1] - self.tau_nodes[k])
        return self.tau_nodes[k] + _gauss_legendre(self.density, self.t_nodes[k], t)

    @staticmethod
    def _index(nodes, x):
        key, xk = (nodes, x) if nodes[-1] > nodes[0] else (-nodes, -x)
        return int(np.clip(np.searchsorted(key, xk, side="right") - 1, 0, nodes.size - 2))

    def tau(self, t):
        """Forward lookup ``t -> tau``."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([self._step(self._index(self.t_nodes, x), x) for x in ts])
        return out[0] if np.ndim(t) == 0 else out

    def t_of(self, tau):
        """Inverse lookup ``tau -> t``."""
        taus = np.atleast_1d(np.asarray(tau, dtype=float))
        lo, hi = sorted(self.tau_range)
        tol = 1e-12 * max(1.0, hi - lo)
        out = np.empty(taus.size)
        for i, target in enumerate(taus):
            if target < lo - tol or target > hi + tol:
                raise ValueError(f"tau={target} outside map range [{lo}, {hi}]")
            k = self._index(self.tau_nodes, target)
            a, b = self.t_nodes[k], self.t_nodes[k + 1]
            ga = self.tau_nodes[k] - target
            gb = self.tau_nodes[k + 1] - target
            if ga == 0:
                out[i] = a
            elif gb == 0:
                out[i] = b
            elif np.sign(ga) == np.sign(gb):
                out[i] = a if abs(ga) < abs(gb) else b
            else:
                out[i] = brentq(lambda s: self._step(k, s) - target, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return out[0] if np.ndim(tau) == 0 else out


def time_map(traj: Trajectory, multiplier, tau0: float = 0.0) -> ReparamMap:
    """Build ``tau(t)`` by per-step quadrature of ``multiplier(q(t))``.

    ``multiplier`` is any callable on positions (typically an
    :class:`~chaplygin_ball.types.AffinePower`).  A constant number is
    accepted as shorthand.
    """
    if np.isscalar(multiplier):
        multiplier = AffinePower.constant(float(multiplier), traj.n)

    def density(t):
        q = traj.evaluate(t, derivatives=0)[0]
        return np.asarray(multiplier(q), dtype=float)

    t = traj.times
    node_vals = np.asarray(multiplier(traj.positions), dtype=float)
    mid = 0.5 * (t[:-1] + t[1:])
    quad_nodes = (0.5 * (t[1:] - t[:-1])[:, None] * _GL_X + mid[:, None]).ravel()
    all_vals = np.concatenate([node_vals, density(quad_nodes)])
    if np.any(all_vals == 0) or not (np.all(all_vals > 0) or np.all(all_vals < 0)):
        raise MultiplierSignError("multiplier vanishes or changes sign along the trajectory")
    sign = 1 if all_vals[0] > 0 else -1

    steps = np.empty(t.size - 1)
    err = 0.0
    for k in range(t.size - 1):
        a, b = t[k], t[k + 1]
        full = _gauss_legendre(density, a, b)
        m = 0.5 * (a + b)
        halves = _gauss_legendre(density, a, m) + _gauss_legendre(density, m, b)
        steps[k] = full
        err += abs(full - halves)
    tau = tau0 + np.concatenate([[0.0], np.cumsum(steps)])
    rate = err / abs(t[-1] - t[0])
    return ReparamMap(t, tau, sign, density=density, quadrature_error=rate)


def resample(traj: Trajectory, rmap: ReparamMap, multiplier, num: Optional[int] = None,
             tau_grid=None) -> Trajectory:
    """Re-express ``traj`` in the new time ``tau``.

    Samples are uniform in ``tau`` over the image interval unless
    ``tau_grid`` is given.  Velocities become ``q' = q_dot / nu`` and
    accelerations ``q'' = (q_ddot - (nu_dot / nu) q_dot) / nu^2``.
    """
    if np.isscalar(multiplier):
        multiplier = AffinePower.constant(float(multiplier), traj.n)
    if tau_grid is None:
        num = len(traj) if num is None else int(num)
        tau_grid = np.linspace(*rmap.tau_range, num)
    tau_grid = np.asarray(tau_grid, dtype=float)
    t_grid = rmap.t_of(tau_grid)
    q, v, a = traj.evaluate(t_grid)
    nu = np.asarray(multiplier(q), dtype=float)[:, None]
    nu_dot = np.sum(multiplier.grad(q) * v, axis=1)[:, None]
    qp = v / nu
    qpp = (a - (nu_dot / nu) * v) / nu**2
    meta = dict(traj.meta)
    meta["t_of_tau"] = t_grid
    return Trajectory(tau_grid, q, qp, qpp, on_sphere=traj.on_sphere, meta=meta)
