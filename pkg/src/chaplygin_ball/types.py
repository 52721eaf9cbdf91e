"""Domain types shared across the package.

Every type is immutable once built; constructors validate their invariants
and raise :class:`ConfigError` (or a subclass) on violation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SPHERE_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid configuration or domain-type construction."""


class DomainError(ValueError):
    """A point left the region where a field is defined or nonvanishing."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BallConfig:
    """Diagonal inertia parameters and the geometry ratio of the rolling ball.

    The special inertia operator acts on bivectors as ``I(X ^ Y) = AX ^ AY``
    with ``A = diag(a)``; ``epsilon = sigma / (sigma +- rho)``.
    """

    n: int
    a: np.ndarray
    epsilon: float

    @property
    def a_inv(self) -> np.ndarray:
        return 1.0 / self.a

    @property
    def a_sqrt(self) -> np.ndarray:
        return np.sqrt(self.a)

    def with_epsilon(self, epsilon: float) -> "BallConfig":
        return make_ball_config(self.n, self.a, epsilon)


def make_ball_config(n, a, epsilon) -> BallConfig:
    """Validate ``(n, a, epsilon)`` and build a :class:`BallConfig`."""
    n = int(n)
    if n < 2:
        raise ConfigError(f"dimension must be >= 2, got {n}")
    a = np.asarray(a, dtype=float).ravel()
    if a.shape != (n,):
        raise ConfigError(f"dimension mismatch: n={n} but a has {a.size} entries")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ConfigError(f"inertia parameters must be positive, got {a.tolist()}")
    epsilon = float(epsilon)
    if epsilon == 0 or not np.isfinite(epsilon):
        raise ConfigError("epsilon must be a finite nonzero real")
    return BallConfig(n, _frozen(a), epsilon)


def epsilon_from_radii(sigma: float, rho: float, case: str) -> float:
    """Geometry ratio for the three rolling configurations.

    Case ``"i"`` (outside the fixed sphere) uses ``sigma + rho``; cases
    ``"ii"`` and ``"iii"`` use ``sigma - rho``.
    """
    if sigma <= 0 or rho <= 0:
        raise ConfigError("radii must be positive")
    if case == "i":
        return sigma / (sigma + rho)
    if case == "ii":
        if not sigma > rho:
            raise ConfigError("case ii requires sigma > rho")
        return sigma / (sigma - rho)
    if case == "iii":
        if not sigma < rho:
            raise ConfigError("case iii requires sigma < rho")
        return sigma / (sigma - rho)
    raise ConfigError(f"unknown rolling case {case!r}; expected 'i', 'ii' or 'iii'")


@dataclass(frozen=True)
class SphereState:
    """A point on the unit sphere together with a tangent velocity."""

    gamma: np.ndarray
    gamma_dot: np.ndarray

    def __post_init__(self):
        g = _frozen(self.gamma)
        v = _frozen(self.gamma_dot)
        if g.ndim != 1 or g.shape != v.shape:
            raise ConfigError("gamma and gamma_dot must be 1-d vectors of equal length")
        if abs(g @ g - 1.0) > SPHERE_TOL:
            raise ConfigError(f"|gamma|^2 - 1 = {g @ g - 1.0:.3e} exceeds {SPHERE_TOL}")
        if abs(g @ v) > SPHERE_TOL * max(1.0, float(np.linalg.norm(v))):
            raise ConfigError(f"(gamma, gamma_dot) = {g @ v:.3e} is not tangent")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "gamma_dot", v)

    @property
    def n(self) -> int:
        return self.gamma.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.gamma_dot])


def project_state(gamma_raw, gamma_dot_raw) -> SphereState:
    """Normalize the position and drop the normal part of the velocity."""
    g = np.asarray(gamma_raw, dtype=float)
    v = np.asarray(gamma_dot_raw, dtype=float)
    norm = np.linalg.norm(g)
    if norm == 0 or not np.isfinite(norm):
        raise ConfigError("cannot project a zero position vector onto the sphere")
    g = g / norm
    v = v - (v @ g) * g
    # second pass removes the O(eps * |v|) residue left by the first
    v = v - (v @ g) * g
    return SphereState(g, v)


@dataclass(frozen=True)
class AffinePower:
    """Scalar field ``coef * (c + (q, M q))**p`` with ``M = diag(m)``.

    The single parametric family used for every multiplier, conformal factor
    and Jacobi factor in the package.
    """

    c: float
    m: np.ndarray
    p: float
    coef: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen(np.ravel(self.m)))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "coef", float(self.coef))

    @classmethod
    def constant(cls, value: float, n: int) -> "AffinePower":
        return cls(1.0, np.zeros(n), 0.0, value)

    def base(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return self.c + np.sum(self.m * q * q, axis=-1)

    def __call__(self, q):
        return self.coef * self.base(q) ** self.p

    def grad(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.p == 0:
            return np.zeros_like(q)
        b = self.base(q)
        return (self.coef * self.p * b ** (self.p - 1.0))[..., None] * 2.0 * self.m * q

    def grad_log(self, q) -> np.ndarray:
        """Gradient of ``ln |field|``."""
        q = np.asarray(q, dtype=float)
        if self.p == 0:
            return np.zeros_like(q)
        return (self.p / self.base(q))[..., None] * 2.0 * self.m * q

    def reciprocal(self) -> "AffinePower":
        """The field ``1 / self``, used to undo a reparametrization."""
        return AffinePower(self.c, self.m, -self.p, 1.0 / self.coef)

    def base_range(self, lo, hi) -> tuple[float, float]:
        """Exact range of ``c + (q, M q)`` over the box ``lo <= q <= hi``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        sq_lo = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(lo * lo, hi * hi))
        sq_hi = np.maximum(lo * lo, hi * hi)
        terms_lo = np.where(self.m >= 0, self.m * sq_lo, self.m * sq_hi)
        terms_hi = np.where(self.m >= 0, self.m * sq_hi, self.m * sq_lo)
        return self.c + float(terms_lo.sum()), self.c + float(terms_hi.sum())


@dataclass(frozen=True)
class FlatFieldConfig:
    """Scalar fields ``f`` and ``nu`` on a Euclidean box, plus an optional potential.

    ``nu`` is either an independent :class:`AffinePower` or ``f**alpha``.
    The potential, when present, is ``V(q) = (q, K q) / 2`` with ``K = diag(k)``.
    """

    n: int
    f: AffinePower
    box: tuple
    nu_field: Optional[AffinePower] = None
    alpha: Optional[float] = None
    potential_k: Optional[np.ndarray] = field(default=None)

    def f_value(self, q):
        return self.f(q)

    def nu(self, q):
        if self.alpha is not None:
            return self.f(q) ** self.alpha
        return self.nu_field(q)

    def grad_ln_f(self, q):
        return self.f.grad_log(q)

    def grad_ln_nu(self, q):
        if self.alpha is not None:
            return self.alpha * self.f.grad_log(q)
        return self.nu_field.grad_log(q)

    def grad_nu(self, q):
        return np.asarray(self.nu(q))[..., None] * self.grad_ln_nu(q)

    def potential(self, q):
        q = np.asarray(q, dtype=float)
        if self.potential_k is None:
            return 0.0 * np.sum(q, axis=-1)
        return 0.5 * np.sum(self.potential_k * q * q, axis=-1)

    def grad_potential(self, q):
        q = np.asarray(q, dtype=float)
        if self.potential_k is None:
            return np.zeros_like(q)
        return self.potential_k * q

    def contains(self, q) -> bool:
        lo, hi = self.box
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= lo) and np.all(q <= hi))

    def nu_multiplier(self) -> AffinePower:
        """``nu`` as a single :class:`AffinePower` (used by time maps)."""
        if self.alpha is None:
            return self.nu_field
        f = self.f
        return AffinePower(f.c, f.m, f.p * self.alpha, f.coef ** self.alpha)


def _check_nonvanishing(name: str, fld: AffinePower, lo, hi) -> None:
    b_lo, b_hi = fld.base_range(lo, hi)
    if fld.coef == 0:
        raise ConfigError(f"{name} vanishes identically")
    if fld.p == 0:
        return
    if b_lo <= 0 <= b_hi:
        raise ConfigError(f"{name} base c + (q, Mq) reaches zero on the box (range [{b_lo:.3g}, {b_hi:.3g}])")
    if b_hi < 0 and not float(fld.p).is_integer():
        raise ConfigError(f"{name} has a negative base with non-integer power")


def make_flat_fields(n, f: AffinePower, box, nu: Optional[AffinePower] = None,
                     alpha: Optional[float] = None, potential_k=None) -> FlatFieldConfig:
    """Build a :class:`FlatFieldConfig`, rejecting fields that vanish on the box."""
    n = int(n)
    lo, hi = (np.asarray(b, dtype=float).ravel() for b in box)
    if lo.shape != (n,) or hi.shape != (n,) or np.any(lo >= hi):
        raise ConfigError("box must be a pair of length-n vectors with lo < hi")
    if f.m.shape != (n,):
        raise ConfigError("f parameters do not match the dimension")
    if (nu is None) == (alpha is None):
        raise ConfigError("give exactly one of nu and alpha")
    _check_nonvanishing("f", f, lo, hi)
    if nu is not None:
        if nu.m.shape != (n,):
            raise ConfigError("nu parameters do not match the dimension")
        _check_nonvanishing("nu", nu, lo, hi)
    else:
        alpha = float(alpha)
        if not alpha.is_integer() and f.coef < 0:
            raise ConfigError("nu = f**alpha needs f > 0 for non-integer alpha")
    if potential_k is not None:
        potential_k = _frozen(np.ravel(potential_k))
        if potential_k.shape != (n,):
            raise ConfigError("potential_k does not match the dimension")
    return FlatFieldConfig(n, f, (_frozen(lo), _frozen(hi)), nu, alpha, potential_k)


def jacobi_fields(h: float, potential_k, box) -> FlatFieldConfig:
    """Fields of the Maupertuis special case: ``f = sqrt(h - V)``, ``nu = f**2``."""
    k = np.asarray(potential_k, dtype=float).ravel()
    f = AffinePower(h, -0.5 * k, 0.5)
    return make_flat_fields(k.size, f, box, alpha=2.0, potential_k=k)
