"""scikit-learn style wrappers around the sphere maps and the reduced flow.

The transformers are stateless apart from validated parameters, so ``fit``
only checks the configuration; they compose with ``sklearn.pipeline``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import chain_multiplier, normalize_unit_energy
from .coords import sort_decreasing, u_from_x, x_from_u
from .dynamics import make_flow
from .geometry import gamma_to_x, gamma_to_x_jet, x_to_gamma, x_to_gamma_jet
from .integrate import integrate
from .types import make_ball_config, project_state
from .validation import check_ball_params, check_points, check_states


class SphereMapTransformer(TransformerMixin, BaseEstimator):
    """Map unit vectors ``gamma`` to ``x = A^(1/2) gamma / sqrt((A gamma, gamma))``.

    Parameters
    ----------
    a : array-like of shape (n,)
        Positive inertia parameters.
    """

    def __init__(self, a=(1.0, 1.0, 1.0)):
        self.a = a

    def fit(self, X, y=None):
        self.config_ = check_ball_params(self.a, 1.0)
        self.n_features_in_ = self.config_.n
        check_points(X, self.n_features_in_)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        return gamma_to_x(self.config_, check_points(X, self.n_features_in_))

    def inverse_transform(self, X):
        check_is_fitted(self, "config_")
        return x_to_gamma(self.config_, check_points(X, self.n_features_in_))


class SpheroConicalTransformer(TransformerMixin, BaseEstimator):
    """Sphero-conical coordinates of points on the unit sphere.

    ``a`` may be given in any order with distinct entries; it is sorted
    decreasingly and the column permutation is kept in ``permutation_``.
    ``inverse_transform`` returns the nonnegative roots of ``x_i^2`` in the
    original column order (the coordinates do not see signs).
    """

    def __init__(self, a=(3.0, 2.0, 1.0)):
        self.a = a

    def fit(self, X=None, y=None):
        perm, a_sorted = sort_decreasing(self.a)
        self.permutation_ = perm
        self.config_ = make_ball_config(a_sorted.size, a_sorted, 1.0)
        if np.any(np.diff(a_sorted) >= 0):
            raise ValueError("entries of a must be distinct")
        self.n_features_in_ = a_sorted.size
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_points(X, self.n_features_in_)
        return np.array([u_from_x(self.config_, row[self.permutation_]).u for row in X])

    def inverse_transform(self, U):
        check_is_fitted(self, "config_")
        U = check_array(U, dtype=np.float64)
        out = np.empty((U.shape[0], self.n_features_in_))
        for k, row in enumerate(U):
            out[k, self.permutation_] = np.sqrt(x_from_u(self.config_, row))
        return out


class ChaplyginStateMap(TransformerMixin, BaseEstimator):
    """Pointwise state map from the reduced flow to the natural system.

    A row ``[gamma, gamma_dot]`` is rescaled to unit reduced kinetic energy
    (when ``normalize`` is set) and sent to ``[x, dx/ds]``; the image lies on
    the zero-energy surface of the natural system for the same ``epsilon``.
    """

    def __init__(self, a=(1.0, 2.0, 3.0), epsilon=-1.0, normalize=True):
        self.a = a
        self.epsilon = epsilon
        self.normalize = normalize

    def fit(self, X=None, y=None):
        self.config_ = check_ball_params(self.a, self.epsilon)
        self.n_features_in_ = 2 * self.config_.n
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        cfg = self.config_
        G, V = check_states(X, cfg.n)
        if self.normalize:
            V = np.array([normalize_unit_energy(cfg, project_state(g, v)).gamma_dot for g, v in zip(G, V)])
        x, xd = gamma_to_x_jet(cfg, G, V)
        nu = chain_multiplier(cfg)(x)[:, None]
        return np.hstack([x, xd / nu])

    def inverse_transform(self, X):
        check_is_fitted(self, "config_")
        cfg = self.config_
        x, xp = check_states(X, cfg.n)
        nu = chain_multiplier(cfg)(x)[:, None]
        g, gd = x_to_gamma_jet(cfg, x, xp * nu)
        return np.hstack([g, gd])


class ReducedFlowSimulator(BaseEstimator):
    """Integrate the reduced rolling flow (or the natural flow) from many initial states.

    ``fit(X)`` integrates one trajectory per row ``[gamma, gamma_dot]`` over
    ``[0, duration]``; ``predict(times)`` evaluates the dense output and
    returns an array of shape ``(n_rows, len(times), 2 n)``.
    """

    def __init__(self, a=(1.0, 2.0, 3.0), epsilon=1.0, duration=10.0, rel_tol=1e-10,
                 abs_tol=1e-10, system="reduced"):
        self.a = a
        self.epsilon = epsilon
        self.duration = duration
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.system = system

    def fit(self, X, y=None):
        if self.system not in ("reduced", "natural"):
            raise ValueError("system must be 'reduced' or 'natural'")
        self.config_ = check_ball_params(self.a, self.epsilon)
        G, V = check_states(X, self.config_.n)
        flow = make_flow(self.system, self.config_)
        self.trajectories_ = [
            integrate(flow, project_state(g, v), (0.0, float(self.duration)), self.rel_tol, self.abs_tol)
            for g, v in zip(G, V)
        ]
        self.n_features_in_ = 2 * self.config_.n
        return self

    def predict(self, times):
        check_is_fitted(self, "trajectories_")
        times = np.asarray(times, dtype=float).ravel()
        out = []
        for traj in self.trajectories_:
            q, v = traj(times)
            out.append(np.hstack([q, v]))
        return np.array(out)


__all__ = [
    "SphereMapTransformer",
    "SpheroConicalTransformer",
    "ChaplyginStateMap",
    "ReducedFlowSimulator",
]
