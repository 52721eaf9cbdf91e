"""Input checking for array-shaped public entry points."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .types import BallConfig, make_ball_config


def check_ball_params(a, epsilon) -> BallConfig:
    a = np.asarray(a, dtype=float).ravel()
    return make_ball_config(a.size, a, epsilon)


def check_points(X, n: int, tol: float = 1e-9) -> np.ndarray:
    """2-d array of unit vectors in R^n, one per row."""
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != n:
        raise ValueError(f"expected {n} columns, got {X.shape[1]}")
    dev = np.abs(np.linalg.norm(X, axis=1) - 1.0)
    if np.any(dev > tol):
        raise ValueError(f"rows must be unit vectors (max deviation {dev.max():.3e})")
    return X


def check_states(X, n: int, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Split rows ``[q, q_dot]`` of shape (m, 2n), checking the sphere constraints."""
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != 2 * n:
        raise ValueError(f"expected {2 * n} columns (position then velocity), got {X.shape[1]}")
    Q, V = X[:, :n], X[:, n:]
    check_points(Q, n, tol)
    tang = np.abs(np.sum(Q * V, axis=1))
    if np.any(tang > tol * np.maximum(1.0, np.linalg.norm(V, axis=1))):
        raise ValueError("velocities must be tangent to the sphere")
    return Q, V
