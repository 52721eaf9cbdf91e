import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaplygin_ball import coords as co
from chaplygin_ball.analysis import chaplygin_chain, normalize_unit_energy
from chaplygin_ball.dynamics import make_flow
from chaplygin_ball.integrate import integrate
from chaplygin_ball.types import ConfigError, make_ball_config, project_state

seeds = st.integers(0, 2**32 - 1)
ANALYTIC = make_ball_config(3, [1.0, 0.5, 1.0 / 3.0], 1.0)  # a^-1 = (1, 2, 3)


def _random_cfg(rng, n):
    return make_ball_config(n, np.sort(rng.uniform(0.3, 4.0, size=n))[::-1], 1.0)


def _random_u(rng, cfg):
    poles = cfg.a_inv
    return poles[:-1] + rng.uniform(0.02, 0.98, size=cfg.n - 1) * np.diff(poles)


def test_analytic_roots():
    u = co.u_from_x(ANALYTIC, np.ones(3) / np.sqrt(3)).u
    # independent oracle: roots of 3 z^2 - 12 z + 11
    oracle = np.sort(np.roots([3.0, -12.0, 11.0]))
    np.testing.assert_allclose(u, oracle, atol=1e-12)
    np.testing.assert_allclose(u, [2 - 1 / np.sqrt(3), 2 + 1 / np.sqrt(3)], atol=1e-12)
    np.testing.assert_allclose(co.x_from_u(ANALYTIC, u), 1 / 3, atol=1e-12)
    np.testing.assert_allclose(co.gamma_from_u(ANALYTIC, u), co.gamma_from_u_via_x(ANALYTIC, u), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_roundtrip_and_interlacing(seed):
    rng = np.random.default_rng(seed)
    cfg = _random_cfg(rng, int(rng.integers(3, 6)))
    x = rng.normal(size=cfg.n)
    x /= np.linalg.norm(x)
    u = co.u_from_x(cfg, x).u
    co.check_interlacing(cfg, u)
    np.testing.assert_allclose(co.x_from_u(cfg, u), x * x, atol=1e-10)


def test_roundtrip_on_thousand_samples():
    rng = np.random.default_rng(99)
    worst = 0.0
    for k in range(1000):
        cfg = _random_cfg(rng, 3 + k % 3)
        u = _random_u(rng, cfg)
        back = co.u_from_x(cfg, np.sqrt(co.x_from_u(cfg, u))).u
        worst = max(worst, np.max(np.abs(back - u)))
    assert worst <= 1e-10


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_squares_are_normalized(seed):
    rng = np.random.default_rng(seed)
    cfg = _random_cfg(rng, int(rng.integers(3, 6)))
    u = _random_u(rng, cfg)
    x2 = co.x_from_u(cfg, u)
    g2 = co.gamma_from_u(cfg, u)
    assert np.all(x2 > 0) and np.all(g2 > 0)
    assert x2.sum() == pytest.approx(1.0, abs=1e-12)
    assert g2.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(g2, co.gamma_from_u_via_x(cfg, u), atol=1e-12)


def test_midpoints_give_positive_squares():
    cfg = make_ball_config(4, [4.0, 3.0, 2.0, 1.0], 1.0)
    poles = cfg.a_inv
    assert np.all(co.x_from_u(cfg, 0.5 * (poles[:-1] + poles[1:])) > 0)


def test_preconditions():
    with pytest.raises(ConfigError):
        co.u_from_x(make_ball_config(3, [1, 2, 3], 1.0), np.ones(3) / np.sqrt(3))
    with pytest.raises(ConfigError):
        co.u_from_x(ANALYTIC, np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ConfigError):
        co.x_from_u(ANALYTIC, [0.5, 2.5])
    with pytest.raises(ConfigError):
        co.bm_correspondence_check(make_ball_config(3, [2, 2, 1], 1.0), [0.6, 0.8])


def test_signed_sqrt():
    np.testing.assert_array_equal(co.signed_sqrt([4.0, 9.0, 1.0], [-1.0, 2.0, 0.0]), [-2.0, 3.0, 1.0])


def test_bm_params():
    np.testing.assert_array_equal(co.bm_params(make_ball_config(3, [1, 2, 3], 1.0)), [6, 3, 2])
    np.testing.assert_array_equal(co.bm_params(make_ball_config(3, [1, 1, 1], 1.0)), [1, 1, 1])
    with pytest.raises(ConfigError):
        co.bm_params(make_ball_config(4, [4, 3, 2, 1], 1.0))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_bm_ordering_reverses(seed):
    cfg = _random_cfg(np.random.default_rng(seed), 3)
    J = co.bm_params(cfg)
    assert J[0] < J[1] < J[2]


def test_bm_correspondence():
    perm, a = co.sort_decreasing([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(perm, [2, 1, 0])
    cfg = make_ball_config(3, a, 1.0)
    rng = np.random.default_rng(3)
    for _ in range(200):
        u = _random_u(rng, cfg)
        assert co.bm_correspondence_check(cfg, u) <= 1e-12
        P = np.prod(cfg.a)
        _, eta2 = co.bm_gamma_squares(co.bm_params(cfg), P * u[0], P * u[1])
        assert abs(eta2 * P * (cfg.a_inv.sum() - u.sum()) - 1) <= 1e-13


def test_conic_membership():
    cfg = make_ball_config(3, [3.0, 2.0, 1.0], 1.0)
    rng = np.random.default_rng(4)
    P = np.prod(cfg.a)
    J = co.bm_params(cfg)
    for _ in range(200):
        u = _random_u(rng, cfg)
        g = co.signed_sqrt(co.gamma_from_u(cfg, u), rng.normal(size=3))
        assert abs(co.conic_residual(cfg, g, P * u[0])) <= 1e-11
        assert abs(co.conic_residual(cfg, g, P * u[1])) <= 1e-11
    # away from both roots the pencil does not vanish
    u = np.array([0.4, 0.8])
    g = np.sqrt(co.gamma_from_u(cfg, u))
    z = 0.5 * (P * u[0] + J[1]) if P * u[0] < J[1] else 0.5 * (P * u[0] + J[0])
    assert abs(co.conic_residual(cfg, g, z)) > 1e-3
    with pytest.raises(ZeroDivisionError):
        co.conic_residual(cfg, g, J[0])


def test_neumann_arc_stays_interlaced():
    cfg = make_ball_config(3, [3.0, 2.0, 1.0], -1.0)
    state = normalize_unit_energy(cfg, project_state([0.5, -0.4, 0.7], [0.3, 0.6, 0.1]))
    traj = integrate(make_flow("reduced", cfg), state, (0.0, 5.0))
    chain, _ = chaplygin_chain(cfg, traj)
    poles = cfg.a_inv
    margin = 1e-9
    for x in chain.positions:
        if np.min(np.abs(x)) < 1e-8:
            continue
        u = co.u_from_x(cfg, x).u
        assert np.all(u > poles[:-1] - margin) and np.all(u < poles[1:] + margin)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_conic_residual_small_relative_to_terms_for_random_a(seed):
    """For arbitrary ordered a the residual stays at roundoff relative to its largest term."""
    rng = np.random.default_rng(seed)
    cfg = _random_cfg(rng, 3)
    u = _random_u(rng, cfg)
    g = np.sqrt(co.gamma_from_u(cfg, u))
    J = co.bm_params(cfg)
    for z in np.prod(cfg.a) * u:
        terms = cfg.a * g * g / (J - z)
        assert abs(co.conic_residual(cfg, g, z)) <= 1e-11 * max(1.0, np.abs(terms).max())
