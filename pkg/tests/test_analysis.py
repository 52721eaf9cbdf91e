import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaplygin_ball import analysis as an
from chaplygin_ball.dynamics import make_flow
from chaplygin_ball.geometry import gamma_to_x_jet
from chaplygin_ball.integrate import Trajectory, integrate
from chaplygin_ball.types import AffinePower, ConfigError, jacobi_fields, make_ball_config, make_flat_fields, project_state

seeds = st.integers(0, 2**32 - 1)


def _run(cfg, state, t_end=5.0):
    return integrate(make_flow("reduced", cfg), state, (0.0, t_end))


def _unit_run(cfg, seed, t_end=5.0):
    rng = np.random.default_rng(seed)
    state = an.normalize_unit_energy(cfg, project_state(rng.normal(size=cfg.n), rng.normal(size=cfg.n)))
    return _run(cfg, state, t_end)


@pytest.fixture(scope="module")
def neumann():
    cfg = make_ball_config(3, [1, 2, 3], -1.0)
    return cfg, _unit_run(cfg, 12)


@pytest.fixture(scope="module")
def braden():
    cfg = make_ball_config(3, [1, 2, 3], 1.0)
    return cfg, _unit_run(cfg, 13)


def test_drift_report_fields():
    rep = an.drift_report("e", [2.0, 2.1, 1.95], threshold=0.06, relative=True)
    assert rep.initial == 2.0
    assert rep.max_abs_dev == pytest.approx(0.1)
    assert rep.rel_dev == pytest.approx(0.05)
    assert rep.passed is True
    d = rep.to_dict()
    assert set(d) >= {"quantity", "initial", "max_abs_dev", "rel_dev", "threshold", "pass"}
    assert an.drift_report("e", [0.1, -0.2], threshold=0.1, reference=0.0).passed is False
    assert an.drift_report("e", [1.0, 1.0]).passed is None


def test_energy_identity_example():
    cfg = make_ball_config(3, [1, 1, 1], 1.0)
    assert an.energy_g0(cfg, project_state([1, 0, 0], [0, 1, 0])) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_energy_matches_lagrangian_formula(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    cfg = make_ball_config(n, rng.uniform(0.5, 3, size=n), float(rng.choice([-1.0, 0.5, 1.0, 2.0])))
    s = project_state(rng.normal(size=n), rng.normal(size=n))
    assert an.energy_g0(cfg, s) == pytest.approx(an.reduced_lagrangian(cfg, s), rel=1e-13, abs=1e-13)


def test_natural_energy_identity_example():
    cfg = make_ball_config(3, [1, 1, 1], -1.0)
    s = project_state([0, 0, 1], [np.sqrt(2), 0, 0])
    assert an.natural_energy(cfg, s) == pytest.approx(0.0, abs=1e-15)


def test_normalize_unit_energy():
    cfg = make_ball_config(3, [1, 2, 3], 0.7)
    s = an.normalize_unit_energy(cfg, project_state([1, 2, 3], [3, -1, 0.2]))
    again = an.normalize_unit_energy(cfg, s)
    np.testing.assert_allclose(again.gamma_dot, s.gamma_dot, atol=1e-15)
    doubled = project_state(s.gamma, 2 * s.gamma_dot)
    np.testing.assert_allclose(an.normalize_unit_energy(cfg, doubled).gamma_dot, s.gamma_dot, atol=1e-15)
    with pytest.raises(ConfigError):
        an.normalize_unit_energy(cfg, project_state([1, 0, 0], [0, 0, 0]))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_normalize_postcondition(seed):
    rng = np.random.default_rng(seed)
    cfg = make_ball_config(4, rng.uniform(0.5, 3, size=4), float(rng.uniform(0.3, 2)))
    s = an.normalize_unit_energy(cfg, project_state(rng.normal(size=4), rng.normal(size=4)))
    assert an.energy_g0(cfg, s) == pytest.approx(1.0, abs=1e-13)


def test_noether_circle_example():
    cfg = make_ball_config(3, [1, 1, 1], 1.0)
    traj = _run(cfg, project_state([1, 0, 0], [0, 1, 0]), t_end=3.0)
    phi = [an.noether_phi(cfg, 0, 1, traj.state(k)) for k in range(len(traj))]
    np.testing.assert_allclose(phi, 1.0, atol=1e-10)


def test_noether_conserved_for_equal_pair():
    cfg = make_ball_config(3, [2, 2, 5], -1.0)
    traj = _unit_run(cfg, 3)
    phi = [an.noether_phi(cfg, 0, 1, traj.state(k)) for k in range(len(traj))]
    assert an.drift_report("phi", phi).max_abs_dev <= 1e-8


def test_noether_negative_control_warns_and_drifts():
    cfg = make_ball_config(3, [1, 2, 5], -1.0)
    traj = _unit_run(cfg, 3)
    with pytest.warns(an.NonConservedWarning):
        an.noether_phi(cfg, 0, 1, traj.state(0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", an.NonConservedWarning)
        phi = [an.noether_phi(cfg, 0, 1, traj.state(k)) for k in range(len(traj))]
    assert an.drift_report("phi", phi).max_abs_dev > 1e-3


def test_noether_pair_validation():
    cfg = make_ball_config(3, [1, 1, 2], 1.0)
    with pytest.raises(IndexError):
        an.noether_phi(cfg, 0, 0, project_state([1, 0, 0], [0, 1, 0]))


@settings(max_examples=100, deadline=None)
@given(seeds, st.sampled_from([-1.0, 0.7, 1.0, 2.0]))
def test_three_noether_forms_agree(seed, eps):
    """The original-time, g*-time and x-side angular momenta coincide for an equal pair."""
    rng = np.random.default_rng(seed)
    cfg = make_ball_config(4, [2.0, 2.0, 5.0, 5.0], eps)
    s = project_state(rng.normal(size=4), rng.normal(size=4))
    nu_star = an.redsym_multiplier(cfg)(s.gamma)
    g_prime = s.gamma_dot / nu_star
    x, x_dot = gamma_to_x_jet(cfg, s.gamma, s.gamma_dot)
    x_prime = x_dot / an.chain_multiplier(cfg)(x)
    for i, j in [(0, 1), (2, 3)]:
        phi = an.noether_phi(cfg, i, j, s)
        phi_star = an.noether_phi_star(cfg, i, j, s.gamma, g_prime)
        phi_x = an.noether_phi_x(i, j, x, x_prime)
        scale = max(1.0, abs(phi))
        assert phi_star == pytest.approx(phi, abs=1e-12 * scale)
        assert phi_x == pytest.approx(phi, abs=1e-12 * scale)


def test_quad_integral_examples():
    f = AffinePower(1.0, [0.3, 0.2], 0.5)
    fields = make_flat_fields(2, f, ([-2, -2], [2, 2]), alpha=1.0)
    q, v = np.array([0.5, -0.2]), np.array([1.0, 2.0])
    assert an.quad_integral(fields, q, v) == pytest.approx(0.5 * v @ v, rel=1e-14)
    free = make_flat_fields(2, AffinePower.constant(1.0, 2), ([-9, -9], [9, 9]), nu=AffinePower.constant(1.0, 2))
    traj = integrate(make_flow("flat_newton", free), (q, v), (0, 2))
    vals = [an.quad_integral(free, traj.positions[k], traj.velocities[k]) for k in range(len(traj))]
    assert np.all(np.array(vals) == 0.5 * v @ v)


def test_quad_integral_conserved_along_newton_flow():
    fields = make_flat_fields(2, AffinePower(1.0, [0.3, 0.5], 0.5), ([-6, -6], [6, 6]),
                              nu=AffinePower(2.0, [0.2, 0.4], -0.7))
    traj = integrate(make_flow("flat_newton", fields), ([0.3, -0.2], [0.8, 0.5]), (0, 5))
    vals = [an.quad_integral(fields, traj.positions[k], traj.velocities[k]) for k in range(len(traj))]
    assert an.drift_report("quad", vals).rel_dev <= 1e-7


@pytest.mark.parametrize("fixture", ["neumann", "braden"])
def test_chain_lands_on_zero_energy_surface(fixture, request):
    cfg, traj = request.getfixturevalue(fixture)
    chain, reports = an.chaplygin_chain(cfg, traj)
    energy, residual = reports
    assert energy.max_abs_dev <= 1e-7 and energy.passed
    assert residual.max_abs_dev <= 1e-5 and residual.passed
    assert an.cross_check_chain(cfg, traj, chain) <= 1e-5
    assert np.max(np.abs(np.linalg.norm(chain.positions, axis=1) - 1)) <= 1e-9


@pytest.mark.parametrize("route", ["map_first", "reparam_first"])
def test_chain_routes_agree(neumann, route):
    cfg, traj = neumann
    direct, _ = an.chaplygin_chain(cfg, traj, num=200)
    other, reports = an.chaplygin_chain(cfg, traj, num=200, route=route)
    np.testing.assert_allclose(other.times, direct.times, atol=1e-8)
    assert np.max(np.linalg.norm(other.positions - direct.positions, axis=1)) <= 1e-6
    assert all(r.passed for r in reports)


def test_chain_requires_unit_energy():
    cfg = make_ball_config(3, [1, 2, 3], -1.0)
    traj = _run(cfg, project_state([1, 2, 3], [0.1, 0.2, -0.2]), t_end=1.0)
    with pytest.raises(ConfigError):
        an.chaplygin_chain(cfg, traj)
    with pytest.raises(ValueError):
        an.chaplygin_chain(cfg, _unit_run(cfg, 1, 1.0), route="sideways")


@pytest.mark.parametrize("eps", [-1.0, 1.0, 2.0])
def test_chain_symmetric_case_is_great_circle(eps):
    cfg = make_ball_config(3, [1.5, 1.5, 1.5], eps)
    traj = _unit_run(cfg, 21)
    chain, _ = an.chaplygin_chain(cfg, traj)
    assert an.great_circle_deviation(chain) <= 1e-8
    if eps == 1.0:
        ident = make_ball_config(3, [1, 1, 1], 1.0)
        t = _unit_run(ident, 22)
        assert an.cross_check_chain(ident, t) <= 1e-8


def test_gstar_energy_constant_after_reparametrization():
    cfg = make_ball_config(4, [1.0, 1.5, 2.5, 3.0], 0.7)
    g = an.reparametrize_reduced(cfg, _unit_run(cfg, 5))
    e = [an.gstar_energy(cfg, g.positions[k], g.velocities[k]) for k in range(len(g))]
    assert an.drift_report("gstar", e).max_abs_dev <= 1e-7


def test_great_circle_deviation_controls():
    t = np.linspace(0, 3, 50)
    q = np.stack([np.cos(t), np.sin(t), 0 * t], axis=1) @ np.linalg.qr(np.arange(9.0).reshape(3, 3) + np.eye(3))[0]
    v = np.gradient(q, t, axis=0)
    circle = Trajectory(t, q, v, np.zeros_like(q))
    assert an.great_circle_deviation(circle) <= 1e-12
    cfg = make_ball_config(3, [1, 2, 3], 0.7)
    assert an.great_circle_deviation(_unit_run(cfg, 8, 10.0)) > 1e-2


def test_maupertuis_free_particle_is_linear_rescale():
    fields = jacobi_fields(2.0, [0.0, 0.0], ([-9, -9], [9, 9]))
    q0, v0 = np.array([0.0, 0.0]), np.array([2.0, 0.0])  # h = |v|^2 / 2 = 2
    traj = integrate(make_flow("flat_newton", fields), (q0, v0), (0, 2))
    jac = an.maupertuis_map(fields, traj, 2.0)
    np.testing.assert_allclose(jac.meta["t_of_tau"], jac.times / 2.0, atol=1e-12)
    je = [an.jacobi_energy(fields, 2.0, jac.positions[k], jac.velocities[k]) for k in range(len(jac))]
    np.testing.assert_allclose(je, 1.0, atol=1e-12)


def test_maupertuis_quadratic_potential_unit_energy():
    from chaplygin_ball.verification import demo_jacobi_case

    fields, h, q0, v0 = demo_jacobi_case()
    traj = integrate(make_flow("flat_newton", fields), (q0, v0), (0, 3))
    jac = an.maupertuis_map(fields, traj, h)
    je = [an.jacobi_energy(fields, h, jac.positions[k], jac.velocities[k]) for k in range(len(jac))]
    assert np.max(np.abs(np.array(je) - 1)) <= 1e-7
    with pytest.raises(ConfigError):
        an.maupertuis_map(fields, traj, h + 0.1)
