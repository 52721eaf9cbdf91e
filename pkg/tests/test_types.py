import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chaplygin_ball.types import (
    AffinePower,
    ConfigError,
    SphereState,
    epsilon_from_radii,
    jacobi_fields,
    make_ball_config,
    make_flat_fields,
    project_state,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_ball_config_happy_path():
    cfg = make_ball_config(3, [1, 2, 3], -1)
    assert cfg.n == 3
    np.testing.assert_array_equal(cfg.a, [1.0, 2.0, 3.0])
    assert cfg.epsilon == -1.0
    assert not cfg.a.flags.writeable


def test_equal_radii_case_is_valid():
    cfg = make_ball_config(2, [1, 1], 0.5)
    assert cfg.epsilon == 0.5


@pytest.mark.parametrize(
    "n, a, eps",
    [
        (3, [1, -2, 3], 1),
        (3, [1, 0, 3], 1),
        (3, [1, 2], 1),
        (1, [1], 1),
        (3, [1, 2, 3], 0),
        (3, [1, 2, 3], np.inf),
        (3, [1, np.nan, 3], 1),
    ],
)
def test_ball_config_rejects(n, a, eps):
    with pytest.raises(ConfigError):
        make_ball_config(n, a, eps)


@pytest.mark.parametrize(
    "sigma, rho, case, expected",
    [
        (1.0, 1.0, "i", 0.5),
        (3.0, 1.0, "ii", 1.5),
        (1.0, 2.0, "iii", -1.0),
        (1.0, 3.0, "iii", -0.5),
    ],
)
def test_epsilon_from_radii(sigma, rho, case, expected):
    assert epsilon_from_radii(sigma, rho, case) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("sigma, rho, case", [(1, 2, "ii"), (2, 1, "iii"), (1, 1, "iv"), (-1, 1, "i")])
def test_epsilon_from_radii_rejects(sigma, rho, case):
    with pytest.raises(ConfigError):
        epsilon_from_radii(sigma, rho, case)


def test_project_state_examples():
    s = project_state([2, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(s.gamma, [1, 0, 0])
    np.testing.assert_allclose(s.gamma_dot, [0, 1, 0])
    s = project_state([1, 0, 0], [1, 1, 0])
    np.testing.assert_allclose(s.gamma_dot, [0, 1, 0])


def test_project_state_zero_position():
    with pytest.raises(ConfigError):
        project_state([0, 0, 0], [1, 0, 0])


@settings(max_examples=200, deadline=None)
@given(
    st.integers(2, 6).flatmap(
        lambda n: st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=finite))
    )
)
def test_project_state_invariants(pair):
    g_raw, v_raw = pair
    if np.linalg.norm(g_raw) < 1e-3:
        return
    s = project_state(g_raw, v_raw)
    assert abs(s.gamma @ s.gamma - 1) <= 1e-12
    assert abs(s.gamma @ s.gamma_dot) <= 1e-12 * max(1.0, np.linalg.norm(s.gamma_dot))


def test_sphere_state_rejects_off_sphere():
    with pytest.raises(ConfigError):
        SphereState(np.array([1.0, 0.1, 0.0]), np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ConfigError):
        SphereState(np.array([1.0, 0.0, 0.0]), np.array([0.1, 1.0, 0.0]))


def test_sphere_state_is_immutable():
    s = project_state([1, 2, 3], [0, 1, 0])
    with pytest.raises(ValueError):
        s.gamma[0] = 0.0
    np.testing.assert_array_equal(s.as_array(), np.concatenate([s.gamma, s.gamma_dot]))


@settings(max_examples=100, deadline=None)
@given(
    c=st.floats(0.5, 3),
    m=arrays(float, 3, elements=st.floats(-0.1, 1)),
    p=st.floats(-2, 2),
    q=arrays(float, 3, elements=st.floats(-1, 1)),
)
def test_affine_power_gradient_matches_finite_difference(c, m, p, q):
    fld = AffinePower(c, m, p, 1.7)
    h = 1e-6
    fd = np.array([(fld(q + h * e) - fld(q - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(fld.grad(q), fd, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(fld.grad_log(q), fld.grad(q) / fld(q), rtol=1e-10, atol=1e-12)


def test_affine_power_reciprocal():
    fld = AffinePower(2.0, [0.3, 0.1], -0.7, 3.0)
    q = np.array([0.4, -1.2])
    assert fld(q) * fld.reciprocal()(q) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(
    m=arrays(float, 2, elements=st.floats(-2, 2)),
    lo=arrays(float, 2, elements=st.floats(-3, 0)),
    width=arrays(float, 2, elements=st.floats(0, 3)),
)
def test_base_range_contains_samples(m, lo, width):
    fld = AffinePower(0.5, m, 1.0)
    hi = lo + width
    b_lo, b_hi = fld.base_range(lo, hi)
    pts = lo + width * np.random.default_rng(0).uniform(size=(200, 2))
    vals = fld.base(pts)
    assert np.all(vals >= b_lo - 1e-12) and np.all(vals <= b_hi + 1e-12)


def test_flat_fields_need_exactly_one_nu():
    f = AffinePower(1.0, [0.1, 0.1], 0.5)
    box = ([-1, -1], [1, 1])
    with pytest.raises(ConfigError):
        make_flat_fields(2, f, box)
    with pytest.raises(ConfigError):
        make_flat_fields(2, f, box, nu=f, alpha=2.0)


def test_flat_fields_reject_vanishing_field():
    f = AffinePower(1.0, [-1.0, 0.0], 0.5)
    with pytest.raises(ConfigError):
        make_flat_fields(2, f, ([-2, -2], [2, 2]), alpha=1.0)


def test_jacobi_fields_nu_is_h_minus_v():
    fields = jacobi_fields(2.0, [1.0, 0.5], ([-1, -1], [1, 1]))
    q = np.array([0.3, -0.6])
    assert fields.nu(q) == pytest.approx(2.0 - fields.potential(q), rel=1e-14)
    assert fields.nu_multiplier()(q) == pytest.approx(fields.nu(q), rel=1e-14)
    np.testing.assert_allclose(fields.grad_nu(q), -fields.grad_potential(q), rtol=1e-13)
