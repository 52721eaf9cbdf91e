"""Property suite certifying the flows, maps and coordinate identities.

Each criterion is a function returning a :class:`CriterionResult`; the CLI
``verify`` command and the acceptance tests both run this list.  The
``quick`` flag shrinks sample counts for smoke runs without touching
tolerances.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis as an
from . import coords as co
from .dynamics import conformal_geodesic_rhs, flat_newton_rhs, make_flow, reduced_rhs, weak_form_residual
from .geometry import sigma, tangent_basis
from .integrate import integrate, resample, time_map
from .types import AffinePower, jacobi_fields, make_ball_config, make_flat_fields, project_state

TOL = 1e-10
T_END = 10.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    checks: list = field(default_factory=list)  # (label, measured, threshold, op)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = "; ".join(f"{lab}={val:.3e} {op} {thr:.0e}" for lab, val, thr, op in self.checks)
        return f"[{status}] {self.number:>2} {self.name}: {parts}"


def _result(number, name, checks) -> CriterionResult:
    ok = all((val <= thr) if op == "<=" else (val > thr) for _, val, thr, op in checks)
    return CriterionResult(number, name, bool(ok), checks)


def random_state(rng, n):
    return project_state(rng.normal(size=n), rng.normal(size=n))


def random_config(rng, n, eps):
    return make_ball_config(n, rng.uniform(0.5, 3.0, size=n), eps)


def _reduced(cfg, state, t_end=T_END):
    return integrate(make_flow("reduced", cfg), state, (0.0, t_end), TOL, TOL)


def _step_midpoints(traj):
    return 0.5 * (traj.times[:-1] + traj.times[1:])


def criterion_constraints(quick=False) -> CriterionResult:
    rng = np.random.default_rng(101)
    worst_norm = worst_tan = 0.0
    cases = [(n, eps) for n in (3, 4, 5) for eps in (-1.0, 0.5, 1.0, 2.0)]
    for n, eps in cases[:4] if quick else cases:
        traj = _reduced(random_config(rng, n, eps), random_state(rng, n))
        q, v = traj(_step_midpoints(traj))
        dn, dt = traj.constraint_deviation()
        worst_norm = max(worst_norm, dn, float(np.max(np.abs(np.linalg.norm(q, axis=1) - 1))))
        worst_tan = max(worst_tan, dt, float(np.max(np.abs(np.sum(q * v, axis=1)))))
    return _result(1, "constraint fidelity", [("max||g|-1|", worst_norm, 1e-9, "<="),
                                              ("max|(g,gd)|", worst_tan, 1e-9, "<=")])


def criterion_energy(quick=False) -> CriterionResult:
    rng = np.random.default_rng(202)
    worst = 0.0
    reps = 1 if quick else 5
    for n in (3, 4, 5):
        for eps in (-1.0, 0.5, 1.0, 2.0):
            for _ in range(reps):
                cfg = random_config(rng, n, eps)
                traj = _reduced(cfg, random_state(rng, n))
                e = [an.energy_g0(cfg, traj.state(k)) for k in range(len(traj))]
                worst = max(worst, an.drift_report("energy_g0", e).rel_dev)
    return _result(2, "gyroscopic conservation of g0 energy", [("max rel drift", worst, 1e-8, "<=")])


def criterion_weak_form(quick=False) -> CriterionResult:
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100 if quick else 1000):
        n = int(rng.integers(2, 6))
        cfg = random_config(rng, n, float(rng.choice([-1.0, 0.5, 0.7, 1.0, 2.0, rng.uniform(-3, 3)])))
        state = random_state(rng, n)
        worst = max(worst, weak_form_residual(cfg, state, reduced_rhs(cfg, state)))
    return _result(3, "weak-form equivalence", [("max residual", worst, 1e-9, "<=")])


def _unit_start(rng, cfg):
    return an.normalize_unit_energy(cfg, random_state(rng, cfg.n))


def criterion_redsym(quick=False) -> CriterionResult:
    rng = np.random.default_rng(404)
    worst = 0.0
    for eps in (-1.0, 0.7, 1.0, 2.0):
        for n in ((3,) if quick else (3, 4)):
            cfg = random_config(rng, n, eps)
            traj = _reduced(cfg, _unit_start(rng, cfg))
            g = an.reparametrize_reduced(cfg, traj)
            e = [an.gstar_energy(cfg, g.positions[k], g.velocities[k]) for k in range(len(g))]
            worst = max(worst, an.drift_report("gstar_energy", e).max_abs_dev)
    return _result(4, "g* energy constant after Chaplygin reparametrization", [("max drift", worst, 1e-7, "<=")])


def _chain_criterion(number, name, eps, quick):
    rng = np.random.default_rng(505 if eps < 0 else 606)
    cfg = make_ball_config(3, [1.0, 2.0, 3.0], eps)
    e_worst = r_worst = d_worst = 0.0
    for _ in range(1 if quick else 3):
        traj = _reduced(cfg, _unit_start(rng, cfg), t_end=5.0)
        chain, reports = an.chaplygin_chain(cfg, traj)
        e_worst = max(e_worst, reports[0].max_abs_dev)
        r_worst = max(r_worst, reports[1].max_abs_dev)
        d_worst = max(d_worst, an.cross_check_chain(cfg, traj, chain))
    return _result(number, name, [("max|natural_energy|", e_worst, 1e-7, "<="),
                                  ("independent-run gap", d_worst, 1e-5, "<="),
                                  ("rhs residual", r_worst, 1e-5, "<=")])


def criterion_neumann(quick=False) -> CriterionResult:
    return _chain_criterion(5, "eps=-1 maps to zero-energy Neumann flow", -1.0, quick)


def criterion_braden(quick=False) -> CriterionResult:
    return _chain_criterion(6, "eps=+1 maps to zero-energy Braden flow", 1.0, quick)


def criterion_sigma_half(quick=False) -> CriterionResult:
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(100 if quick else 1000):
        n = int(rng.integers(2, 6))
        cfg = random_config(rng, n, 0.5)
        g = random_state(rng, n).gamma
        E = tangent_basis(g)
        X, Y, Z = (E @ rng.normal(size=n - 1) for _ in range(3))
        worst = max(worst, abs(sigma(cfg, g, X, Y, Z)))
    return _result(7, "Sigma vanishes at eps=1/2", [("max|Sigma|", worst, np.finfo(float).eps, "<=")])


def criterion_symmetric(quick=False) -> CriterionResult:
    rng = np.random.default_rng(808)
    worst = 0.0
    for eps in (-1.0, 0.7, 2.0):
        cfg = make_ball_config(4, [2.0, 2.0, 5.0, 5.0], eps)
        traj = _reduced(cfg, _unit_start(rng, cfg))
        g = an.reparametrize_reduced(cfg, traj)
        P, V = g.positions, g.velocities
        e = [an.gstar_energy(cfg, P[k], V[k]) for k in range(len(g))]
        p12 = [an.noether_phi_star(cfg, 0, 1, P[k], V[k]) for k in range(len(g))]
        p34 = [an.noether_phi_star(cfg, 2, 3, P[k], V[k]) for k in range(len(g))]
        for vals in (e, p12, p34):
            worst = max(worst, an.drift_report("q", vals).max_abs_dev)
    cfg = make_ball_config(4, [2.0, 3.0, 5.0, 7.0], 0.7)
    traj = _reduced(cfg, _unit_start(rng, cfg))
    g = an.reparametrize_reduced(cfg, traj)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", an.NonConservedWarning)
        p12 = [an.noether_phi_star(cfg, 0, 1, g.positions[k], g.velocities[k]) for k in range(len(g))]
    control = an.drift_report("phi12", p12).max_abs_dev
    return _result(8, "SO(2)xSO(2) integrals conserved", [("max drift", worst, 1e-7, "<="),
                                                         ("control drift", control, 1e-3, ">")])


def criterion_great_circles(quick=False) -> CriterionResult:
    rng = np.random.default_rng(909)
    worst = 0.0
    for eps in (-1.0, 0.5, 0.7, 1.0, 2.0):
        for n in ((3,) if quick else (3, 4, 5)):
            cfg = make_ball_config(n, np.full(n, rng.uniform(0.5, 3.0)), eps)
            worst = max(worst, an.great_circle_deviation(_reduced(cfg, random_state(rng, n))))
    return _result(9, "A = c Id gives great circles", [("max planarity gap", worst, 1e-8, "<=")])


def _random_decreasing_a(rng, n):
    return np.sort(rng.uniform(0.3, 4.0, size=n))[::-1]


def _random_interlaced(rng, cfg):
    poles = cfg.a_inv
    t = rng.uniform(0.02, 0.98, size=cfg.n - 1)
    return poles[:-1] + t * (poles[1:] - poles[:-1])


def criterion_coords(quick=False) -> CriterionResult:
    rng = np.random.default_rng(1010)
    m = 100 if quick else 1000
    rt = bm = conic = 0.0
    for k in range(m):
        n = 3 + k % 3
        cfg = make_ball_config(n, _random_decreasing_a(rng, n), -1.0)
        u = _random_interlaced(rng, cfg)
        x = np.sqrt(co.x_from_u(cfg, u))
        rt = max(rt, float(np.max(np.abs(co.u_from_x(cfg, x).u - u))))
    # the pencil residuals are absolute and lose digits when two a_i nearly
    # coincide, so they are measured at the well-separated a = (1, 2, 3)
    _, a_sorted = co.sort_decreasing([1.0, 2.0, 3.0])
    cfg = make_ball_config(3, a_sorted, -1.0)
    P = float(np.prod(cfg.a))
    for _ in range(m):
        u = _random_interlaced(rng, cfg)
        bm = max(bm, co.bm_correspondence_check(cfg, u))
        g = np.sqrt(co.gamma_from_u(cfg, u))
        conic = max(conic, abs(co.conic_residual(cfg, g, P * u[0])), abs(co.conic_residual(cfg, g, P * u[1])))
    cfg = make_ball_config(3, [1.0, 0.5, 1.0 / 3.0], -1.0)
    u = co.u_from_x(cfg, np.ones(3) / np.sqrt(3.0)).u
    analytic = float(np.max(np.abs(u - np.array([2 - 1 / np.sqrt(3), 2 + 1 / np.sqrt(3)]))))
    return _result(10, "sphero-conical coordinates", [("roundtrip", rt, 1e-10, "<="),
                                                      ("analytic n=3", analytic, 1e-12, "<="),
                                                      ("Borisov-Mamaev", bm, 1e-12, "<="),
                                                      ("conic membership", conic, 1e-11, "<=")])


def demo_flat_fields():
    f = AffinePower(1.0, [0.3, 0.5], 0.5)
    nu = AffinePower(2.0, [0.2, 0.4], -0.7)
    return make_flat_fields(2, f, ([-6.0, -6.0], [6.0, 6.0]), nu=nu)


def demo_jacobi_case():
    """Saddle potential with h above the box maximum of V; returns (fields, h, q0, q_dot0)."""
    k = np.array([1.0, -0.5])
    q0 = np.array([0.5, 0.2])
    v0 = np.array([np.sqrt(0.8 - 0.25), 1.5])
    h = 0.5 * v0 @ v0 + 0.5 * (k * q0) @ q0
    return jacobi_fields(h, k, ([-1.5, -20.0], [1.5, 20.0])), h, q0, v0


def flat_testbed(fields, q0, v0, t_end=5.0):
    """Newton flow reparametrized by nu against the conformal geodesic flow.

    Returns ``(newton, resampled, geodesic, gap, invariant_residual, quad_drift)``.
    """
    newton = integrate(make_flow("flat_newton", fields), (q0, v0), (0.0, t_end), TOL, TOL)
    mult = fields.nu_multiplier()
    rmap = time_map(newton, mult)
    res = resample(newton, rmap, mult)
    geo = integrate(make_flow("conformal_geodesic", fields), (res.positions[0], res.velocities[0]),
                    (res.times[0], res.times[-1]), TOL, TOL)
    gap = float(np.max(np.linalg.norm(geo.evaluate(res.times, 0)[0] - res.positions, axis=1)))
    inv = 0.0
    for k in range(len(res)):
        q, qp, qpp = res.positions[k], res.velocities[k], res.accelerations[k]
        q_dot, q_ddot = newton.evaluate(res.meta["t_of_tau"][k])[1:]
        lhs = qpp - conformal_geodesic_rhs(fields, q, qp)
        rhs = (q_ddot - flat_newton_rhs(fields, q, q_dot)) / fields.nu(q) ** 2
        inv = max(inv, float(np.max(np.abs(lhs - rhs))))
    quad = [an.quad_integral(fields, newton.positions[k], newton.velocities[k]) for k in range(len(newton))]
    return newton, res, geo, gap, inv, an.drift_report("quad_integral", quad).rel_dev


def invariant_form_residual(fields, q, q_dot, q_ddot) -> float:
    """Pointwise gap between the conformal geodesic acceleration and ``nu^-2 (q_ddot - F)``."""
    nu = fields.nu(q)
    q_prime = q_dot / nu
    nu_dot = fields.grad_nu(q) @ q_dot
    q_pp = (q_ddot - nu_dot / nu * q_dot) / nu**2
    lhs = q_pp - conformal_geodesic_rhs(fields, q, q_prime)
    rhs = (q_ddot - flat_newton_rhs(fields, q, q_dot)) / nu**2
    return float(np.max(np.abs(lhs - rhs)))


def criterion_flat(quick=False) -> CriterionResult:
    rng = np.random.default_rng(1111)
    fields = demo_flat_fields()
    _, _, _, gap, inv, quad = flat_testbed(fields, np.array([0.3, -0.2]), np.array([0.8, 0.5]))
    for _ in range(50 if quick else 500):
        q = rng.uniform(-2, 2, size=2)
        inv = max(inv, invariant_form_residual(fields, q, rng.normal(size=2), rng.normal(size=2)))
    jf, h, q0, v0 = demo_jacobi_case()
    newton = integrate(make_flow("flat_newton", jf), (q0, v0), (0.0, 3.0), TOL, TOL)
    jac = an.maupertuis_map(jf, newton, h)
    je = [an.jacobi_energy(jf, h, jac.positions[k], jac.velocities[k]) for k in range(len(jac))]
    jgap = float(np.max(np.abs(np.asarray(je) - 1.0)))
    return _result(11, "flat testbed: Newton-with-F vs conformal geodesics",
                   [("position gap", gap, 1e-6, "<="), ("invariant-form residual", inv, 1e-7, "<="),
                    ("quad integral drift", quad, 1e-7, "<="), ("Jacobi energy gap", jgap, 1e-7, "<=")])


DEMO_SIMULATE_CONFIG = {
    "system": "reduced",
    "n": 3,
    "a": [1.0, 2.0, 3.0],
    "sigma": 1.0,
    "rho": 2.0,
    "case": "iii",
    "seed": 7,
    "t_span": [0.0, 5.0],
    "rel_tol": 1e-10,
    "abs_tol": 1e-10,
    "unit_energy": True,
    "chain": True,
}


def criterion_determinism(quick=False) -> CriterionResult:
    import json

    from .cli import main

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "config.json"
        cfg_path.write_text(json.dumps(DEMO_SIMULATE_CONFIG))
        codes = []
        for run in range(2):
            out = Path(tmp) / f"run{run}"
            codes.append(main(["simulate", "--config", str(cfg_path), "--out", str(out), "--seed", "11"]))
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outputs[0] == outputs[1] and len(outputs[0]) > 0
    return _result(12, "determinism of simulate", [("exit codes", float(max(codes)), 0.0, "<="),
                                                   ("differing files", 0.0 if same else 1.0, 0.0, "<=")])


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_constraints,
    2: criterion_energy,
    3: criterion_weak_form,
    4: criterion_redsym,
    5: criterion_neumann,
    6: criterion_braden,
    7: criterion_sigma_half,
    8: criterion_symmetric,
    9: criterion_great_circles,
    10: criterion_coords,
    11: criterion_flat,
    12: criterion_determinism,
}


def run_suite(numbers=None, quick=False, echo=print) -> list[CriterionResult]:
    results = []
    for number in numbers or sorted(CRITERIA):
        res = CRITERIA[number](quick=quick)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
