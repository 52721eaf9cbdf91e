"""Command line front-end: ``chaplygin-ball {simulate,chain,verify,coords,flat-demo}``.

Exit codes: 0 success, 1 configuration error, 2 integration failure,
3 an invariant drifted past its threshold.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import analysis as an
from . import coords as co
from .dynamics import make_flow
from .integrate import IntegrationError, MultiplierSignError, Trajectory, integrate
from .types import (
    AffinePower,
    ConfigError,
    DomainError,
    epsilon_from_radii,
    jacobi_fields,
    make_ball_config,
    make_flat_fields,
    project_state,
)

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_THRESHOLD = 0, 1, 2, 3

SPHERE_KEYS = {"system", "n", "a", "epsilon", "sigma", "rho", "case", "initial", "seed", "t_span",
               "rel_tol", "abs_tol", "experiments", "name", "chain", "unit_energy"}
FLAT_KEYS = {"system", "n", "f", "nu", "alpha", "potential_k", "jacobi_h", "box", "initial", "seed",
             "t_span", "rel_tol", "abs_tol", "experiments", "name"}

SPHERE_THRESHOLDS = {"energy_g0": 1e-8, "natural_energy": 1e-7, "constraint": 1e-9}
FLAT_THRESHOLDS = {"quad_integral": 1e-7, "newton_energy": 1e-7, "position_gap": 1e-6,
                   "invariant_residual": 1e-7}


# -- configuration -------------------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON config; syntax errors become ConfigError with line and column."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1:1: top-level value must be an object")
    return cfg


def expand_experiments(cfg: dict) -> list[dict]:
    """One resolved config per experiment; overrides are shallow-merged onto the base."""
    base = {k: v for k, v in cfg.items() if k != "experiments"}
    runs = cfg.get("experiments") or [{}]
    if not isinstance(runs, list):
        raise ConfigError("experiments must be a list of objects")
    out, names = [], set()
    for k, override in enumerate(runs):
        if not isinstance(override, dict):
            raise ConfigError(f"experiments[{k}] must be an object")
        merged = {**base, **override}
        merged.setdefault("name", "run" if len(runs) == 1 else f"exp{k}")
        name = str(merged["name"])
        if name in names or not name.replace("-", "").replace("_", "").isalnum():
            raise ConfigError(f"experiment name {name!r} is duplicated or not a plain identifier")
        names.add(name)
        out.append(merged)
    return out


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"missing required field {key!r}")
    return cfg[key]


def _check_keys(cfg, allowed):
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")


def _vector(cfg, key, n=None):
    arr = np.asarray(_require(cfg, key), dtype=float).ravel()
    if n is not None and arr.size != n:
        raise ConfigError(f"{key} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{key} must be finite")
    return arr


def _t_span(cfg):
    span = _vector(cfg, "t_span")
    if span.size != 2 or span[0] == span[1]:
        raise ConfigError("t_span must be two distinct numbers")
    return float(span[0]), float(span[1])


def _rng(cfg, seed_override):
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return np.random.default_rng(seed)


def ball_config_from(cfg: dict):
    """Build a BallConfig, converting radii to epsilon when they are given."""
    n = int(_require(cfg, "n"))
    a = _vector(cfg, "a", n)
    has_radii = any(k in cfg for k in ("sigma", "rho", "case"))
    if ("epsilon" in cfg) == has_radii:
        raise ConfigError("give exactly one of epsilon or (sigma, rho, case)")
    if has_radii:
        eps = epsilon_from_radii(float(_require(cfg, "sigma")), float(_require(cfg, "rho")),
                                 str(_require(cfg, "case")))
    else:
        eps = float(cfg["epsilon"])
    return make_ball_config(n, a, eps)


def sphere_initial(cfg: dict, n: int, rng):
    init = cfg.get("initial")
    if init is None:
        return project_state(rng.normal(size=n), rng.normal(size=n))
    if not isinstance(init, dict):
        raise ConfigError("initial must be an object with gamma and gamma_dot")
    return project_state(_vector(init, "gamma", n), _vector(init, "gamma_dot", n))


def _affine(entry, n, key):
    if not isinstance(entry, dict):
        raise ConfigError(f"{key} must be an object with c, m, p")
    return AffinePower(float(entry.get("c", 1.0)), _vector(entry, "m", n), float(_require(entry, "p")),
                       float(entry.get("coef", 1.0)))


def flat_fields_from(cfg: dict):
    n = int(_require(cfg, "n"))
    box = _require(cfg, "box")
    if not (isinstance(box, list) and len(box) == 2):
        raise ConfigError("box must be [lo[], hi[]]")
    box = (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
    if "jacobi_h" in cfg:
        if any(k in cfg for k in ("f", "nu", "alpha")):
            raise ConfigError("jacobi_h fixes f and nu; drop f, nu and alpha")
        return jacobi_fields(float(cfg["jacobi_h"]), _vector(cfg, "potential_k", n), box)
    f = _affine(_require(cfg, "f"), n, "f")
    nu = _affine(cfg["nu"], n, "nu") if "nu" in cfg else None
    alpha = float(cfg["alpha"]) if "alpha" in cfg else None
    k = _vector(cfg, "potential_k", n) if "potential_k" in cfg else None
    return make_flat_fields(n, f, box, nu=nu, alpha=alpha, potential_k=k)


def flat_initial(cfg: dict, fields, rng):
    n = fields.n
    init = cfg.get("initial")
    if init is None:
        lo, hi = fields.box
        q = lo + (hi - lo) * rng.uniform(0.4, 0.6, size=n)
        v = rng.normal(size=n)
    else:
        q, v = _vector(init, "q", n), _vector(init, "q_dot", n)
    if "jacobi_h" in cfg:
        # put the state on the energy level h by rescaling the speed
        kinetic = float(cfg["jacobi_h"]) - float(fields.potential(q))
        if kinetic <= 0 or not np.any(v):
            raise ConfigError("initial point is outside the allowed region V < h")
        v = v * np.sqrt(2.0 * kinetic) / np.linalg.norm(v)
    return q, v


# -- output --------------------------------------------------------------------------

def metadata(cfg: dict) -> dict:
    from . import __version__

    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "versions": {"chaplygin_ball": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }


def write_trajectory(path: Path, traj: Trajectory, fmt: str) -> Path:
    n = traj.n
    if fmt == "json":
        path = path.parent / f"{path.name}.json"
        payload = {"t": traj.times.tolist(), "q": traj.positions.tolist(), "q_dot": traj.velocities.tolist()}
        path.write_text(json.dumps(payload, indent=1) + "\n")
        return path
    path = path.parent / f"{path.name}.csv"
    header = ",".join(["t"] + [f"q_{i + 1}" for i in range(n)] + [f"qdot_{i + 1}" for i in range(n)])
    table = np.column_stack([traj.times, traj.positions, traj.velocities])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
    return path


def write_report(path: Path, cfg: dict, reports, extra=None) -> bool:
    ok = all(r.passed is not False for r in reports)
    body = {"metadata": metadata(cfg), "reports": [r.to_dict() for r in reports], "pass": ok}
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return ok


def _constraint_reports(traj):
    norm = np.abs(np.linalg.norm(traj.positions, axis=1) - 1.0)
    tan = np.abs(np.sum(traj.positions * traj.velocities, axis=1))
    thr = SPHERE_THRESHOLDS["constraint"]
    return [an.drift_report("constraint_norm", norm, thr, reference=0.0),
            an.drift_report("constraint_tangency", tan, thr, reference=0.0)]


# -- experiment runners ---------------------------------------------------------------

def _tolerances(cfg):
    return float(cfg.get("rel_tol", 1e-10)), float(cfg.get("abs_tol", 1e-10))


def _run_sphere(cfg: dict, out: Path, fmt: str, seed, with_chain: bool):
    _check_keys(cfg, SPHERE_KEYS)
    system = cfg.get("system", "reduced")
    bc = ball_config_from(cfg)
    state = sphere_initial(cfg, bc.n, _rng(cfg, seed))
    chain = with_chain or bool(cfg.get("chain", False))
    if chain and system != "reduced":
        raise ConfigError("the chain runs from the reduced system")
    if chain or cfg.get("unit_energy", False):
        state = an.normalize_unit_energy(bc, state)
    traj = integrate(make_flow(system, bc), state, _t_span(cfg), *_tolerances(cfg))
    name = cfg["name"]
    write_trajectory(out / name, traj, fmt)
    if system == "reduced":
        values = [an.energy_g0(bc, traj.state(k)) for k in range(len(traj))]
        reports = [an.drift_report("energy_g0", values, SPHERE_THRESHOLDS["energy_g0"], relative=True)]
    else:
        values = [an.natural_energy(bc, traj.state(k)) for k in range(len(traj))]
        reports = [an.drift_report("natural_energy", values, SPHERE_THRESHOLDS["natural_energy"])]
    reports += _constraint_reports(traj)
    extra = {"epsilon": bc.epsilon}
    if chain:
        image, chain_reports = an.chaplygin_chain(bc, traj)
        gap = an.cross_check_chain(bc, traj, image)
        write_trajectory(out / f"{name}.chain", image, fmt)
        reports += chain_reports
        reports.append(an.drift_report("cross_check_position", [gap], 1e-5, reference=0.0))
    return write_report(out / f"{name}.report.json", cfg, reports, extra)


def _run_flat(cfg: dict, out: Path, fmt: str, seed, testbed: bool):
    _check_keys(cfg, FLAT_KEYS)
    from .verification import flat_testbed

    fields = flat_fields_from(cfg)
    q0, v0 = flat_initial(cfg, fields, _rng(cfg, seed))
    rtol, atol = _tolerances(cfg)
    name = cfg["name"]
    t0, t1 = _t_span(cfg)
    if testbed:
        if t0 != 0.0:
            raise ConfigError("flat-demo integrates from t = 0")
        newton, res, geo, gap, inv, quad = flat_testbed(fields, q0, v0, t_end=t1)
        write_trajectory(out / f"{name}.newton", newton, fmt)
        write_trajectory(out / f"{name}.geodesic", geo, fmt)
        reports = [an.drift_report("position_gap", [gap], FLAT_THRESHOLDS["position_gap"], reference=0.0),
                   an.drift_report("invariant_residual", [inv], FLAT_THRESHOLDS["invariant_residual"],
                                   reference=0.0),
                   an.drift_report("quad_integral", [quad], FLAT_THRESHOLDS["quad_integral"], reference=0.0)]
    else:
        newton = integrate(make_flow("flat_newton", fields), (q0, v0), (t0, t1), rtol, atol)
        write_trajectory(out / name, newton, fmt)
        quad = [an.quad_integral(fields, newton.positions[k], newton.velocities[k]) for k in range(len(newton))]
        reports = [an.drift_report("quad_integral", quad, FLAT_THRESHOLDS["quad_integral"], relative=True)]
    if "jacobi_h" in cfg:
        h = float(cfg["jacobi_h"])
        jac = an.maupertuis_map(fields, newton, h)
        je = [an.jacobi_energy(fields, h, jac.positions[k], jac.velocities[k]) for k in range(len(jac))]
        reports.append(an.drift_report("jacobi_energy", je, FLAT_THRESHOLDS["newton_energy"], reference=1.0))
    return write_report(out / f"{name}.report.json", cfg, reports)


def _run_one(cfg, out, fmt, seed, mode):
    system = cfg.get("system", "reduced")
    if system not in ("reduced", "natural", "flat"):
        raise ConfigError(f"system must be reduced, natural or flat, got {system!r}")
    if mode == "flat-demo":
        if system != "flat":
            raise ConfigError("flat-demo needs system = flat")
        return _run_flat(cfg, out, fmt, seed, testbed=True)
    if system == "flat":
        if mode == "chain":
            raise ConfigError("the chain needs system = reduced")
        return _run_flat(cfg, out, fmt, seed, testbed=False)
    return _run_sphere(cfg, out, fmt, seed, with_chain=(mode == "chain"))


def run_config(args, mode: str) -> int:
    cfg = load_config(args.config)
    runs = expand_experiments(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # Each experiment writes its own files; results are collected in config order.
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        futures = [pool.submit(_run_one, run, out, args.format, args.seed, mode) for run in runs]
        results = [f.result() for f in futures]
    for run, ok in zip(runs, results):
        print(f"{run['name']}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(results) else EXIT_THRESHOLD


# -- subcommands ----------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verification import CRITERIA, run_suite

    numbers = sorted(CRITERIA) if not args.criteria else [int(c) for c in args.criteria.split(",")]
    unknown = [c for c in numbers if c not in CRITERIA]
    if unknown:
        raise ConfigError(f"unknown criteria {unknown}")
    results = run_suite(numbers, quick=args.quick)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if all(r.passed for r in results) else EXIT_THRESHOLD


def cmd_coords(args) -> int:
    perm, a_sorted = co.sort_decreasing(args.a)
    if np.any(np.diff(a_sorted) >= 0):
        raise ConfigError("entries of a must be distinct")
    bc = make_ball_config(a_sorted.size, a_sorted, 1.0)
    given = [k for k in ("x", "gamma", "u") if getattr(args, k) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of --x, --gamma, --u")
    report = {"a_sorted": a_sorted.tolist(), "permutation": perm.tolist()}
    if args.u is not None:
        u = co.check_interlacing(bc, np.asarray(args.u, dtype=float))
    else:
        from .geometry import gamma_to_x

        point = np.asarray(args.x if args.x is not None else args.gamma, dtype=float)
        if point.size != bc.n:
            raise ConfigError(f"point has length {point.size}, expected {bc.n}")
        point = point[perm] / np.linalg.norm(point)
        x = point if args.x is not None else gamma_to_x(bc, point)
        u = co.u_from_x(bc, x).u
    report["u"] = u.tolist()
    report["x_squared"] = co.x_from_u(bc, u).tolist()
    report["gamma_squared"] = co.gamma_from_u(bc, u).tolist()
    if bc.n == 3:
        report["borisov_mamaev_residual"] = co.bm_correspondence_check(bc, u)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "coords.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaplygin-ball", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=1, help="experiments run in parallel")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="trajectory file format")

    add_run_flags(sub.add_parser("simulate", help="integrate and write trajectory plus drift report"))
    add_run_flags(sub.add_parser("chain", help="reduced flow mapped to the zero-energy natural system"))
    add_run_flags(sub.add_parser("flat-demo", help="flat testbed: Newton-with-F against conformal geodesics"))
    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--quick", action="store_true", help="smaller samples, same tolerances")
    p.add_argument("--criteria", default=None, help="comma separated criterion numbers")
    p = sub.add_parser("coords", help="sphero-conical conversions")
    p.add_argument("--a", type=float, nargs="+", required=True)
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--gamma", type=float, nargs="+")
    p.add_argument("--u", type=float, nargs="+")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "coords":
            return cmd_coords(args)
        return run_config(args, args.command)
    except (IntegrationError, DomainError, MultiplierSignError) as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ConfigError, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
