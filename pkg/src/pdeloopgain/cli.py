"""Command-line entry point: ``pdeloopgain <command> --config run.json [--out DIR]``.

Exit codes: 0 success, 1 configuration or I/O error, 2 certificate failure
(``certify``), 3 verification violation (``verify``, ``sweep``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .certificate import Certificate, _num
from .certify import (
    _witness_feasible,
    certify_loop_b,
    check_delay_independent,
    check_diffusion_robustness,
    check_loop_a,
    check_positive_spectrum,
    check_wave_kv,
    check_wave_via_loop_a,
    gain_curve,
    gain_g,
    iss_constants_loop_b,
    minimize_kv_gain,
    optimize_iss_loop_a,
)
from .kernels import Kernel
from .model import (
    BacksteppingParams,
    ChemicalParams,
    DisturbanceSignal,
    LoopAParams,
    LoopBParams,
    WaveKVParams,
    backstepping_to_loop_b,
    chemical_to_loop_a,
    kv_wave_to_loop_a,
    make_disturbance,
)
from .solvers.fd import fd_reference
from .solvers.grid import Grid, Trajectory, fmt
from .solvers.loop_a import simulate_loop_a
from .solvers.loop_b import simulate_loop_b
from .solvers.picard import picard_solve
from .spectral import (
    SLSpec,
    WeightFunction,
    check_H4,
    eigensystem_dirichlet_robin,
    loop_a_weight,
    loop_b_weight,
)
from .verify import (
    check_iss_bound,
    check_parabolic_bound,
    fit_decay,
    magnification_probe,
    verify_loop_a,
)

log = logging.getLogger("pdeloopgain")

COMMANDS = ("certify", "simulate", "verify", "gain-curve", "sweep")
FAMILIES = {
    "loop_a": LoopAParams,
    "chemical": ChemicalParams,
    "wave_kv": WaveKVParams,
    "loop_b": LoopBParams,
    "backstepping": BacksteppingParams,
}
LOOP_A_FAMILIES = ("loop_a", "chemical", "wave_kv")
SOLVERS = ("spectral", "fd", "picard")
EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_VERIFY = 0, 1, 2, 3
COMPAT_TOL = 1e-10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.field}: {self.message}"


# ---------------------------------------------------------------------------
# config pieces


def build_params(model: dict):
    family = model.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"model.family: must be one of {sorted(FAMILIES)}")
    params = model.get("params")
    if not isinstance(params, dict):
        raise ConfigError("model.params: must be an object")
    try:
        return FAMILIES[family].from_json(params)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"model.params: {exc}") from exc


def loop_params(family: str, params):
    """Reduce any family to the loop it simulates as: ``("A"|"B", params, time_scale)``."""
    if family == "loop_a":
        return "A", params, 1.0
    if family == "chemical":
        return "A", chemical_to_loop_a(params), 1.0
    if family == "wave_kv":
        la, scale = kv_wave_to_loop_a(params)
        return "A", la, scale
    if family == "loop_b":
        return "B", params, 1.0
    return "B", backstepping_to_loop_b(params), 1.0


def build_profile(spec, loop: str, params, which: str):
    """Initial profile from a catalog entry; returns a callable of ``z``."""
    if spec is None:
        spec = {"kind": "sine"} if which == "u1" and loop == "A" else (
            {"kind": "robin_mode"} if which == "u1" else {"kind": "zero"})
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return lambda z: np.zeros_like(np.asarray(z, dtype=float))
    if kind == "sine":
        n = int(spec.get("mode", 1))
        return lambda z: amp * np.sin(n * np.pi * np.asarray(z, dtype=float))
    if kind == "robin_mode":
        if loop != "B":
            raise ConfigError(f"initial.{which}: robin_mode needs a loop-B model")
        n = int(spec.get("mode", 1))
        es = eigensystem_dirichlet_robin(params.diffusion, params.reaction, params.robin_q, n)
        om, A = float(es.frequencies[-1]), float(es.normalizers[-1])
        return lambda z: amp * A * np.sin(om * np.asarray(z, dtype=float))
    if kind == "constant":
        v = float(spec.get("value", amp))
        return lambda z: np.full_like(np.asarray(z, dtype=float), v)
    if kind == "polynomial":
        coef = [float(c) for c in spec.get("coefficients", [])]
        if not coef:
            raise ConfigError(f"initial.{which}.coefficients must be a non-empty list")
        return lambda z: np.polynomial.polynomial.polyval(np.asarray(z, dtype=float), coef)
    if kind == "table":
        vals = np.asarray(spec.get("values", []), dtype=float)
        if vals.size < 2:
            raise ConfigError(f"initial.{which}.values needs at least 2 entries")
        return CubicSpline(np.linspace(0.0, 1.0, vals.size), vals)
    raise ConfigError(f"initial.{which}.kind {kind!r} unknown")


def build_grid(doc) -> Grid:
    doc = doc or {}
    unknown = set(doc) - {"n_z", "dt", "T", "modes"}
    if unknown:
        raise ConfigError(f"grid: unknown fields {sorted(unknown)}")
    try:
        return Grid(n_z=int(doc.get("n_z", 101)), dt=float(doc.get("dt", 1e-3)),
                    T=float(doc.get("T", 1.0)), modes=int(doc.get("modes", 64)))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


@dataclass
class Run:
    command: str
    config: dict
    family: str
    params: object
    loop: str
    loop_params: object
    time_scale: float
    grid: Grid
    disturbance: DisturbanceSignal
    solver: str
    u1_0: object
    u2_0: object
    store_every: int


def parse(config: dict, command: str | None = None) -> Run:
    if not isinstance(config, dict):
        raise ConfigError("config: not a JSON object")
    command = command or config.get("command")
    if not config and command != "gain-curve":
        raise ConfigError("config: empty")
    if command not in COMMANDS:
        raise ConfigError(f"command: must be one of {COMMANDS}")
    if command == "gain-curve" and "model" not in config:
        return Run(command, config, "", None, "", None, 1.0, build_grid(None),
                   DisturbanceSignal(), "spectral", None, None, 1)
    model = config.get("model")
    if not isinstance(model, dict):
        raise ConfigError("model: missing block")
    params = build_params(model)
    family = model["family"]
    loop, lp, scale = loop_params(family, params)
    grid = build_grid(config.get("grid"))
    try:
        d = make_disturbance(config.get("disturbance"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"disturbance: {exc}") from exc
    solver = config.get("solver", "spectral")
    if solver not in SOLVERS:
        raise ConfigError(f"solver: must be one of {SOLVERS}")
    init = config.get("initial") or {}
    u1 = build_profile(init.get("u1"), loop, lp, "u1")
    if loop == "B" and init.get("u2") in (None, "compatible", {"kind": "compatible"}):
        end = float(u1(np.array([1.0]))[0])
        k = lp.boundary_gain
        u2 = lambda z, _v=k * end: np.full_like(np.asarray(z, dtype=float), _v)  # noqa: E731
    else:
        u2 = build_profile(init.get("u2", {"kind": "zero"}), loop, lp, "u2")
    store_every = int(config.get("store_every", 1))
    if store_every < 1:
        raise ConfigError("store_every: must be >= 1")
    return Run(command, config, family, params, loop, lp, scale, grid, d, solver, u1, u2,
               store_every)


def validate(config: dict, command: str | None = None) -> list[Diagnostic]:
    """Diagnostics for a config; an empty list means it is valid."""
    try:
        run = parse(config, command)
    except ConfigError as exc:
        field, _, msg = str(exc).partition(": ")
        return [Diagnostic("error", field if msg else "config", msg or str(exc))]
    out = []
    simulating = run.command in ("simulate", "verify") or (
        run.command == "sweep" and (config.get("sweep") or {}).get("simulate", False))
    if run.loop == "A" and not run.loop_params.b_tilde > 0:
        out.append(Diagnostic("error" if simulating else "warning", "model.params",
                              "hypothesis b_tilde > 0 violated"))
    if run.loop == "B" and run.command != "gain-curve":
        cert = check_positive_spectrum(run.loop_params.diffusion, run.loop_params.reaction,
                                       run.loop_params.robin_q)
        if not cert.passed:
            out.append(Diagnostic("warning", "model.params",
                                  "first Dirichlet-Robin eigenvalue is not positive "
                                  "(p (pi - 2 b_1)^2 > 4 a fails)"))
    if simulating:
        ends = np.array([0.0, 1.0])
        a0, a1 = run.u1_0(ends)
        if run.loop == "A":
            d0 = run.disturbance.initial_value
            if abs(a0 - d0) > COMPAT_TOL * max(1.0, abs(d0)):
                out.append(Diagnostic("error", "initial.u1",
                                      f"compatibility condition u1_0(0) = d(0) violated "
                                      f"({a0:.6g} != {d0:.6g})"))
            if abs(a1) > COMPAT_TOL:
                out.append(Diagnostic("error", "initial.u1", "compatibility condition u1_0(1) = 0 violated"))
        else:
            if not run.disturbance.is_zero:
                out.append(Diagnostic("error", "disturbance", "loop B has no boundary disturbance"))
            if abs(a0) > COMPAT_TOL:
                out.append(Diagnostic("error", "initial.u1", "compatibility condition u1_0(0) = 0 violated"))
            k = run.loop_params.boundary_gain
            b0 = float(run.u2_0(np.array([0.0]))[0])
            if abs(b0 - k * a1) > COMPAT_TOL * max(1.0, abs(k * a1)):
                out.append(Diagnostic("error", "initial.u2",
                                      f"compatibility condition u2_0(0) = k*u1_0(1) violated "
                                      f"({b0:.6g} != {k * a1:.6g})"))
    return out


# ---------------------------------------------------------------------------
# commands


def _certificates(run: Run) -> tuple[list[Certificate], list[Certificate], dict]:
    """``(primary, supporting, extras)``; the run passes iff every primary passes."""
    extras: dict = {}
    if run.loop == "A":
        la = run.loop_params
        primary = []
        if run.family == "wave_kv":
            primary.append(check_wave_kv(run.params))
            support = [check_wave_via_loop_a(run.params)]
            g = gain_g(run.params.s)
            extras["g"] = g.to_json()
            gain, theta, eps = minimize_kv_gain(run.params)
            extras["kv_gain_min"] = {"gain": gain, "theta": theta, "epsilon": eps}
        else:
            primary.append(check_loop_a(la))
            support = []
        extras["loop_a_params"] = la.to_json()
        if primary[0].passed and la.b_tilde > 0:
            consts = optimize_iss_loop_a(la)
            support.append(consts.certificate())
            extras["iss_constants"] = consts.to_json()
            eta = loop_a_weight(consts.theta, la.K) if la.K + (math.pi - 2 * consts.theta) ** 2 > 0 else None
            if eta is not None:
                support.append(check_H4(SLSpec.loop_a(la.K), eta, eta.sigma))
        return primary, support, extras
    lb = run.loop_params
    spec = check_positive_spectrum(lb.diffusion, lb.reaction, lb.robin_q)
    primary, support = [spec], []
    if run.family == "backstepping":
        cert, p_max = check_diffusion_robustness(run.params)
        primary = [cert]
        support += [spec, check_delay_independent(lb, math.pi / 2, 0.0)]
        extras["p_max"] = p_max
        theta, omega = math.pi / 2, 0.0
    else:
        theta, omega, cert = certify_loop_b(lb)
        primary.append(cert)
    if theta is not None and _witness_feasible(lb.diffusion, lb.reaction, lb.robin_q, theta, omega):
        consts = iss_constants_loop_b(lb, theta, omega)
        support.append(consts.certificate())
        extras["iss_constants"] = consts.to_json()
        eta = loop_b_weight(theta, omega, lb.diffusion, lb.reaction)
        support.append(check_H4(SLSpec.loop_b(lb.diffusion, lb.reaction, lb.robin_q), eta, eta.sigma))
    return primary, support, extras


def cmd_certify(run: Run, out: Path) -> int:
    primary, support, extras = _certificates(run)
    passed = all(c.passed for c in primary)
    doc = {"family": run.family, "pass": passed,
           "certificates": [c.to_json() for c in primary],
           "supporting": [c.to_json() for c in support], "extras": extras}
    write_json(out / "certificate.json", doc)
    return EXIT_OK if passed else EXIT_CERT


def _natural_weight(run: Run) -> WeightFunction | None:
    w = run.config.get("weight")
    if run.loop == "A":
        theta = float((w or {}).get("theta", math.pi / 4))
        return loop_a_weight(theta, run.loop_params.K) if run.loop_params.K + (
            math.pi - 2 * theta) ** 2 > 0 else None
    lb = run.loop_params
    if w:
        return loop_b_weight(float(w["theta"]), float(w["omega"]), lb.diffusion, lb.reaction)
    theta, omega, _ = certify_loop_b(lb)
    if theta is None or lb.diffusion * omega ** 2 - lb.reaction <= 0:
        return None
    return loop_b_weight(theta, omega, lb.diffusion, lb.reaction)


def simulate(run: Run, d: DisturbanceSignal | None = None, weight=None) -> Trajectory:
    d = run.disturbance if d is None else d
    lp, g = run.loop_params, run.grid
    if run.solver == "spectral":
        if run.loop == "A":
            return simulate_loop_a(lp, run.u1_0, run.u2_0, d, g, weight, run.store_every)
        return simulate_loop_b(lp, run.u1_0, run.u2_0, g, weight, run.store_every)
    if run.solver == "fd":
        return fd_reference(run.loop, lp, run.u1_0, run.u2_0, d, g, weight, run.store_every)
    return picard_solve(run.loop, lp, run.u1_0, run.u2_0, d, g, weight=weight,
                        store_every=run.store_every)


def cmd_simulate(run: Run, out: Path, full_profiles: bool) -> int:
    traj = simulate(run, weight=_natural_weight(run))
    write_text(out / "trajectory.csv", traj.summary_csv())
    if full_profiles:
        write_text(out / "profiles.csv", traj.profiles_csv())
    return EXIT_OK


def run_id(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def cmd_verify(run: Run, out: Path) -> int:
    doc: dict = {"run_id": run_id(run.config)}
    violations, excess, falsified = 0, -math.inf, False
    if run.loop == "A":
        d = run.disturbance
        if d.initial_value != 0.0:
            raise ConfigError("disturbance: verify needs d(0) = 0 (shared initial data)")
        rep = verify_loop_a(run.loop_params, run.u1_0, run.u2_0, d, run.grid,
                            store_every=run.store_every)
        body = rep.to_json()
        doc.update(body)
        violations = body["bound_violations"]["count"]
        excess = max(rep.iss.max_excess, rep.weighted.max_excess)
        falsified = rep.certificate.passed and not rep.fit.delta_hat > 0
        theta = float((run.config.get("weight") or {}).get("theta", rep.constants.theta))
        driven = simulate_loop_a(run.loop_params, run.u1_0, run.u2_0, d, run.grid,
                                 store_every=run.store_every)
        para = check_parabolic_bound(driven, run.loop_params, theta, d)
        doc["parabolic_bound"] = para.to_json()
        violations += para.count
        excess = max(excess, para.max_excess)
        if run.family == "wave_kv" and d.kind == "sinusoid" and not d.is_zero:
            mp = magnification_probe(run.params, d, run.grid.T / run.time_scale,
                                     dt=run.grid.dt, n_z=run.grid.n_z, modes=run.grid.modes)
            doc["empirical_gain"] = mp.to_json()
    else:
        primary, _, _ = _certificates(run)
        cert = primary[-1]
        traj = simulate(run)
        fit = fit_decay(traj)
        iss = check_iss_bound(traj, fit)
        falsified = all(c.passed for c in primary) and not fit.delta_hat > 0
        violations, excess = iss.count, iss.max_excess
        doc.update({"certificate": cert.to_json(), "decay_fit": fit.to_json(),
                    "iss_bound": iss.to_json()})
    doc["bound_violations"] = {"count": violations, "max_excess": _num(excess)}
    doc["falsified"] = falsified
    write_json(out / "verify.json", doc)
    return EXIT_VERIFY if violations or falsified else EXIT_OK


def cmd_gain_curve(run: Run, out: Path) -> int:
    gc = run.config.get("gain_curve") or {}
    curve = gain_curve(float(gc.get("s_min", -math.pi ** 2 / 2 + 0.1)), float(gc.get("s_max", 3.0)),
                       int(gc.get("n_points", 201)))
    write_text(out / "gain_curve.csv", curve.to_csv())
    return EXIT_OK


def _replace_param(model: dict, name: str, value: float) -> dict:
    params = dict(model["params"])
    if name == "kernel_scale":
        kern = dict(params.get("kernel", {"kind": "expr", "name": "one"}))
        if kern.get("kind") != "expr":
            raise ConfigError("sweep.parameter: kernel_scale needs an expr kernel")
        kern["scale"] = value
        params["kernel"] = kern
    elif name in params or name in FAMILIES[model["family"]].__dataclass_fields__:
        params[name] = value
    else:
        raise ConfigError(f"sweep.parameter: {name!r} is not a field of {model['family']}")
    return {"family": model["family"], "params": params}


def cmd_sweep(run: Run, out: Path) -> int:
    sw = run.config.get("sweep") or {}
    name, values = sw.get("parameter"), sw.get("values")
    if not name or not isinstance(values, list) or not values:
        raise ConfigError("sweep: needs 'parameter' and a non-empty 'values' list")
    sim = bool(sw.get("simulate", False))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["value", "pass", "lhs", "rhs", "margin"] + (["delta_hat", "falsified"] if sim else [])
    w.writerow(header)
    bad = False
    for v in values:
        cfg = dict(run.config)
        cfg["model"] = _replace_param(run.config["model"], name, float(v))
        sub = parse(cfg, "sweep")
        primary, _, _ = _certificates(sub)
        cert = primary[-1]
        ok = all(c.passed for c in primary)
        row = [fmt(float(v)), int(ok), _csv_num(cert.lhs), _csv_num(cert.rhs), _csv_num(cert.margin)]
        if sim:
            fit = fit_decay(simulate(sub, d=DisturbanceSignal()))
            fals = ok and not fit.delta_hat > 0
            bad |= fals
            row += [fmt(fit.delta_hat), int(fals)]
        w.writerow(row)
    write_text(out / "sweep.csv", buf.getvalue())
    return EXIT_VERIFY if bad else EXIT_OK


def _csv_num(v: float) -> str:
    return fmt(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (bool, int)) or obj is None:
        return obj
    return _num(obj)


def write_json(path: Path, doc: dict) -> None:
    write_text(path, json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_config(config: dict, command: str, out: Path, full_profiles: bool = False) -> int:
    diags = validate(config, command)
    for dg in diags:
        print(dg, file=sys.stderr)
    if any(dg.level == "error" for dg in diags):
        return EXIT_CONFIG
    run = parse(config, command)
    handlers = {
        "certify": lambda: cmd_certify(run, out),
        "simulate": lambda: cmd_simulate(run, out, full_profiles),
        "verify": lambda: cmd_verify(run, out),
        "gain-curve": lambda: cmd_gain_curve(run, out),
        "sweep": lambda: cmd_sweep(run, out),
    }
    return handlers[command]()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pdeloopgain", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--full-profiles", action="store_true", help="also write profiles.csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: config: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        print(f"error: config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_config(config, args.command, Path(args.out), args.full_profiles)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: output: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
