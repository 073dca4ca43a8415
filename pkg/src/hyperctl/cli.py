"""Command-line entry point: ``hyperctl --config run.toml --command synthesize --out results``.

Exit codes: 0 ok, 2 invalid input, 3 non-convergence, 4 exceptional coupling
strength, 5 horizon too short, 1 anything else from the library.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import export
from .broad_solver import GeneralSystem, choose_time_step, grid_aligned, simulate, time_grid
from .config import RunConfig, load_config
from .errors import HyperCtlError, InvalidSpecError
from .kernel import assemble_S, kernel_residual, solve_kernel
from .model import check_B, compute_times
from .synthesis.counterexample import counterexample_build, obstruction_value
from .synthesis.feedback import feedback_zero_C, law_from_dict
from .synthesis.fredholm import (condition_number, synthesize_m1, synthesize_T2delta,
                                 synthesize_Topt, trace_system_at)
from .synthesis.shooting import shooting_solve
from .synthesis.signal import l2_norm, replay

COMMANDS = ("times", "simulate", "kernel", "synthesize", "verify", "counterexample")


def _grid(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0, 1, cfg.N + 1)


def _horizon(cfg: RunConfig) -> float:
    return cfg.T if cfg.T is not None else compute_times(cfg.spec).t_opt


def _write_trajectory(out: Path, traj, fmt: str) -> str:
    if fmt == "csv":
        return export.write_trajectory_csv(out / "trajectory.csv", traj).name
    return export.write_json(out / "trajectory.json", export.trajectory_json(traj)).name


def cmd_times(cfg: RunConfig, out: Path, fmt: str) -> dict:
    spec = cfg.spec
    report = compute_times(spec).as_dict()
    chk = check_B(spec.B, spec.k, spec.m)
    report.update({"k": spec.k, "m": spec.m, "in_B": chk.in_B, "in_Be": chk.in_Be,
                   "failing_minor": chk.failing_minor,
                   "minor_determinants": {str(i): d for i, d in chk.determinants.items()}})
    export.write_json(out / "times.json", report)
    return report


def cmd_simulate(cfg: RunConfig, out: Path, fmt: str) -> dict:
    T = _horizon(cfg)
    traj = simulate(GeneralSystem.plant(cfg.spec), cfg.initial_state(_grid(cfg)), T, cfg.N)
    report = {"T": T, "N": cfg.N, "steps": len(traj.t) - 1,
              "terminal_sup": float(np.max(np.abs(traj.final))),
              "terminal_l2": l2_norm(traj.final, cfg.N),
              "picard_iterations": int(np.max(traj.iterations)),
              "data": _write_trajectory(out, traj, fmt)}
    export.write_json(out / "simulate.json", report)
    return report


def cmd_kernel(cfg: RunConfig, out: Path, fmt: str) -> dict:
    gamma3 = None
    if cfg.counterexample is not None:
        ce = _counterexample(cfg)
        gamma3 = ce.gamma3()
    Kf = solve_kernel(cfg.spec, cfg.N, gamma3)
    report = {"N": cfg.N, "iterations": Kf.iterations, "picard_increment": Kf.residual}
    report.update(kernel_residual(Kf, cfg.spec))
    if fmt == "csv":
        report["data"] = export.write_kernel_csv(out / "kernel.csv", Kf).name
    else:
        report["data"] = export.write_json(out / "kernel_values.json",
                                           {"x": Kf.x.tolist(), "K": Kf.K.tolist()}).name
    export.write_json(out / "kernel.json", report)
    return report


def _choose_method(cfg: RunConfig) -> str:
    if cfg.method != "auto":
        return cfg.method
    spec = cfg.spec
    if (spec.C.is_zero or spec.gamma == 0) and cfg.target is None and check_B(spec.B, spec.k, spec.m).in_B:
        return "feedback"
    if spec.m == 1 and cfg.target is None:
        return "m1"
    if cfg.delta is not None:
        return "t2delta"
    return "fredholm"


def cmd_synthesize(cfg: RunConfig, out: Path, fmt: str) -> dict:
    spec, N = cfg.spec, cfg.N
    method = _choose_method(cfg)
    w0 = cfg.initial_state(_grid(cfg))
    tol = cfg.tol if cfg.tol is not None else 10.0 / N
    verification = {"method": method, "N": N, "tol": tol}
    if method == "feedback":
        law = feedback_zero_C(spec)
        T = _horizon(cfg)
        traj = simulate(GeneralSystem.plant(spec, boundary_terms=law.boundary_terms()), w0, T, N)
        payload = law.as_dict()
        payload["T"] = T
        export.write_json(out / "control.json", payload)
        verification.update({"T": T, "terminal_sup": float(np.max(np.abs(traj.final))),
                             "terminal_l2": l2_norm(traj.final, N),
                             "aligned": grid_aligned(spec.speeds, N, T)})
    else:
        if method == "shooting":
            sig = shooting_solve(spec, w0, _horizon(cfg), N, target=cfg.target_state(_grid(cfg)), tol=tol)
        else:
            Kf = solve_kernel(spec, N)
            if method == "m1":
                sig = synthesize_m1(spec, Kf, w0, N, T=cfg.T, tol=tol)
            else:
                S = assemble_S(Kf, spec)
                if method == "t2delta":
                    if cfg.delta is None:
                        raise InvalidSpecError("run.delta: required for the t2delta method")
                    sig = synthesize_T2delta(spec, Kf, S, w0, cfg.delta, N, tol=tol)
                elif method == "fredholm":
                    sig = synthesize_Topt(spec, Kf, S, w0, N, target=cfg.target_state(_grid(cfg)),
                                          T=cfg.T, tol=tol)
                else:
                    raise InvalidSpecError(f"run.method: unknown method {method!r}")
        payload = sig.as_dict()
        export.write_json(out / "control.json", payload)
        if fmt == "csv":
            export.write_control_csv(out / "control.csv", sig.t, sig.values)
        verification.update({"T": sig.T, "terminal_sup": sig.terminal_sup, "terminal_l2": sig.terminal_l2,
                             "feasible": bool(sig.feasible)})
        verification.update({k: v for k, v in sig.info.items() if isinstance(v, (int, float, str, bool))})
    if cfg.gammas:
        verification["gamma_scan"] = [
            {"gamma": g, "condition": condition_number(trace_system_at(spec, g, N, cfg.T))} for g in cfg.gammas]
    if "feasible" not in verification:
        verification["feasible"] = verification["terminal_sup"] <= tol
    export.write_json(out / "verification.json", verification)
    return verification


def _load_control(cfg: RunConfig, out: Path, control: Optional[str]) -> dict:
    path = control or cfg.control or str(out / "control.json")
    return export.read_json(path)


def cmd_verify(cfg: RunConfig, out: Path, fmt: str, control: Optional[str] = None) -> dict:
    spec, N = cfg.spec, cfg.N
    payload = _load_control(cfg, out, control)
    w0 = cfg.initial_state(_grid(cfg))
    target = cfg.target_state(_grid(cfg))
    if payload.get("kind") == "feedback":
        law = law_from_dict(payload)
        T = float(payload.get("T", _horizon(cfg)))
        traj = simulate(GeneralSystem.plant(spec, boundary_terms=law.boundary_terms()), w0, T, N)
        err = traj.final if target is None else traj.final - target
        sup, l2 = float(np.max(np.abs(err))), l2_norm(err, N)
    else:
        t, values = export.control_from_dict(payload)
        T = float(t[-1])
        if len(time_grid(T, choose_time_step(spec.speeds, N))) != len(t):
            raise InvalidSpecError("stored control was produced on a different grid; set run.N to match")
        traj, sup, l2 = replay(spec, values, w0, T, N, target=target)
    tol = cfg.tol if cfg.tol is not None else 10.0 / N
    report = {"kind": payload.get("kind"), "T": T, "N": N, "terminal_sup": sup, "terminal_l2": l2,
              "feasible": sup <= tol, "tol": tol}
    export.write_json(out / "verify.json", report)
    return report


def _counterexample(cfg: RunConfig):
    params = cfg.counterexample or {}
    speeds = [p.values[0] for p in cfg.spec.speeds] if cfg.counterexample else (2.0, 1.0, 1.0, 2.0)
    first = list(cfg.spec.B[0]) if cfg.counterexample else (1.0, 0.0)
    return counterexample_build(float(params.get("a", 1.0)), float(params.get("b", 1.0)),
                                speeds=speeds, first_row=first)


def cmd_counterexample(cfg: RunConfig, out: Path, fmt: str) -> dict:
    ce = _counterexample(cfg)
    N = cfg.N
    lam3 = ce.spec.speeds[2].values[0]
    start = lam3 * ce.t2

    def w0(x):
        w = np.zeros((4,) + np.shape(x))
        w[2] = np.where(x >= start, 1.0, np.sin(0.5 * np.pi * x / start) ** 2)
        return w

    obstruction = obstruction_value(ce, w0, N)
    at_opt = shooting_solve(ce.spec, w0, ce.t_opt, N)
    later = shooting_solve(ce.spec, w0, ce.t_opt + 0.2, N)
    report = {"a": float(ce.spec.B[1, 0]), "b": float(ce.spec.B[1, 1]), "alpha": ce.alpha, "beta": ce.beta,
              "t1": ce.t1, "t2": ce.t2, "t_opt": ce.t_opt, "N": N,
              "obstruction": obstruction, "window_length": ce.t1 - ce.t2,
              "residual_at_t_opt": at_opt.terminal_sup, "residual_at_t_opt_l2": at_opt.terminal_l2,
              "residual_after": later.terminal_sup, "residual_after_l2": later.terminal_l2,
              "T_after": ce.t_opt + 0.2}
    export.write_json(out / "counterexample.json", report)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperctl", description="Boundary control of 1-D linear hyperbolic systems.")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--out", default="hyperctl-out", help="output directory")
    p.add_argument("--grid", type=int, help="number of cells N (overrides run.N)")
    p.add_argument("--tol", type=float, help="terminal tolerance (default 10/N)")
    p.add_argument("--T", type=float, dest="T", help="time horizon")
    p.add_argument("--delta", type=float, help="window length for the T2 - delta control")
    p.add_argument("--format", choices=("json", "csv"), default="csv", help="format of bulk data files")
    p.add_argument("--control", help="stored control for verify (default OUT/control.json)")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.grid is not None:
            if args.grid < 16:
                raise InvalidSpecError("--grid: N must be at least 16")
            cfg.N = args.grid
        if args.tol is not None:
            if not args.tol > 0:
                raise InvalidSpecError("--tol: must be positive")
            cfg.tol = args.tol
        if args.T is not None:
            cfg.T = args.T
        if args.delta is not None:
            cfg.delta = args.delta
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"times": cmd_times, "simulate": cmd_simulate, "kernel": cmd_kernel,
                   "synthesize": cmd_synthesize, "counterexample": cmd_counterexample}.get(args.command)
        if handler is None:
            report = cmd_verify(cfg, out, args.format, args.control)
        else:
            report = handler(cfg, out, args.format)
    except HyperCtlError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
