"""Command-line front end: simulate scenarios and query their steady states.

Exit codes: 0 success, 2 scenario validation failure, 3 integration abort.
"""

import argparse
import json
import os
import sys

import numpy as np

from .backends import available_backends
from .config import ConfigError, load_scenario, packaged_scenario_path
from .dispatch import check_optimal_feasibility, generation_cost, optimal_dispatch_lq
from .equilibrium import EquilibriumError, check_security, check_strict_minimum, solve_regulator
from .network import check_voltage_matrix_pd
from .reporting import (
    build_summary,
    write_monitors_csv,
    write_summary_json,
    write_trajectory_csv,
)
from .sim import LoadStep, ScenarioError, simulate, stepped_demand

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORTED = 3


def _resolve_scenario(arg):
    if os.path.exists(arg):
        return load_scenario(arg)
    name = arg[:-5] if arg.endswith(".json") else arg
    if os.sep not in arg:
        try:
            return load_scenario(packaged_scenario_path(name))
        except ConfigError:
            pass
    raise ConfigError(f"scenario {arg!r} is neither a file nor a packaged scenario")


def _demand_stages(sc):
    """Demand descriptions in effect over the run, keyed by start time."""
    stages = [(0.0, sc.exo)]
    for ev in sc.events:
        if isinstance(ev, LoadStep):
            stages.append((ev.t, stepped_demand(stages[-1][1], ev)))
    return stages


def _stage_injection(sc, exo):
    if sc.controller.variant == "none":
        return sc.controller.u_fixed, None
    disp = optimal_dispatch_lq(sc.cost, exo.constant)
    return disp.u, disp


def cmd_simulate(args):
    sc = _resolve_scenario(args.scenario)
    traj = simulate(sc, backend=args.backend)
    os.makedirs(args.out, exist_ok=True)
    write_trajectory_csv(traj, os.path.join(args.out, "trajectory.csv"))
    write_monitors_csv(traj, os.path.join(args.out, "monitors.csv"))
    write_summary_json(traj, os.path.join(args.out, "summary.json"))
    summary = build_summary(traj)
    print(f"backend: {traj.backend}")
    print(f"samples: {traj.n_samples}  final time: {traj.final_time:g}")
    print(f"status: {traj.status}")
    for note in traj.notes:
        print(f"note: {note}")
    if traj.status != "ok":
        print(f"integration aborted at t = {traj.abort_time:g}", file=sys.stderr)
        return EXIT_ABORTED
    print(f"final max |omega - omega_sync|: {summary['final_omega_inf']:.3e}")
    if traj.convergence_time is not None:
        print(f"converged by t = {traj.convergence_time:g}")
    return EXIT_OK


def _row(rows, label, passed, margin):
    rows.append((label, bool(passed), margin))


def cmd_check(args):
    sc = _resolve_scenario(args.scenario)
    notes = sc.validate()
    rows = []
    dom = check_voltage_matrix_pd(sc.grid, sc.params)
    _row(rows, "voltage matrix positive definite", dom.passed, f"min margin {dom.margins.min():.6g}")

    eq = None
    for t0, exo in _demand_stages(sc):
        tag = f"demand from t = {t0:g}"
        u_bar, _ = _stage_injection(sc, exo)
        guess = (eq.delta, eq.V) if eq is not None else (None, None)
        try:
            eq = solve_regulator(
                sc.grid, sc.params, u_bar, exo.constant, guess_delta=guess[0], guess_V=guess[1]
            )
        except EquilibriumError as exc:
            _row(rows, f"steady state solvable ({tag})", False, str(exc))
            eq = None
            continue
        _row(rows, f"steady state solvable ({tag})", True, f"residual {eq.residual_norm:.3e}")
        margin = np.pi / 2 - np.max(np.abs(eq.eta)) if eq.eta.size else np.pi / 2
        _row(rows, f"security region ({tag})", check_security(eq.eta), f"angle margin {margin:.6g} rad")
        mc = check_strict_minimum(eq.eta, eq.V, sc.grid, sc.params)
        _row(rows, f"strict energy minimum ({tag})", mc.passed, f"min eigenvalue {mc.min_eig:.6g}")
        if sc.controller.variant != "none":
            fr = check_optimal_feasibility(sc.grid, sc.params, sc.cost, exo.constant)
            _row(rows, f"optimal injection feasible ({tag})", fr.passed, fr.message)

    if sc.controller.variant != "none":
        comm = sc.controller.comm
        eigs = np.sort(np.linalg.eigvalsh(comm.laplacian))
        lam2 = eigs[1] if comm.n > 1 else float("inf")
        _row(rows, "communication graph connected", comm.connected, f"algebraic connectivity {lam2:.6g}")

    for t0, exo in _demand_stages(sc):
        rep = exo.validate(sc.cost)
        detail = "ok" if rep.ok else "; ".join(rep.issues)
        _row(rows, f"demand generator well posed (from t = {t0:g})", rep.ok, detail)

    width = max(len(r[0]) for r in rows)
    for label, passed, margin in rows:
        print(f"[{'PASS' if passed else 'FAIL'}] {label:<{width}}  {margin}")
    for note in notes:
        print(f"note: {note}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_INVALID


def cmd_dispatch(args):
    sc = _resolve_scenario(args.scenario)
    stages = []
    for t0, exo in _demand_stages(sc):
        disp = optimal_dispatch_lq(sc.cost, exo.constant)
        stages.append(
            {
                "t_start": t0,
                "demand": list(exo.constant),
                "u": list(disp.u),
                "multiplier": disp.multiplier,
                "cost": disp.cost,
                "self_supply_cost": generation_cost(sc.cost, exo.constant),
            }
        )
    json.dump({"stages": stages}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def cmd_equilibrium(args):
    sc = _resolve_scenario(args.scenario)
    stages = []
    eq = None
    for t0, exo in _demand_stages(sc):
        u_bar, _ = _stage_injection(sc, exo)
        guess = (eq.delta, eq.V) if eq is not None else (None, None)
        eq = solve_regulator(
            sc.grid, sc.params, u_bar, exo.constant, guess_delta=guess[0], guess_V=guess[1]
        )
        stages.append(
            {
                "t_start": t0,
                "omega_sync": eq.omega_sync,
                "eta": list(eq.eta),
                "V": list(eq.V),
                "u": list(eq.u),
                "secure": eq.secure,
                "residual_norm": eq.residual_norm,
            }
        )
    json.dump({"stages": stages}, sys.stdout, indent=2)
    print()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridreg",
        description="Simulate and verify optimal frequency regulation of AC grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a scenario and write result tables")
    sim.add_argument("--scenario", required=True, help="scenario file or packaged name")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument(
        "--backend",
        choices=available_backends(),
        default=None,
        help="integration kernel (default: compiled when built, else python)",
    )
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("check", help="run steady-state and well-posedness diagnostics")
    chk.add_argument("--scenario", required=True)
    chk.set_defaults(func=cmd_check)

    dis = sub.add_parser("dispatch", help="print the optimal dispatch per demand stage")
    dis.add_argument("--scenario", required=True)
    dis.set_defaults(func=cmd_dispatch)

    eqp = sub.add_parser("equilibrium", help="print the steady state per demand stage")
    eqp.add_argument("--scenario", required=True)
    eqp.set_defaults(func=cmd_equilibrium)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, EquilibriumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
