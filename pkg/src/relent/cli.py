"""``relent`` command-line tool.

Exit status: 0 success, 2 infeasible input or contract violation,
3 numerical failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import ensemble as ens
from . import io, maxent
from .drift import ReweightConfig, drift_curve
from .exceptions import ContractError, DriftTargetError, EnergyDriftError, NumericalError
from .md import SimConfig, run
from .transport import TransportConfig, compare_to_trajectory, integrate_f

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64

FIT_MODES = ("jaynes", "relative", "shellwise", "jaynes-invariant")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_targets(text):
    """``a:b:step`` -> inclusive grid from ``a`` to ``b``."""
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:step, got {text!r}") from None
    if not step > 0 or b < a:
        raise argparse.ArgumentTypeError("need step > 0 and b >= a")
    n = int(np.floor((b - a) / step + 1e-9))
    return [a + k * step for k in range(n + 1)]


# -- subcommands -------------------------------------------------------------

def cmd_fit(args):
    system = io.read_system(args.system)
    cons = io.read_constraints(args.constraints)
    man = io.RunManifest("fit", {"mode": args.mode, "tolerance": args.tol,
                                 "max_iter": args.max_iter})
    man.add_input("system", args.system)
    man.add_input("constraints", args.constraints)
    cfg = maxent.SolverConfig(tolerance=args.tol, gradient_tolerance=args.tol,
                              max_iter=args.max_iter)
    base = None
    if args.base is not None:
        base = io.read_distribution(args.base, system)
        man.add_input("base", args.base)
    elif args.mode != "jaynes":
        raise ContractError(f"mode {args.mode!r} requires --base")

    if args.mode == "jaynes":
        rel = maxent.solve_gibbs_jaynes(system, cons, cfg)
    elif args.mode == "relative":
        rel = maxent.solve_relative(base, system, cons, cfg)
    elif args.mode == "shellwise":
        rel = maxent.solve_relative_shellwise(base, system, cons, cfg)
    else:
        rel = maxent.solve_jaynes_invariant_constrained(
            system, ens.shell_marginal(base, system), cons, cfg)

    scale = max(1.0, float(np.max(np.abs(cons.target_array), initial=0.0)))
    if rel.residual_norm > 1e3 * args.tol * scale:
        raise NumericalError(f"constraint residual {rel.residual_norm:.3g} above tolerance")

    report = [f"route {rel.route}", f"iterations {rel.dual_iterations}",
              f"residual_norm {rel.residual_norm!r}"]
    report += [f"lambda.{k} {v!r}" for k, v in rel.multipliers.as_dict().items()]
    if rel.multipliers.beta is not None:
        report.append(f"beta {rel.multipliers.beta!r}")
    mu = rel.multipliers.mu_log_z
    if isinstance(mu, dict):
        report += [f"log_z.{io._label_str(k)} {v!r}" for k, v in mu.items()]
    else:
        report.append(f"log_z {mu!r}")
    report.append(f"entropy {maxent.entropy_at_solution(rel, system)!r}")

    out = sys.stdout if args.output == "-" else args.output
    io.write_distribution(out, system, rel.result, man.header_lines() + report)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write("\n".join(report) + "\n")
    else:
        print("\n".join(report), file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    cfg = io.read_sim_config(args.config) if args.config else SimConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("n_steps", args.n_steps))
                 if v is not None}
    cfg = cfg.replace(**overrides)
    man = io.RunManifest("simulate", {}, seed=cfg.seed)
    if args.config:
        man.add_input("config", args.config)
    try:
        traj = run(cfg)
    except EnergyDriftError as exc:
        if exc.trajectory is not None:
            io.write_trajectory(args.output, exc.trajectory, man)
        raise
    io.write_trajectory(args.output, traj, man)
    print(f"samples {len(traj)} max_relative_drift {traj.max_relative_drift():.3e} "
          f"final_F {int(traj.F[-1])}", file=sys.stderr)
    return EXIT_OK


def cmd_drift(args):
    traj = io.read_trajectory(args.trajectory)
    cfg = ReweightConfig(kernel_width=args.eps, seed=args.seed,
                         block_length=args.block_length,
                         bootstrap_resamples=args.resamples)
    man = io.RunManifest("drift", {"targets": args.targets_text,
                                   "eps": args.eps if args.eps is not None
                                   else 0.05 * traj.config.well_minimum_position,
                                   "block_length": args.block_length,
                                   "resamples": args.resamples}, seed=args.seed)
    man.add_input("trajectory", args.trajectory)
    curve = drift_curve(traj, args.targets, cfg)
    io.write_drift_curve(args.output, curve, man.header_lines())
    return EXIT_OK


def cmd_transport(args):
    curve = io.read_drift_curve(args.drift)
    traj = io.read_trajectory(args.trajectory) if args.trajectory else None
    f0 = args.f0 if args.f0 is not None else float(curve.targets[0])
    if args.t_end is not None:
        t_end = args.t_end
    elif traj is not None:
        t_end = float(traj.t[-1])
    else:
        raise ContractError("--t-end is required without a trajectory")
    cfg = TransportConfig(f0=f0, t_end=t_end, dt_ode=args.dt, drift_sign=args.sign)
    man = io.RunManifest("transport", {"f0": f0, "t_end": t_end, "dt": args.dt,
                                       "sign": args.sign})
    man.add_input("drift", args.drift)
    if args.trajectory:
        man.add_input("trajectory", args.trajectory)
    res = integrate_f(curve, cfg)
    summary = f"left_range {str(res.left_range).lower()} t_last {float(res.t[-1])!r} f_last {float(res.f[-1])!r}"
    if traj is not None:
        rmse, plateau = compare_to_trajectory(res, traj)
        summary += f" rmse {rmse!r} plateau_diff {plateau!r}"
    io.write_series(args.output, ["t", "f"], np.column_stack([res.t, res.f]),
                    man.header_lines() + [f"summary {summary}"])
    print(summary)
    if res.left_range:
        print("warning: f(t) left the tabulated drift range; series truncated",
              file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    from .verification import run_checks
    results = run_checks(args.level, args.fixtures)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.2f} s)")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERICAL if failed else EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="relent", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"relent {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="maximum-entropy distribution of a discrete system")
    f.add_argument("system", help="system file (observables / states header, one state per line)")
    f.add_argument("constraints", help="constraints file, 'observable target' per line")
    f.add_argument("--mode", choices=FIT_MODES, default="jaynes",
                   help="jaynes: maximise S; relative: maximise relative entropy from --base; "
                        "shellwise: relative, keeping the shell probabilities of --base; "
                        "jaynes-invariant: maximise S with shell probabilities taken from --base")
    f.add_argument("--base", help="base distribution CSV (state,probability)")
    f.add_argument("-o", "--output", default="-", help="distribution CSV path ('-' for stdout)")
    f.add_argument("--report", help="write the multipliers report here instead of stderr")
    f.add_argument("--tol", type=float, default=1e-10, help="constraint residual tolerance")
    f.add_argument("--max-iter", type=int, default=200, help="Newton iteration cap")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run the double-well Lennard-Jones MD experiment")
    s.add_argument("config", nargs="?", help="'key value' config file (defaults if omitted)")
    s.add_argument("-o", "--output", required=True, help="trajectory file to write")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--n-steps", type=int, help="override the config n_steps")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("drift", help="reweighted drift curve from a trajectory")
    d.add_argument("trajectory", help="trajectory file written by 'simulate'")
    d.add_argument("--targets", required=True, metavar="A:B:STEP",
                   help="inclusive grid of target means N_R")
    d.add_argument("--eps", type=float, help="kernel width (default 0.05 * q0)")
    d.add_argument("--seed", type=int, default=0, help="bootstrap root seed")
    d.add_argument("--block-length", type=int, default=100, help="bootstrap block length")
    d.add_argument("--resamples", type=int, default=200, help="bootstrap resamples")
    d.add_argument("-o", "--output", required=True, help="drift CSV to write")
    d.set_defaults(func=cmd_drift)

    t = sub.add_parser("transport", help="integrate df/dt = sign * v(f)")
    t.add_argument("drift", help="drift CSV written by 'drift'")
    t.add_argument("trajectory", nargs="?", help="trajectory to compare against")
    t.add_argument("--f0", type=float, help="initial value (default: first drift target)")
    t.add_argument("--t-end", type=float, help="final time (default: trajectory end)")
    t.add_argument("--dt", type=float, default=1e-3, help="RK4 step")
    t.add_argument("--sign", type=int, choices=(1, -1), default=1, help="drift sign")
    t.add_argument("-o", "--output", required=True, help="t,f CSV to write")
    t.set_defaults(func=cmd_transport)

    v = sub.add_parser("verify", help="run the consistency and oracle checks")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--fixtures", type=Path, help="fixture directory (default: shipped data)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "drift":
        args.targets_text = args.targets
        try:
            args.targets = parse_targets(args.targets)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except DriftTargetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_CONTRACT
    except (ContractError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
