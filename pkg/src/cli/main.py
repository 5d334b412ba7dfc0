import argparse
import sys
import time
import json
import math
from dataclasses import asdict
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
from rich.text import Text

from core.asymptotics import covariance_matrix, stationary_stats
from core.config import DEFAULT_L, DEFAULT_TOL, ENUMERATION_CAP, section
from core.instrument import build_generators
from core.linop import validate_cptp
from core.trajectory import (
    MIN_DIAGNOSTIC_BATCH, RNG_ALGORITHM, enumerate_exact, gaussianity_diagnostics,
    spawn_seeds, stack_statistics,
)
from models.thermometer import ThermometerParams, sweep_points
from records.export import resolve_output, to_jsonable, write_csv
from records.modelspec import ModelSpecError, load_model_spec, save_model_spec, thermometer_spec

from .errors import CLIError, ParseError, PreconditionError, from_exception
from .pipeline import run_batch, run_sweep
from .results import VERSION, show_analysis, show_export, show_fisher, show_simulation, show_sweep, stat_labels
from .styles import console, err_console, RED


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    sim = section("simulation")
    thermo = section("thermometer")

    common = _Parser(add_help=False)
    common.add_argument("--json",    action="store_true", help="print one JSON document instead of tables")
    common.add_argument("--threads", type=_positive_int, default=None, help="worker threads (overrides SEQMETRO_THREADS)")
    common.add_argument("--tol",     type=_positive_float, default=None, help="CPTP and POVM completeness tolerance")

    params = _Parser(add_help=False)
    params.add_argument("--gamma",       type=_positive_float, default=1.0)
    params.add_argument("--omega",       type=float, default=float(thermo.get("omega", 1.0)))
    params.add_argument("--gamma-ratio", type=float, default=2.0, help="gamma_beta / gamma")
    params.add_argument("--tau",         type=float, default=None, help="waiting time (default: 1 / gamma_beta)")
    params.add_argument("--eta",         type=float, default=0.3)
    params.add_argument("--theta",       type=float, default=math.pi)
    params.add_argument("--phi",         type=float, default=0.0)

    parser = _Parser(prog="seqmetro", description="Parameter estimation from sequential measurements")
    parser.add_argument("--version", action="version", version=f"seqmetro {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="CPTP checks, spectrum, fixed point, Σ")
    p.add_argument("--model", required=True)
    p.add_argument("--L", type=_non_negative_int, default=DEFAULT_L)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo records or exact enumeration")
    p.add_argument("--model", required=True)
    p.add_argument("--N",     type=_positive_int, default=int(sim.get("N", 1000)))
    p.add_argument("--L",     type=_non_negative_int, default=int(sim.get("L", DEFAULT_L)))
    p.add_argument("--batch", type=_positive_int, default=int(sim.get("batch", 1000)))
    p.add_argument("--seed",  type=_non_negative_int, default=int(sim.get("seed", 0)))
    p.add_argument("--exact", action="store_true", help="enumerate every outcome string instead of sampling")
    p.add_argument("--out",   default=None, help="CSV output (a <out>.json sidecar is written next to it)")

    p = sub.add_parser("fisher", parents=[common], help="F_0..F_L per measurement over a parameter grid")
    p.add_argument("--model", required=True)
    p.add_argument("--L",     type=_non_negative_int, default=DEFAULT_L)
    p.add_argument("--N",     type=_positive_int, default=1)
    p.add_argument("--step",  type=_positive_float, default=None)
    p.add_argument("--out",   default=None)

    p = sub.add_parser("thermometer", parents=[common], help="standard vs sequential sweep")
    p.add_argument("--gamma",        type=_positive_float, default=1.0)
    p.add_argument("--omega",        type=float, default=float(thermo.get("omega", 1.0)))
    p.add_argument("--gamma-ratios", type=float, nargs="+", default=thermo.get("gamma_ratios", [2.0]))
    p.add_argument("--tau-gamma",    type=float, nargs="+", default=thermo.get("tau_gamma", [0.1, 0.5, 1.0]))
    p.add_argument("--etas",         type=float, nargs="+", default=thermo.get("etas", [0.0]))
    p.add_argument("--L",            type=_non_negative_int, default=int(thermo.get("L_max", 2)))
    p.add_argument("--equilibrium",  action="store_true", help="add the F_eq column")
    p.add_argument("--out",          default=None)

    p = sub.add_parser("export-spec", parents=[common, params], help="write a thermometer model file")
    p.add_argument("--out",  required=True)
    p.add_argument("--grid", type=float, nargs="+", default=None, help="gamma_beta / gamma values to parametrize")

    return parser


def print_json(payload: dict):
    print(json.dumps(to_jsonable(payload)))


def _tol(args) -> float:
    return args.tol if args.tol is not None else DEFAULT_TOL


# ── analyze ──────────────────────────────────────────────────────────────────

def cmd_analyze(args) -> int:
    start = time.monotonic()
    spec = load_model_spec(args.model, tol=_tol(args))
    instr = spec.instrument(tol=_tol(args))
    spectral = instr.spectral
    cptp = validate_cptp(spec.channel, _tol(args))

    report: dict = {
        "command": "analyze",
        "model": args.model,
        "cptp": {**asdict(cptp), "trace_preserving": cptp.trace_preserving,
                 "completely_positive": cptp.completely_positive},
        "classification": spectral.classification,
        "spectral_gap": spectral.spectral_gap,
        "eigenvalues": spectral.eigenvalues,
        "fixed_point": spectral.fixed_point,
    }
    failure: str | None = None
    if spectral.classification == "NonErgodic":
        failure = "no unique fixed point: the channel is not ergodic"
    else:
        gen = build_generators(instr, max(args.L, 1))
        stats = stationary_stats(gen)
        report["stationary"] = {"mean_s": stats.mean_s, "var_s": stats.var_s, "mean_c": stats.mean_c[:args.L]}
        if spectral.mixing:
            asym = covariance_matrix(gen, args.L)
            report["stationary"]["sigma2"] = asym.sigma2
            report["sigma"] = asym.sigma
            report["psd"] = asym.psd
        else:
            failure = "asymptotic variance requires mixing"
    if failure:
        report["message"] = failure

    if args.json:
        print_json(report)
    else:
        show_analysis(to_jsonable(report), time.monotonic() - start)
    if failure:
        raise PreconditionError(failure)
    return 0


# ── simulate ─────────────────────────────────────────────────────────────────

def cmd_simulate(args) -> int:
    start = time.monotonic()
    if args.L >= args.N:
        raise ParseError(f"--L {args.L} needs --N of at least {args.L + 1}")
    spec = load_model_spec(args.model, tol=_tol(args))
    instr = spec.instrument(tol=_tol(args))
    spectral = instr.spectral
    rho0 = spectral.require_fixed_point()

    summary: dict = {
        "command": "simulate",
        "model": args.model,
        "N": args.N,
        "L": args.L,
        "initial_state": "stationary",
        "classification": spectral.classification,
    }
    asym = None
    if spectral.mixing:
        asym = covariance_matrix(build_generators(instr, max(args.L, 1)), args.L)
        summary["stationary_means"] = asym.means
        summary["sigma"] = asym.sigma

    if args.exact:
        dist = enumerate_exact(instr, rho0, args.N, args.L, cap=ENUMERATION_CAP)
        summary["exact"] = {
            "total_probability": dist.total,
            "mean_s": dist.mean_s,
            "var_s": dist.var_s,
            "mean_c": dist.mean_c,
            "covariance": dist.covariance(),
        }
        if args.out:
            columns = ["sequence", "probability"] + stat_labels(args.L)
            rows = (
                {"sequence": " ".join(f"{v:g}" for v in seq), "probability": p, "S": s,
                 **{f"C{l}": c[l - 1] for l in range(1, args.L + 1)}}
                for seq, p, s, c in zip(dist.sequences(), dist.probabilities, dist.S, dist.C)
            )
            summary["out"] = write_csv(args.out, columns, rows, meta=summary)
    else:
        seeds = spawn_seeds(args.seed, args.batch)
        summary.update({"batch": args.batch, "master_seed": args.seed, "rng": RNG_ALGORITHM})
        stats = run_batch(instr, rho0, args.N, args.L, seeds, threads=args.threads, quiet=args.json)
        x = stack_statistics(stats)
        summary["empirical"] = {
            "mean": x.mean(axis=0),
            "covariance": np.atleast_2d(np.cov(x, rowvar=False)) if len(stats) > 1 else None,
        }
        if asym is None:
            summary["diagnostics"] = "channel is not mixing"
        elif len(stats) < MIN_DIAGNOSTIC_BATCH:
            summary["diagnostics"] = f"batch below {MIN_DIAGNOSTIC_BATCH}"
        else:
            diag = gaussianity_diagnostics(stats, asym)
            summary["diagnostics"] = {
                **asdict(diag), "within_bands": diag.within_bands(), "chebyshev_respected": diag.chebyshev_respected(),
            }
        if args.out:
            columns = ["seed"] + stat_labels(args.L)
            rows = (
                {"seed": r.seed, "S": r.S, **{f"C{l}": r.C[l - 1] for l in range(1, args.L + 1)}}
                for r in stats
            )
            summary["out"] = write_csv(args.out, columns, rows, meta=summary)

    if args.json:
        print_json(summary)
    else:
        show_simulation(to_jsonable(summary), time.monotonic() - start)
    return 0


# ── fisher ───────────────────────────────────────────────────────────────────

def cmd_fisher(args) -> int:
    start = time.monotonic()
    spec = load_model_spec(args.model, tol=_tol(args))
    if spec.parametrization is None:
        raise ModelSpecError("the fisher command needs a parametrized model", path="parametrization")
    model = spec.model()
    reports = model.fisher_over(spec.parametrization.grid, args.L, N=args.N, step=args.step)

    summary = {
        "command": "fisher",
        "model": args.model,
        "parameter": model.parameter,
        "L": args.L,
        "N": args.N,
        "rows": [
            {"value": r.g, "values": r.values, "per_measurement": r.per_measurement,
             "singular": r.singular, "method": r.method, "step": r.step}
            for r in reports
        ],
    }
    if args.out:
        columns = [model.parameter] + [f"F{l}_per_N" for l in range(args.L + 1)]
        rows = (
            {model.parameter: r.g, **{f"F{l}_per_N": v for l, v in enumerate(r.per_measurement)}}
            for r in reports
        )
        summary["out"] = write_csv(args.out, columns, rows, meta=summary)

    if args.json:
        print_json(summary)
    else:
        show_fisher(to_jsonable(summary), time.monotonic() - start)
    return 0


# ── thermometer ──────────────────────────────────────────────────────────────

def cmd_thermometer(args) -> int:
    start = time.monotonic()
    points = sweep_points(args.gamma, args.gamma_ratios, args.tau_gamma, args.etas, omega=args.omega)
    rows = run_sweep(points, args.L, include_equilibrium=args.equilibrium, threads=args.threads, quiet=args.json)

    columns = ["gamma_ratio", "tau_gamma", "eta", "F_standard"]
    columns += [f"F{l}_per_N" for l in range(args.L + 1)]
    columns += [f"gain{l}" for l in range(1, args.L + 1)]
    if args.equilibrium:
        columns.append("F_eq")
    summary = {
        "command": "thermometer",
        "gamma": args.gamma,
        "omega": args.omega,
        "gamma_ratios": args.gamma_ratios,
        "tau_gamma": args.tau_gamma,
        "etas": args.etas,
        "L_max": args.L,
        "equilibrium": args.equilibrium,
        "initial_state": "ground",
        "columns": columns,
        "rows": [r.as_dict() for r in rows],
    }
    if args.out:
        summary["out"] = write_csv(args.out, columns, summary["rows"], meta={k: v for k, v in summary.items() if k != "rows"})

    if args.json:
        print_json(summary)
    else:
        show_sweep(to_jsonable(summary), time.monotonic() - start)
    return 0


# ── export-spec ──────────────────────────────────────────────────────────────

def cmd_export_spec(args) -> int:
    start = time.monotonic()
    gamma_beta = args.gamma_ratio * args.gamma
    tau = args.tau if args.tau is not None else 1.0 / gamma_beta
    p = ThermometerParams(
        omega=args.omega, gamma=args.gamma, gamma_beta=gamma_beta, tau=tau, eta=args.eta,
        theta=args.theta, phi=args.phi,
    )
    grid = [g * args.gamma for g in args.grid] if args.grid else None
    path = save_model_spec(thermometer_spec(p, grid), resolve_output(args.out))
    if args.json:
        print_json({"command": "export-spec", "out": path, "params": asdict(p)})
    else:
        show_export(str(path), time.monotonic() - start)
    return 0


COMMANDS = {
    "analyze":     cmd_analyze,
    "simulate":    cmd_simulate,
    "fisher":      cmd_fisher,
    "thermometer": cmd_thermometer,
    "export-spec": cmd_export_spec,
}


def _abort():
    console.print(f"\n[dim]Cancelled.[/dim]\n")
    sys.exit(0)


def run(argv: list[str] | None = None) -> int:
    """Parse ``argv`` and run one command; library errors come back as CLIError."""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CLIError:
        raise
    except Exception as e:
        raise from_exception(e) from e


def main():
    try:
        code = run()
    except KeyboardInterrupt:
        _abort()
    except CLIError as err:
        err_console.print(Text(err.message, style=RED))
        sys.exit(err.exit_code)
    sys.exit(code)


if __name__ == "__main__":
    main()
