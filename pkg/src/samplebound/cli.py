"""Command-line front end.

One subcommand per capability: ``solve`` (curve sweep), ``dispersion``
(full sub-term report), ``bound`` (converse bounds), ``oracle`` (exact
small-instance quantities), ``verify`` (bound-vs-oracle sweep),
``simulate`` (seeded Monte Carlo of the oracle-optimal strategy) and
``info`` (scenario triage).

Exit codes: 0 success, 1 compute failure, 2 usage error, 3 verification
violation.  Identical configuration and scenario produce byte-identical
output files.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bounds as bounds_mod
from . import dispersion as disp_mod
from . import oracle as oracle_mod
from . import rd as rd_mod
from .scenario import EnumerationCapError, ScenarioFormatError, load_scenario
from .serialize import canonical_json, csv_text

USAGE_EXIT = 2
COMPUTE_EXIT = 1
VIOLATION_EXIT = 3


class UsageError(Exception):
    pass


def _parse_float_list(text: str, what: str) -> list[float]:
    """Comma list ("0.1,0.2") or colon range ("0.05:0.45:9", inclusive)."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"--{what}: range needs start:stop:count")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"--{what}: bad range {text!r}") from None
        if count < 1:
            raise UsageError(f"--{what}: empty range")
        return [float(x) for x in np.linspace(start, stop, count)]
    try:
        values = [float(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise UsageError(f"--{what}: bad list {text!r}") from None
    if not values:
        raise UsageError(f"--{what}: empty list")
    return values


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x != ""]
    except ValueError:
        raise UsageError(f"--{what}: bad list {text!r}") from None
    if not values:
        raise UsageError(f"--{what}: empty list")
    return values


def _check_eps(values) -> list[float]:
    for e in values:
        if not 0.0 < e < 1.0:
            raise UsageError(f"--eps: {e} outside (0, 1)")
    return values


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _default_n(problem, algorithm, d: float, cap: int) -> int:
    """Smallest dataset size putting d strictly above the curve floor."""
    for n in sorted(s for s in algorithm.sizes() if s >= 1):
        if rd_mod.d_min(problem, algorithm, n, cap=cap) < d - 1e-12:
            return n
    raise UsageError(f"no dataset size puts d={d} above the distortion floor")


def cmd_solve(args, problem, algorithm) -> int:
    if not args.d:
        raise UsageError("solve needs --d")
    d_values = _parse_float_list(args.d, "d")
    rows = []
    failed = False
    warm = None
    for d in d_values:
        n = args.n if args.n is not None else None
        row = {"d": d, "rate_bits": None, "lambda_star": None,
               "achieved_d": None, "solver_iters": None, "status": "ok"}
        try:
            if n is None:
                n = _default_n(problem, algorithm, d, args.cap)
            sol = rd_mod.rate_distortion(problem, algorithm, n, d, cap=args.cap,
                                         warm=warm)
            warm = sol
            row.update(
                rate_bits=sol.rate_bits, lambda_star=sol.lambda_star,
                achieved_d=sol.achieved_distortion,
                solver_iters=sol.meta.iterations,
            )
            if sol.flagged:
                row["status"] = ",".join(sol.meta.flags)
        except rd_mod.DomainError:
            row["status"] = "domain_error"
        except UsageError:
            row["status"] = "domain_error"
        except (rd_mod.SolverError, EnumerationCapError) as exc:
            row["status"] = f"error: {exc}"
            failed = True
        rows.append(row)
    columns = ("d", "rate_bits", "lambda_star", "achieved_d", "solver_iters", "status")
    if args.format == "csv":
        _emit(args, csv_text(rows, columns))
    else:
        _emit(args, canonical_json(rows))
    return COMPUTE_EXIT if failed else 0


def cmd_dispersion(args, problem, algorithm) -> int:
    if not args.d:
        raise UsageError("dispersion needs --d with a single value")
    d_values = _parse_float_list(args.d, "d")
    if len(d_values) != 1:
        raise UsageError("dispersion takes exactly one --d value")
    d = d_values[0]
    n = args.n if args.n is not None else _default_n(problem, algorithm, d, args.cap)
    try:
        sol = rd_mod.rate_distortion(problem, algorithm, n, d, cap=args.cap)
        table = disp_mod.tilted_information(problem, algorithm, sol)
        report = disp_mod.decompose_dispersion(problem, algorithm, sol, table)
    except (ValueError, rd_mod.SolverError, EnumerationCapError) as exc:
        print(f"dispersion failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    # emission guard: the reconstruction identities must hold on what we print
    s = report.subterms
    lam = report.lambda_star
    v_in_built = (s["v_in_iota_S"] + s["v_in_iota_A"]
                  + lam**2 * (s["v_in_d_S"] + s["v_in_d_A"]) + 2 * lam * s["v_in_cov"])
    v_bet_built = s["v_bet_iota"] + lam**2 * s["v_bet_d"] + 2 * lam * s["v_bet_cov"]
    if (abs(report.V - (report.V_in + report.V_bet)) > 1e-10
            or abs(report.V_in - v_in_built) > 1e-10
            or abs(report.V_bet - v_bet_built) > 1e-10):
        print("dispersion failed: reconstruction identity check at emission",
              file=sys.stderr)
        return COMPUTE_EXIT
    doc = {"n": n, "rate_bits": sol.rate_bits, **report.to_dict()}
    _emit(args, canonical_json(doc))
    return 0


def cmd_bound(args, problem, algorithm) -> int:
    if not args.d:
        raise UsageError("bound needs --d with a single value")
    d_values = _parse_float_list(args.d, "d")
    if len(d_values) != 1:
        raise UsageError("bound takes exactly one --d value")
    d = d_values[0]
    k_list = _parse_int_list(args.k, "k") if args.k else [1]
    eps_list = _check_eps(_parse_float_list(args.eps, "eps") if args.eps else [0.05])
    n = args.n if args.n is not None else _default_n(problem, algorithm, d, args.cap)
    try:
        sol = rd_mod.rate_distortion(problem, algorithm, n, d, cap=args.cap)
        table = disp_mod.tilted_information(problem, algorithm, sol)
        report = disp_mod.rate_dispersion(table)
    except (ValueError, rd_mod.SolverError, EnumerationCapError) as exc:
        print(f"bound failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    out = []
    for k in k_list:
        for eps in eps_list:
            explicit = bounds_mod.rate_converse_explicit(sol, report, k, eps)
            asymptotic = bounds_mod.rate_converse_asymptotic(sol, report, k, eps)
            n_lower = bounds_mod.sample_complexity_lower(explicit, problem, k)
            out.append({
                "k": k, "epsilon": eps, "d": d,
                "kind": explicit.kind, "value": explicit.value,
                "vacuous": explicit.vacuous, "n_lower": n_lower,
                "eps_k": explicit.components.get("eps_k"),
                "asymptotic_display": asymptotic.value,
                "components": explicit.components,
                "notes": list(explicit.notes) + list(asymptotic.notes),
            })
    if args.format == "csv":
        cols = ("k", "epsilon", "d", "kind", "value", "vacuous", "n_lower",
                "eps_k", "asymptotic_display")
        _emit(args, csv_text(out, cols))
    else:
        _emit(args, canonical_json(out))
    return 0


def cmd_oracle(args, problem, algorithm) -> int:
    if not args.d:
        raise UsageError("oracle needs --d with a single value")
    d_values = _parse_float_list(args.d, "d")
    if len(d_values) != 1:
        raise UsageError("oracle takes exactly one --d value")
    d = d_values[0]
    k_list = _parse_int_list(args.k, "k") if args.k else [1]
    eps_list = _check_eps(_parse_float_list(args.eps, "eps") if args.eps else [0.05])
    out = []
    try:
        for k in k_list:
            per_n = []
            for n in range(1, args.n_max + 1):
                per_n.append({
                    "n": n,
                    "excess": oracle_mod.optimal_excess_probability(
                        problem, algorithm, k, n, d, cap=args.cap),
                    "min_expected_distortion": oracle_mod.min_expected_distortion(
                        problem, algorithm, k, n, cap=args.cap),
                })
            for eps in eps_list:
                rep = oracle_mod.min_sample_size(
                    problem, algorithm, k, d, eps, args.n_max, cap=args.cap)
                out.append({
                    "k": k, "d": d, "epsilon": eps, "n_star": rep.n_star,
                    "excess_at_n_star": rep.excess_at_n_star,
                    "excess_below": rep.excess_below, "per_n": per_n,
                })
    except (EnumerationCapError, ValueError) as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    _emit(args, canonical_json(out))
    return 0


def cmd_verify(args, problem, algorithm) -> int:
    k_list = _parse_int_list(args.k, "k") if args.k else [1, 2, 3]
    eps_list = _check_eps(
        _parse_float_list(args.eps, "eps") if args.eps else [0.05, 0.2])
    if args.d:
        d_list = _parse_float_list(args.d, "d")
    else:
        dmin = rd_mod.d_min(problem, algorithm, 1, cap=args.cap)
        dmax = rd_mod.d_max(problem, algorithm, 1, cap=args.cap)
        if not np.isfinite(dmax):
            raise UsageError("no rate-zero distortion; give --d explicitly")
        d_list = [dmin + 0.05, 0.5 * (dmin + dmax)]
    grid = [(k, d, e) for k in k_list for d in d_list for e in eps_list]
    report = oracle_mod.verify_converse(
        problem, algorithm, grid, n_max=args.n_max, cap=args.cap)
    if args.format == "csv":
        _emit(args, csv_text([p.csv_row() for p in report.points],
                             oracle_mod.CSV_COLUMNS))
    else:
        _emit(args, canonical_json(report.to_dict()))
    if report.violations:
        return VIOLATION_EXIT
    if report.passes == 0 and report.vacuous > 0:
        print(f"warning: all {report.vacuous} checkable points were vacuous",
              file=sys.stderr)
    return 0


def cmd_simulate(args, problem, algorithm) -> int:
    if not args.d:
        raise UsageError("simulate needs --d with a single value")
    d_values = _parse_float_list(args.d, "d")
    if len(d_values) != 1:
        raise UsageError("simulate takes exactly one --d value")
    d = d_values[0]
    k = _parse_int_list(args.k, "k")[0] if args.k else 1
    n = args.n if args.n is not None else k
    try:
        strategy = oracle_mod.optimal_strategy(problem, algorithm, k, n, d,
                                               cap=args.cap)
        exact = oracle_mod.optimal_excess_probability(problem, algorithm, k, n, d,
                                                      cap=args.cap)
        mc = oracle_mod.monte_carlo_excess(problem, algorithm, strategy, k, d,
                                           trials=args.trials, seed=args.seed)
    except (EnumerationCapError, ValueError) as exc:
        print(f"simulate failed: {exc}", file=sys.stderr)
        return COMPUTE_EXIT
    doc = {
        "k": k, "n": n, "d": d, "trials": mc.trials, "seed": mc.seed,
        "estimate": mc.estimate, "ci95": [mc.ci_low, mc.ci_high],
        "exact": exact,
    }
    _emit(args, canonical_json(doc))
    return 0


def cmd_info(args, problem, algorithm) -> int:
    sizes = [s for s in algorithm.sizes() if s >= 1]
    per_n = []
    for n in sizes:
        entry = {"n": n, "universe_size": problem.num_samples**n,
                 "description_bits": problem.b * n}
        try:
            entry["d_min"] = rd_mod.d_min(problem, algorithm, n, cap=args.cap)
            entry["d_max"] = rd_mod.d_max(problem, algorithm, n, cap=args.cap)
        except EnumerationCapError:
            entry["d_min"] = entry["d_max"] = None
        per_n.append(entry)
    doc = {
        "w_labels": list(problem.w_labels),
        "sample_labels": list(problem.sample_labels),
        "h_labels": list(problem.h_labels),
        "b_bits": problem.b,
        "algorithm_sizes": algorithm.sizes(),
        "per_n": per_n,
    }
    _emit(args, canonical_json(doc))
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "dispersion": cmd_dispersion,
    "bound": cmd_bound,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "info": cmd_info,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samplebound",
        description="Rate-distortion curves, dispersion and converse "
                    "sample-complexity bounds for finite learning problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--d", default=None, help="distortion list or start:stop:count")
        p.add_argument("--k", default=None, help="comma list of opportunity counts")
        p.add_argument("--eps", default=None, help="comma list of excess probabilities")
        p.add_argument("--n", type=int, default=None, help="dataset size")
        p.add_argument("--n-max", dest="n_max", type=int, default=6)
        p.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed")
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--cap", type=int, default=10**6, help="enumeration cap")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must fit in 64 unsigned bits")
        problem, algorithm = load_scenario(args.scenario)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (ScenarioFormatError, OSError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return COMMANDS[args.command](args, problem, algorithm)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except rd_mod.DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
