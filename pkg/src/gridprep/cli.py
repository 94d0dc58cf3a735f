"""Command-line pipeline: generate -> solve -> validate -> evaluate.

Every stage is deterministic at fixed seeds and worker counts.  Exit codes:
0 success, 2 input error, 3 infeasible model or plan, 4 solver did not
converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .formulation import (
    FormulationConfig,
    FormulationError,
    build_extensive_form,
    config_from_document,
    plan_from_document,
    plan_from_solution,
    plan_to_document,
)
from .hedging import PhConfig, PhError, SubproblemInfeasibleError, iteration_log_csv, ph_solve
from .milp import solve_milp, write_lp
from .mrp import MrpConfig, MrpError, mrp_validate, result_to_json
from .network import NetworkParseError, NetworkValidationError, load_network, validate_regions
from .report import (
    EvaluationError,
    InsufficientResourcesError,
    build_base_plan,
    evaluate_plan,
    reports_to_json,
    served_fraction_csv,
    sweep_pv,
)
from .scenarios import (
    FragilityParams,
    fragility_from_document,
    dump_scenarios,
    generate_scenario_set,
    load_scenarios,
    load_wind_csv,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    return p.read_text()


def _load_model(args):
    try:
        return load_network(_read(args.network))
    except (NetworkParseError, NetworkValidationError) as exc:
        raise CliError(f"network document: {exc}") from exc


def _load_config(args) -> FormulationConfig:
    if getattr(args, "config", None):
        try:
            return config_from_document(json.loads(_read(args.config)))
        except (json.JSONDecodeError, FormulationError, TypeError) as exc:
            raise CliError(f"config file: {exc}") from exc
    return FormulationConfig()


def _load_fragility(args) -> FragilityParams:
    if getattr(args, "fragility", None):
        try:
            return fragility_from_document(json.loads(_read(args.fragility)))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise CliError(f"fragility file: {exc}") from exc
    return FragilityParams()


def _load_scenario_set(args, model):
    if getattr(args, "scenarios", None):
        try:
            return load_scenarios(_read(args.scenarios))
        except (json.JSONDecodeError, ValueError, KeyError) as exc:
            raise CliError(f"scenario file: {exc}") from exc
    if getattr(args, "count", None):
        if not getattr(args, "wind", None):
            raise CliError("generating scenarios inline needs --wind")
        wind = load_wind_csv(_read(args.wind))
        params = _load_fragility(args)
        return generate_scenario_set(model, wind, params, count=args.count, seed=args.seed)
    raise CliError("provide --scenarios FILE or --count N --seed K --wind FILE")


def _load_plan(path: str, config: FormulationConfig):
    try:
        return plan_from_document(json.loads(_read(path)), config.fuel_quantum)
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        raise CliError(f"plan file: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text)
    print(f"wrote {path}")


def cmd_generate(args) -> int:
    model = _load_model(args)
    if args.count < 1:
        raise CliError("--count must be >= 1")
    wind = load_wind_csv(_read(args.wind))
    params = _load_fragility(args)
    scen_set = generate_scenario_set(model, wind, params, count=args.count, seed=args.seed)
    out = _out_dir(args)
    _write(out / "scenarios.json", dump_scenarios(scen_set))
    return EXIT_OK


def cmd_solve_ef(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    scen_set = _load_scenario_set(args, model)
    try:
        compiled = build_extensive_form(model, scen_set, config)
    except FormulationError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    if args.dump_lp:
        _write(_out_dir(args) / "extensive_form.lp", write_lp(compiled.problem))
    sol = solve_milp(compiled.problem, gap_tol=args.gap)
    if sol.status == "infeasible":
        raise CliError("extensive form is infeasible", EXIT_INFEASIBLE)
    if not sol.ok:
        raise CliError(f"solver stopped with status {sol.status}", EXIT_NOT_CONVERGED)
    plan = plan_from_solution(compiled.index, sol)
    out = _out_dir(args)
    _write(out / "ef_plan.json", json.dumps(plan_to_document(plan, config.fuel_quantum),
                                            indent=2, sort_keys=True))
    _write(out / "ef_solution.json", json.dumps(
        {"objective": sol.objective, "best_bound": sol.best_bound, "status": sol.status,
         "scenarios": len(scen_set)}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_solve_ph(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    scen_set = _load_scenario_set(args, model)
    prior = _load_plan(args.soft_start, config) if args.soft_start else None
    ph_config = PhConfig(
        rho=args.rho,
        epsilon=args.epsilon,
        max_iterations=args.max_iters,
        workers=args.workers,
        prior_plan=prior,
    )
    try:
        result = ph_solve(model, scen_set, config, ph_config)
    except SubproblemInfeasibleError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    except (FormulationError, PhError) as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    out = _out_dir(args)
    _write(out / "ph_plan.json", json.dumps(plan_to_document(result.plan, config.fuel_quantum),
                                            indent=2, sort_keys=True))
    _write(out / "ph_log.csv", iteration_log_csv(result.log_rows))
    _write(out / "ph_state.json", json.dumps(result.state.to_document(), indent=2, sort_keys=True))
    _write(out / "ph_result.json", json.dumps(
        {
            "converged": result.converged,
            "iterations": result.iterations,
            "ef_cost": result.ef_cost,
            "scenario_objectives": result.scenario_objectives,
            "metric_history": result.metric_history,
        }, indent=2, sort_keys=True))
    if not result.converged:
        print(f"hedging stopped at g={result.metric_history[-1]:.6g} "
              f"after {result.iterations} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_validate_mrp(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    candidate = _load_plan(args.candidate, config)
    wind = load_wind_csv(_read(args.wind))
    params = _load_fragility(args)

    def sampler(n, seed):
        return generate_scenario_set(model, wind, params, count=n, seed=seed)

    mrp_config = MrpConfig(alpha=args.alpha, n=args.n, n_g=args.ng,
                           base_seed=args.seed, workers=args.workers)
    try:
        result = mrp_validate(candidate, model, config, sampler, mrp_config)
    except MrpError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    out = _out_dir(args)
    _write(out / "mrp.json", result_to_json(result))
    print(f"one-sided CI on the optimality gap: [0, {result.ci_upper:.6g}] "
          f"([0, {result.ci_upper_pct:.2f}%] of candidate cost)")
    return EXIT_OK


def cmd_base_plan(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    try:
        plan = build_base_plan(model, config)
    except InsufficientResourcesError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    out = _out_dir(args)
    _write(out / "base_plan.json", json.dumps(plan_to_document(plan, config.fuel_quantum),
                                              indent=2, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    scen_set = _load_scenario_set(args, model)
    plan = _load_plan(args.plan, config)
    label = args.label or Path(args.plan).stem
    reports = []
    try:
        for scen in scen_set.scenarios:
            reports.append(evaluate_plan(plan, model, scen, config, plan_label=label))
    except EvaluationError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc
    out = _out_dir(args)
    _write(out / "evaluation.json", reports_to_json(reports))
    _write(out / "served_fraction.csv", served_fraction_csv(reports))
    mean_energy = sum(r.restored_energy_kwh * s.probability
                      for r, s in zip(reports, scen_set.scenarios))
    mean_outage = sum(r.avg_outage_hours * s.probability
                      for r, s in zip(reports, scen_set.scenarios))
    print(f"expected restored energy: {mean_energy:.2f} kWh; "
          f"expected average outage: {mean_outage:.2f} h")
    return EXIT_OK


def cmd_sweep_pv(args) -> int:
    model = _load_model(args)
    config = _load_config(args)
    scen_set = _load_scenario_set(args, model)
    try:
        levels = [int(x) for x in args.levels.split(",") if x != ""]
    except ValueError as exc:
        raise CliError(f"--levels must be comma-separated integers: {exc}") from exc
    try:
        results = sweep_pv(model, levels, scen_set, config)
    except EvaluationError as exc:
        raise CliError(str(exc), EXIT_NOT_CONVERGED) from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = _out_dir(args)
    _write(out / "pv_sweep.json", json.dumps([r.to_document() for r in results],
                                             indent=2, sort_keys=True))
    rows = ["percent,objective,expected_served_kwh,expected_outage_hours,pv_units"]
    for r in results:
        rows.append(f"{r.percent},{r.objective!r},{r.expected_served_kwh!r},"
                    f"{r.expected_outage_hours!r},{r.pv_units}")
    _write(out / "pv_sweep.csv", "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_check_network(args) -> int:
    model = _load_model(args)
    report = validate_regions(model, crew_total=args.crew_total)
    for v in report.violations:
        print(f"violation: {v}")
    print(f"{len(model.buses)} buses, {len(model.lines)} lines, "
          f"{len(model.regions)} regions; {len(report.violations)} violation(s)")
    return EXIT_OK if report.ok else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridprep",
        description="Pre-event resource allocation for storm-resilient feeders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenarios=True):
        p.add_argument("--network", required=True, help="network document (JSON)")
        p.add_argument("--config", help="formulation config (JSON)")
        p.add_argument("--out", default="out", help="output directory")
        if scenarios:
            p.add_argument("--scenarios", help="scenario file (JSON)")
            p.add_argument("--count", type=int, help="scenario count for inline sampling")
            p.add_argument("--seed", type=int, default=0, help="sampling seed")
            p.add_argument("--wind", help="wind profile CSV (t,wind_mps)")
            p.add_argument("--fragility", help="fragility parameter file (JSON)")

    p = sub.add_parser("generate-scenarios", help="sample damage scenarios")
    p.add_argument("--network", required=True)
    p.add_argument("--wind", required=True)
    p.add_argument("--fragility")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("solve-ef", help="solve the extensive form directly")
    common(p)
    p.add_argument("--gap", type=float, default=1e-4, help="relative MIP gap")
    p.add_argument("--dump-lp", action="store_true", help="write the LP-format problem")
    p.set_defaults(fn=cmd_solve_ef)

    p = sub.add_parser("solve-ph", help="solve by progressive hedging")
    common(p)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--soft-start", help="prior plan file used as a warm-start hint")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_solve_ph)

    p = sub.add_parser("validate-mrp", help="confidence interval on a plan's optimality gap")
    p.add_argument("--network", required=True)
    p.add_argument("--config")
    p.add_argument("--candidate", required=True, help="candidate plan file")
    p.add_argument("--wind", required=True)
    p.add_argument("--fragility")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n", type=int, default=2, help="scenarios per replication")
    p.add_argument("--ng", type=int, default=2, help="replication count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_validate_mrp)

    p = sub.add_parser("base-plan", help="heuristic comparison plan")
    p.add_argument("--network", required=True)
    p.add_argument("--config")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_base_plan)

    p = sub.add_parser("evaluate", help="score a plan against scenarios")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--label", help="plan label in reports")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep-pv", help="re-solve across PV penetration levels")
    common(p)
    p.add_argument("--levels", required=True, help="comma-separated percents, e.g. 0,9,27")
    p.set_defaults(fn=cmd_sweep_pv)

    p = sub.add_parser("check-network", help="validate a network document")
    p.add_argument("--network", required=True)
    p.add_argument("--crew-total", type=int, default=None)
    p.set_defaults(fn=cmd_check_network)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "exit_code": exc.code}), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
