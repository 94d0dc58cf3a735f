"""Progressive hedging over scenario subproblems.

Iteration 0 solves each scenario alone; later rounds solve subproblems
augmented with the scenario's running price vector and a proximal pull
toward the probability-weighted mean of the first-stage decisions.  The
loop stops once the weighted deviation from the mean falls below the
threshold, then extracts a consensus plan (majority vote projected onto
the first-stage constraints) and prices it by re-solving every scenario
with the plan pinned.

Subproblems of one iteration are independent and may solve on a thread
pool; results merge in scenario order, so the worker count never changes
the outcome.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .formulation import (
    CompiledProblem,
    FirstStagePlan,
    FormulationConfig,
    build_first_stage,
    build_ph_subproblem,
    build_subproblem,
    first_stage_vector_ids,
    plan_from_solution,
    VariableIndex,
)
from .milp import (
    BINARY,
    GE,
    LinearExpr,
    MilpProblem,
    solve_milp,
)
from .network import LoopSet, NetworkModel, enumerate_loops
from .scenarios import ScenarioSet


class PhError(RuntimeError):
    pass


class SubproblemInfeasibleError(PhError):
    def __init__(self, scenario_id: int):
        super().__init__(f"scenario {scenario_id} subproblem is infeasible")
        self.scenario_id = scenario_id


@dataclass(frozen=True)
class PhConfig:
    rho: float = 1.0
    epsilon: float = 0.01
    max_iterations: int = 100
    workers: int = 1
    norm: str = "l1"  # deviation norm in the convergence metric
    per_variable_rho: bool = False  # rho_j = |a_j| / (range_j + 1)
    stagnation_window: int = 5
    stagnation_rel_tol: float = 1e-4
    rho_bump: float = 1.5
    rho_cap_factor: float = 10.0
    gap_tol: float = 1e-6
    node_limit: int = 200_000
    prior_plan: FirstStagePlan | None = None
    # tiny common first-stage cost so exact ties resolve the same way in
    # every scenario; without it, equal-cost placements swap forever
    tie_break_weight: float = 0.02

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.norm not in ("l1", "l2"):
            raise ValueError("norm must be 'l1' or 'l2'")


@dataclass
class PhState:
    iteration: int
    x_s: list[list[float]]
    x_bar: list[float]
    eta_s: list[list[float]]
    metric_history: list[float]
    hint_plan: FirstStagePlan | None = None

    def to_document(self) -> dict:
        return {
            "iteration": self.iteration,
            "x_s": self.x_s,
            "x_bar": self.x_bar,
            "eta_s": self.eta_s,
            "metric_history": self.metric_history,
        }

    @staticmethod
    def from_document(doc: Mapping) -> "PhState":
        return PhState(
            iteration=int(doc["iteration"]),
            x_s=[list(map(float, row)) for row in doc["x_s"]],
            x_bar=list(map(float, doc["x_bar"])),
            eta_s=[list(map(float, row)) for row in doc["eta_s"]],
            metric_history=list(map(float, doc["metric_history"])),
        )


@dataclass
class PhResult:
    plan: FirstStagePlan
    converged: bool
    iterations: int
    scenario_objectives: list[float]
    ef_cost: float
    metric_history: list[float]
    log_rows: list[tuple[int, float, float, float]]  # iter, g, elapsed_s, mean obj
    state: PhState


def aggregate(x_s: Sequence[Sequence[float]], probabilities: Sequence[float]) -> list[float]:
    """Probability-weighted mean of the per-scenario first-stage vectors."""
    if not x_s:
        raise ValueError("no scenario vectors to aggregate")
    dim = len(x_s[0])
    for vec in x_s:
        if len(vec) != dim:
            raise ValueError("scenario vectors have mismatched dimensions")
    if abs(sum(probabilities) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    out = [0.0] * dim
    for pr, vec in zip(probabilities, x_s):
        for j, v in enumerate(vec):
            out[j] += pr * v
    return out


def convergence_metric(
    x_s: Sequence[Sequence[float]],
    x_bar: Sequence[float],
    probabilities: Sequence[float],
    norm: str = "l1",
) -> float:
    """Probability-weighted deviation of the scenario decisions from the mean."""
    total = 0.0
    for pr, vec in zip(probabilities, x_s):
        if len(vec) != len(x_bar):
            raise ValueError("scenario vector does not match the aggregate dimension")
        dev = [v - m for v, m in zip(vec, x_bar)]
        if norm == "l1":
            total += pr * sum(abs(d) for d in dev)
        else:
            total += pr * math.sqrt(sum(d * d for d in dev))
    return total


def soft_start(config: PhConfig, prior_plan: FirstStagePlan | None) -> PhState:
    """Empty iteration state carrying the warm-start hint for iteration 0."""
    return PhState(
        iteration=-1, x_s=[], x_bar=[], eta_s=[], metric_history=[], hint_plan=prior_plan
    )


def _plan_hint(index: VariableIndex, plan: FirstStagePlan) -> dict[int, float]:
    hint: dict[int, float] = {}
    for key, vid in index.items():
        kind, entity = key[0], key[1]
        if kind == "meg":
            hint[vid] = float(plan.meg_at.get(entity, 0))
        elif kind == "mes":
            hint[vid] = float(plan.mes_at.get(entity, 0))
        elif kind == "lots" and entity in plan.fuel_lots:
            hint[vid] = float(plan.fuel_lots[entity])
        elif kind == "crew" and entity in plan.crews:
            hint[vid] = float(plan.crews[entity])
    return hint


def _vector_hint(ids: Sequence[int], vec: Sequence[float]) -> dict[int, float]:
    return {vid: float(v) for vid, v in zip(ids, vec)}


def _with_tie_break(problem: MilpProblem, ids: Sequence[int], weight: float) -> MilpProblem:
    if weight <= 0.0:
        return problem
    biased = problem.copy()
    n = max(len(ids), 1)
    for j, vid in enumerate(ids):
        biased.add_objective_term(vid, weight * (1.0 + j / n))
    return biased.seal()


def _rho_vector(config: PhConfig, compiled: CompiledProblem, ids: Sequence[int]) -> list[float]:
    if not config.per_variable_rho:
        return [config.rho] * len(ids)
    out = []
    for vid in ids:
        coef = compiled.problem.objective.terms.get(vid, 0.0)
        spec = compiled.problem.variables[vid]
        rng = spec.upper - spec.lower
        out.append(abs(coef) / (rng + 1.0))
    return out


def repair_consensus(
    model: NetworkModel,
    config: FormulationConfig,
    votes: Mapping[str, Mapping],
) -> FirstStagePlan:
    """Project the vote vector onto the first-stage constraints (min L1 move).

    Small kernel solve over the first-stage block only; binaries use the
    exact expansion of |x - v| and integers an auxiliary deviation variable.
    """
    problem = MilpProblem("consensus_repair")
    index = VariableIndex()
    first = build_first_stage(model, config, problem, index)
    objective = LinearExpr()
    groups = {"meg": first.meg, "mes": first.mes, "lots": first.lots, "crew": first.crew}
    for kind, group in groups.items():
        for entity, vid in group.items():
            vote = float(votes.get(kind, {}).get(entity, 0.0))
            spec = problem.variables[vid]
            if spec.kind == BINARY:
                objective.add(vid, 1.0 - 2.0 * vote)
                objective.constant += vote
            else:
                wid = problem.add_variable(0.0, math.inf, name=f"dev_{kind}_{entity}")
                problem.add_constraint(LinearExpr({wid: 1.0, vid: -1.0}), GE, -vote)
                problem.add_constraint(LinearExpr({wid: 1.0, vid: 1.0}), GE, vote)
                objective.add(wid, 1.0)
    problem.set_objective(objective)
    sol = solve_milp(problem.seal(), gap_tol=0.0)
    if not sol.ok:
        raise PhError("consensus repair found no feasible first-stage plan")
    return plan_from_solution(index, sol)


def _votes_from_vector(index: VariableIndex, ids: Sequence[int], x_bar: Sequence[float]) -> dict:
    votes: dict[str, dict] = {"meg": {}, "mes": {}, "lots": {}, "crew": {}}
    for vid, val in zip(ids, x_bar):
        kind, entity = index.key_of(vid)[0], index.key_of(vid)[1]
        votes[kind][entity] = val
    return votes


def evaluate_plan_cost(
    model: NetworkModel,
    scen_set: ScenarioSet,
    config: FormulationConfig,
    plan: FirstStagePlan,
    loops: LoopSet,
    gap_tol: float = 1e-4,
    workers: int = 1,
) -> tuple[float, list[float]]:
    """True expected cost of a plan: each scenario re-solved with it pinned."""

    def solve_one(scen):
        comp = build_subproblem(model, scen, config, loops=loops, fixed_plan=plan)
        sol = solve_milp(comp.problem, gap_tol=gap_tol)
        if not sol.ok:
            raise SubproblemInfeasibleError(scen.id)
        return sol.objective

    objs = _map_scenarios(solve_one, scen_set.scenarios, workers)
    ef_cost = sum(pr * o for pr, o in zip((s.probability for s in scen_set.scenarios), objs))
    return ef_cost, list(objs)


def _map_scenarios(fn, scenarios, workers: int):
    if workers <= 1:
        return [fn(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, scenarios))


def ph_solve(
    model: NetworkModel,
    scen_set: ScenarioSet,
    config: FormulationConfig,
    ph_config: PhConfig,
    loops: LoopSet | None = None,
    timer=None,
) -> PhResult:
    """Run the two-stage hedging loop and return the consensus plan."""
    import time as _time

    clock = timer if timer is not None else _time.perf_counter
    if len(scen_set) == 0:
        raise PhError("scenario set is empty")
    if loops is None:
        loops = enumerate_loops(model)
    probs = [s.probability for s in scen_set.scenarios]
    # a single scenario has no ties to break; keep its optimum untouched
    tie_break = ph_config.tie_break_weight if len(scen_set) > 1 else 0.0
    state = soft_start(ph_config, ph_config.prior_plan)
    log_rows: list[tuple[int, float, float, float]] = []
    t_start = clock()

    # iteration 0: plain scenario subproblems (optionally hinted by a prior plan)
    def solve_plain(scen):
        comp = build_subproblem(model, scen, config, loops=loops)
        ids = first_stage_vector_ids(comp.index)
        hint = None
        if state.hint_plan is not None:
            hint = _plan_hint(comp.index, state.hint_plan)
        biased = _with_tie_break(comp.problem, ids, tie_break)
        sol = solve_milp(biased, gap_tol=ph_config.gap_tol,
                         node_limit=ph_config.node_limit, hint=hint)
        if not sol.ok:
            raise SubproblemInfeasibleError(scen.id)
        return [sol.values[v] for v in ids], sol.objective, comp

    results = _map_scenarios(solve_plain, scen_set.scenarios, ph_config.workers)
    x_s = [r[0] for r in results]
    objs = [r[1] for r in results]
    compiled0 = results[0][2]
    ids0 = first_stage_vector_ids(compiled0.index)
    rho_vec = _rho_vector(ph_config, compiled0, ids0)
    rho_cap = [r * ph_config.rho_cap_factor for r in rho_vec]

    x_bar = aggregate(x_s, probs)
    eta_s = [[r * (xv - xb) for r, xv, xb in zip(rho_vec, vec, x_bar)] for vec in x_s]
    g = convergence_metric(x_s, x_bar, probs, ph_config.norm)
    state = PhState(iteration=0, x_s=x_s, x_bar=x_bar, eta_s=eta_s,
                    metric_history=[g], hint_plan=state.hint_plan)
    log_rows.append((0, g, clock() - t_start, float(np.mean(objs))))

    stagnant = 0
    tau = 0
    while g > ph_config.epsilon and tau < ph_config.max_iterations:
        tau += 1

        def solve_augmented(si_scen):
            si, scen = si_scen
            comp = build_ph_subproblem(
                model, scen, config,
                multipliers=state.eta_s[si],
                anchor=state.x_bar,
                rho=rho_vec,
                loops=loops,
            )
            ids = first_stage_vector_ids(comp.index)
            hint = _vector_hint(ids, state.x_s[si])
            biased = _with_tie_break(comp.problem, ids, tie_break)
            sol = solve_milp(biased, gap_tol=ph_config.gap_tol,
                             node_limit=ph_config.node_limit, hint=hint)
            if not sol.ok:
                raise SubproblemInfeasibleError(scen.id)
            return [sol.values[v] for v in ids], sol.objective

        results = _map_scenarios(solve_augmented, list(enumerate(scen_set.scenarios)), ph_config.workers)
        x_s = [r[0] for r in results]
        objs = [r[1] for r in results]
        x_bar = aggregate(x_s, probs)
        eta_s = [
            [e + r * (xv - xb) for e, r, xv, xb in zip(state.eta_s[si], rho_vec, vec, x_bar)]
            for si, vec in enumerate(x_s)
        ]
        g = convergence_metric(x_s, x_bar, probs, ph_config.norm)
        state = PhState(iteration=tau, x_s=x_s, x_bar=x_bar, eta_s=eta_s,
                        metric_history=state.metric_history + [g], hint_plan=state.hint_plan)
        log_rows.append((tau, g, clock() - t_start, float(np.mean(objs))))

        # multiplier drift guard: the weighted multipliers must stay centered
        drift = max(
            abs(sum(pr * eta_s[si][j] for si, pr in enumerate(probs)))
            for j in range(len(x_bar))
        ) if x_bar else 0.0
        if drift > 1e-6:
            raise PhError(f"multiplier aggregate drifted to {drift}")

        hist = state.metric_history
        if len(hist) >= 2:
            rel = abs(hist[-1] - hist[-2]) / max(hist[-2], 1e-12)
            stagnant = stagnant + 1 if rel < ph_config.stagnation_rel_tol else 0
        if stagnant >= ph_config.stagnation_window:
            rho_vec = [min(r * ph_config.rho_bump, cap) for r, cap in zip(rho_vec, rho_cap)]
            stagnant = 0

    converged = g <= ph_config.epsilon
    votes = _votes_from_vector(compiled0.index, ids0, state.x_bar)
    plan = repair_consensus(model, config, votes)
    bad = plan.violations(model, config)
    if bad:
        raise PhError(f"consensus plan violates first-stage constraints: {bad}")
    ef_cost, scen_objs = evaluate_plan_cost(
        model, scen_set, config, plan, loops,
        gap_tol=ph_config.gap_tol, workers=ph_config.workers,
    )
    return PhResult(
        plan=plan,
        converged=converged,
        iterations=tau,
        scenario_objectives=scen_objs,
        ef_cost=ef_cost,
        metric_history=state.metric_history,
        log_rows=log_rows,
        state=state,
    )


def iteration_log_csv(rows: Sequence[tuple[int, float, float, float]]) -> str:
    lines = ["iter,g,elapsed_s,mean_subproblem_obj"]
    for it, g, elapsed, mean_obj in rows:
        lines.append(f"{it},{g!r},{elapsed!r},{mean_obj!r}")
    return "\n".join(lines) + "\n"


def checkpoint_to_json(state: PhState) -> str:
    return json.dumps(state.to_document(), indent=2, sort_keys=True)


def checkpoint_from_json(raw: str) -> PhState:
    return PhState.from_document(json.loads(raw))
