import json
import math

import pytest
from scipy.stats import t as tdist

from gridprep.formulation import FirstStagePlan, FormulationConfig, build_extensive_form, plan_from_solution
from gridprep.milp import solve_milp
from gridprep.mrp import MrpConfig, MrpError, MrpResult, mrp_validate, replicate_gap, result_to_json
from gridprep.network import network_from_document
from gridprep.scenarios import DamageScenario, ScenarioSet


def fixed_sampler(scenario):
    """Degenerate sampler: every draw returns n copies of one scenario."""

    def sampler(n, seed):
        scens = tuple(
            DamageScenario(id=i, probability=1.0 / n,
                           damaged_lines=scenario.damaged_lines,
                           repair_periods=dict(scenario.repair_periods),
                           irradiance=scenario.irradiance)
            for i in range(n)
        )
        return ScenarioSet(scenarios=scens, seed=seed)

    return sampler


def chain_scenario():
    return DamageScenario(id=0, probability=1.0, damaged_lines=frozenset({"l23"}),
                          repair_periods={"l23": 2}, irradiance=(500.0,) * 3)


class TestReplicateGap:
    def test_candidate_equal_to_sample_optimum_gives_zero(self, chain3, chain3_config):
        scen = chain_scenario()
        sampler = fixed_sampler(scen)
        ef = build_extensive_form(chain3, sampler(2, 0), chain3_config)
        sol = solve_milp(ef.problem, gap_tol=0.0)
        candidate = plan_from_solution(ef.index, sol)
        gap, cost, tainted = replicate_gap(candidate, chain3, chain3_config, sampler,
                                           n=2, seed=0)
        assert not tainted
        assert gap == pytest.approx(0.0, abs=1e-6)
        assert cost == pytest.approx(sol.objective, abs=1e-6)

    def test_two_bus_instance_gap_is_ten(self):
        """Candidate costs $40, the sample optimum $30; both priced by the
        same kernel, so the replication gap comes out exactly 10."""
        doc = {
            "base": {"kva": 100.0, "kv": 4.16}, "horizon": 1, "dt_hours": 1.0,
            "buses": [
                {"id": "a", "phases": "a", "demand_p": {"a": [0.0]}, "shed_cost": 0.0},
                {"id": "b", "phases": "a", "demand_p": {"a": [10.0]},
                 "demand_q": {"a": [0.0]}, "shed_cost": 4.0},
            ],
            "lines": [{"id": "ab", "from_bus": "a", "to_bus": "b", "phases": "a",
                       "r_matrix": [[0.01, 0, 0], [0, 0, 0], [0, 0, 0]],
                       "x_matrix": [[0.01, 0, 0], [0, 0, 0], [0, 0, 0]],
                       "p_max": 50.0, "q_max": 50.0}],
            "switches": [],
            "regions": [{"id": "r", "depot_bus": "a", "lines": ["ab"],
                         "crew_min": 0, "crew_max": 1}],
            "generators": [],
            "pv": [], "ess": [],
            "candidate_buses": ["a", "b"],
            "meg": {"p_max": 20.0, "q_max": 20.0, "fuel_present": 0.0, "fuel_cap": 100.0},
            "mes": None,
        }
        model = network_from_document({k: v for k, v in doc.items() if v is not None})
        config = FormulationConfig(n_meg=1, n_mes=0, n_fuel=100.0, n_crew=0,
                                   fuel_cost=10.0, fuel_rate=0.3, fuel_quantum=100.0)
        # the line stays down for the whole horizon: a MEG at 'a' is stranded
        scen = DamageScenario(id=0, probability=1.0, damaged_lines=frozenset({"ab"}),
                              repair_periods={"ab": 5}, irradiance=(0.0,))
        sampler = fixed_sampler(scen)
        candidate = FirstStagePlan(meg_at={"a": 1, "b": 0}, mes_at={},
                                   fuel_lots={"a": 1, "b": 0}, crews={"r": 0})
        gap, cost, tainted = replicate_gap(candidate, model, config, sampler, n=1, seed=0)
        assert not tainted
        assert cost == pytest.approx(40.0)  # 10 kW shed at 4 $/kWh
        assert gap == pytest.approx(10.0)  # optimum serves it: 3 L at 10 $/L

    def test_infeasible_candidate_rejected(self, chain3, chain3_config):
        bad = FirstStagePlan(meg_at={"b2": 1, "b3": 1}, mes_at={},
                             fuel_lots={}, crews={"r1": 0})
        with pytest.raises(MrpError, match="infeasible"):
            replicate_gap(bad, chain3, chain3_config, fixed_sampler(chain_scenario()),
                          n=2, seed=0)

    def test_node_limited_solve_taints(self, chain3, chain3_config, monkeypatch):
        import gridprep.mrp as mrp_mod

        real = mrp_mod.solve_milp

        def flaky(problem, gap_tol=0.0, **kw):
            sol = real(problem, gap_tol=gap_tol, **kw)
            sol.status = "iteration_limit"
            return sol

        monkeypatch.setattr(mrp_mod, "solve_milp", flaky)
        gap, cost, tainted = replicate_gap(
            FirstStagePlan(meg_at={"b2": 1}, mes_at={"b3": 1},
                           fuel_lots={"b1": 2}, crews={"r1": 2}),
            chain3, chain3_config, fixed_sampler(chain_scenario()), n=2, seed=0)
        assert tainted


class TestMrpValidate:
    def test_degenerate_sampler_gives_zero_interval(self, chain3, chain3_config):
        scen = chain_scenario()
        sampler = fixed_sampler(scen)
        ef = build_extensive_form(chain3, sampler(2, 0), chain3_config)
        candidate = plan_from_solution(ef.index, solve_milp(ef.problem, gap_tol=0.0))
        result = mrp_validate(candidate, chain3, chain3_config, sampler,
                              MrpConfig(alpha=0.05, n=2, n_g=3, base_seed=0))
        assert result.mean_gap == pytest.approx(0.0, abs=1e-6)
        assert result.sample_variance == pytest.approx(0.0, abs=1e-9)
        assert result.half_width == 0.0
        assert result.ci == (0.0, pytest.approx(0.0, abs=1e-6))

    def test_gap_statistics_arithmetic(self):
        # two replications with gaps {0, 2}: mean 1, sample variance 2
        gaps = [0.0, 2.0]
        mean = sum(gaps) / 2
        var = sum((g - mean) ** 2 for g in gaps) / (2 - 1)
        assert mean == 1.0
        assert var == 2.0
        half = float(tdist.ppf(0.95, 1)) * math.sqrt(var) / math.sqrt(2)
        result = MrpResult(alpha=0.05, n=2, n_g=2, gaps=gaps, tainted=0,
                           mean_gap=mean, sample_variance=var, half_width=half,
                           ci_upper=mean + half, candidate_mean_cost=50.0)
        assert result.ci_upper == pytest.approx(1.0 + half)
        assert result.ci_upper_pct == pytest.approx(100.0 * (1.0 + half) / 50.0)

    def test_t_quantile_shrinks_with_more_replications(self):
        q = [float(tdist.ppf(0.95, df)) for df in range(1, 12)]
        assert all(b < a for a, b in zip(q, q[1:]))

    def test_all_tainted_is_an_error(self, chain3, chain3_config, monkeypatch):
        import gridprep.mrp as mrp_mod

        real = mrp_mod.solve_milp

        def always_limit(problem, gap_tol=0.0, **kw):
            sol = real(problem, gap_tol=gap_tol, **kw)
            sol.status = "iteration_limit"
            return sol

        monkeypatch.setattr(mrp_mod, "solve_milp", always_limit)
        candidate = FirstStagePlan(meg_at={"b2": 1}, mes_at={"b3": 1},
                                   fuel_lots={"b1": 2}, crews={"r1": 2})
        with pytest.raises(MrpError, match="tainted"):
            mrp_validate(candidate, chain3, chain3_config,
                         fixed_sampler(chain_scenario()), MrpConfig(n=2, n_g=2))

    def test_result_document_schema(self):
        result = MrpResult(alpha=0.05, n=3, n_g=4, gaps=[0.0, 1.0], tainted=2,
                           mean_gap=0.5, sample_variance=0.5, half_width=0.3,
                           ci_upper=0.8, candidate_mean_cost=10.0)
        doc = json.loads(result_to_json(result))
        for key in ("alpha", "n", "n_g", "gaps", "mean_gap", "var", "half_width",
                    "ci_upper", "ci_upper_pct"):
            assert key in doc
        assert doc["ci_upper_pct"] == pytest.approx(8.0)

    def test_replication_gaps_nonnegative_on_fixture(self, feeder13, config13, ph_cold,
                                                     wind13, fragility13, loops13):
        from gridprep.scenarios import generate_scenario_set

        def sampler(n, seed):
            return generate_scenario_set(feeder13, wind13, fragility13, count=n, seed=seed)

        result = mrp_validate(ph_cold.plan, feeder13, config13, sampler,
                              MrpConfig(alpha=0.05, n=2, n_g=3, base_seed=41),
                              loops=loops13)
        assert all(g >= -1e-6 for g in result.gaps)
        assert result.ci_upper >= result.mean_gap

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MrpConfig(alpha=0.0)
        with pytest.raises(ValueError):
            MrpConfig(n=1)
        with pytest.raises(ValueError):
            MrpConfig(n_g=1)
