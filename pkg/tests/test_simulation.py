from dataclasses import replace

import numpy as np
import pytest

from rlrestore import gmm as G
from rlrestore import restoration as R
from rlrestore import simulation as S
from rlrestore import uncertainty as U
from rlrestore.gmm import Gmm

from scenarios import noisy_prior, small_scenario


def exact_prior(trace: S.TraceSet) -> Gmm:
    flat = trace.values.reshape(-1)
    return Gmm.single(flat, np.zeros((flat.size, flat.size)))


def static_optimum(sc, prior):
    w = R.build_window(sc, U.initial_state(sc.layout, prior))
    sol, _ = R.solve_window(w)
    return sol.objective


# --- adjustment ---------------------------------------------------------


def test_adjust_regulates_shortfall():
    out = S.adjust_realization(3.0, [2.0], 0.0, 0.5, [1.0])
    assert out.regulation_up.tolist() == [0.5]
    assert out.spillage == 0 and out.unserved_energy == 0 and out.shortfall_flag


def test_adjust_spills_surplus():
    out = S.adjust_realization(3.0, [2.0], 0.4, 1.0, [1.0])
    assert out.spillage == pytest.approx(0.4)
    assert not out.shortfall_flag and out.regulation_up.tolist() == [0.0]


def test_adjust_records_unserved_when_headroom_runs_out():
    out = S.adjust_realization(3.0, [2.0], 0.0, 0.0, [0.3], tau=0.5)
    assert out.regulation_up.tolist() == [pytest.approx(0.3)]
    assert out.unserved_energy == pytest.approx(0.35)
    assert out.shortfall_flag


def test_adjust_raises_units_lowest_index_first():
    out = S.adjust_realization(5.0, [1.0, 1.0, 1.0], 0.0, 1.0, [0.5, 2.0, 2.0])
    np.testing.assert_allclose(out.regulation_up, [0.5, 0.5, 0.0])


# --- rolling runs -------------------------------------------------------


def test_perfect_forecast_reproduces_static_optimum():
    sc = small_scenario(periods=3, ess=False, ramp=100.0, seed=3)
    trace = S.TraceSet(np.full((3, 2), 0.1))
    prior = exact_prior(trace)
    rep = S.run(sc, prior, trace)
    assert rep.spillage == pytest.approx(0, abs=1e-9)
    assert rep.regulation_events == 0
    assert rep.resilience() == pytest.approx(static_optimum(sc, prior), abs=1e-9)


def test_zero_renewables_equals_no_renewable_optimum():
    sc = small_scenario(periods=3, seed=8)
    trace = S.TraceSet(np.zeros((3, 2)))
    rep = S.run(sc, exact_prior(trace), trace)
    dark = replace(sc, microgrids=tuple(replace(mg, renewables=()) for mg in sc.microgrids))
    assert rep.resilience() == pytest.approx(static_optimum(dark, exact_prior(trace)), abs=1e-9)


@pytest.fixture(scope="module")
def noisy_runs():
    sc = small_scenario(periods=4, seed=2)
    prior = noisy_prior(sc, seed=2)
    caps = [1.0, 1.0]
    traces = S.generate_traces(prior, 3, caps, seed=5)
    out = []
    for mode in ("networked", "standalone"):
        s = S.with_mode(sc, mode)
        out += [S.run(s, prior, tr) for tr in traces]
    return out


def test_energy_balance_every_period(noisy_runs):
    for rep in noisy_runs:
        sc = rep.scenario
        dem = sc.demand_matrix()
        for r in rep.records:
            need = float((r.restored * dem[r.period - 1]).sum()) * sc.tau
            supply = (r.gen_power.sum() + r.regulation.sum() + r.ess_discharge.sum()
                      + r.ess_charge.sum() + r.renewables.sum()) * sc.tau - r.spillage
            assert need == pytest.approx(supply + r.unserved, abs=1e-9)
            assert r.spillage >= 0 and r.unserved >= 0


def test_energy_accounting(noisy_runs):
    for rep in noisy_runs:
        sc = rep.scenario
        burned = sum((r.gen_power + r.regulation) * sc.tau for r in rep.records)
        en0 = np.array([g.en_0 for g in sc.generators])
        np.testing.assert_allclose(rep.final_energy, np.maximum(en0 - burned, 0), atol=1e-9)
        assert np.all(rep.final_energy >= 0)


def test_soc_trajectory(noisy_runs):
    for rep in noisy_runs:
        sc = rep.scenario
        soc = np.array([e.soc_now for e in sc.esses])
        for r in rep.records:
            for e, spec in enumerate(sc.esses):
                soc[e] = soc[e] - (r.ess_discharge[e] / spec.eff_dch
                                   + r.ess_charge[e] * spec.eff_ch) * sc.tau / spec.capacity
            np.testing.assert_allclose(r.soc_after, soc, atol=1e-12)


def test_report_counters_are_period_sums(noisy_runs):
    for rep in noisy_runs:
        assert rep.spillage == pytest.approx(sum(r.spillage for r in rep.records))
        assert rep.regulation_events == sum(r.shortfall for r in rep.records)
        served = np.array([r.served for r in rep.records])
        assert rep.resilience() == R.resilience(served, rep.scenario.weights(), rep.scenario.tau)
        assert sum(rep.group_resilience().values()) == pytest.approx(rep.resilience())


def test_run_is_deterministic():
    sc = small_scenario(periods=3, seed=1)
    prior = noisy_prior(sc)
    tr = S.generate_traces(prior, 1, [1.0, 1.0], seed=3)[0]
    from rlrestore.io import report_to_dict, dumps
    a, b = S.run(sc, prior, tr), S.run(sc, prior, tr)
    assert dumps(report_to_dict(a)) == dumps(report_to_dict(b))


def test_no_update_ignores_observations(monkeypatch):
    sc = small_scenario(periods=3, seed=1)
    prior = noisy_prior(sc)
    seen = []
    inner = R.adequacy_rhs
    monkeypatch.setattr(R, "adequacy_rhs", lambda *a: seen.append(inner(*a)) or seen[-1])
    lo, hi = S.TraceSet(np.full((3, 2), 0.05)), S.TraceSet(np.full((3, 2), 0.9))
    S.run(sc, prior, lo, update=False)
    frozen = list(seen)
    seen.clear()
    S.run(sc, prior, hi, update=False)
    assert seen == frozen
    seen.clear()
    S.run(sc, prior, hi, update=True)
    assert seen != frozen


def test_infeasible_window_falls_back_and_continues():
    sc = small_scenario(periods=3, seed=1, ess=False)
    # frozen ramps from a hot start need more fuel than the units hold
    gens = tuple(replace(g, p_prev=g.p_max, r_dn=0.0, r_up=0.0, en_0=0.1)
                 for g in sc.generators)
    mgs = tuple(replace(mg, generators=(g,)) for mg, g in zip(sc.microgrids, gens))
    bad = replace(sc, microgrids=mgs, formulation="ocdd")
    tr = S.TraceSet(np.zeros((3, 2)))
    rep = S.run(bad, exact_prior(tr), tr)
    assert len(rep.records) == 3
    first = rep.records[0]
    assert first.status == "infeasible" and first.restored.sum() == 0
    assert np.isnan(first.objective)
    # the fallback leaves the units cold, which frees the next window
    assert rep.records[1].status == "optimal"
    assert rep.records[1].gen_power.tolist() == [0.0, 0.0]


def test_standalone_run_matches_sub_scenario_runs():
    sc = S.with_mode(small_scenario(periods=3, seed=4), "standalone")
    prior = noisy_prior(sc, seed=4)
    tr = S.generate_traces(prior, 1, [1.0, 1.0], seed=9)[0]
    rep = S.run(sc, prior, tr)
    parts = [S.run(sc.sub_scenario(i), prior, tr) for i in range(2)]
    assert rep.resilience() == pytest.approx(sum(p.resilience() for p in parts))
    assert list(rep.group_resilience().values()) == [p.resilience() for p in parts]


def test_run_checks_shapes():
    sc = small_scenario(periods=3)
    prior = noisy_prior(sc)
    with pytest.raises(S.SimulationError):
        S.run(sc, prior, S.TraceSet(np.zeros((2, 2))))
    with pytest.raises(S.SimulationError):
        S.run(sc, Gmm.single(np.zeros(4), np.eye(4)), S.TraceSet(np.zeros((3, 2))))


# --- traces -------------------------------------------------------------


def test_trace_validation():
    with pytest.raises(S.SimulationError):
        S.TraceSet(np.array([[0.1, -0.2]]))
    with pytest.raises(S.SimulationError):
        S.TraceSet(np.array([0.1, 0.2]))
    t = S.TraceSet(np.array([[0.5, 2.5]]))
    with pytest.raises(S.SimulationError):
        t.check(U.FleetLayout(1, 1, 1), [1.0, 2.0])
    with pytest.raises(ValueError):
        t.values[0, 0] = 1.0


def test_generated_traces_are_clamped_and_seeded():
    g = Gmm.single([0.0, 1.0], np.eye(2))
    a = S.generate_traces(g, 200, [1.5], seed=4)
    assert all(np.all((t.values >= 0) & (t.values <= 1.5)) for t in a)
    assert any((t.values == 0).any() for t in a)
    b = S.generate_traces(g, 200, [1.5], seed=4)
    assert a == b


def test_trace_sample_means_within_clt_bound():
    rng = np.random.default_rng(0)
    g = Gmm(np.array([0.3, 0.7]), rng.uniform(20, 30, size=(2, 4)),
            np.array([np.eye(4) * v for v in (1.0, 2.0)]))
    tr = S.generate_traces(g, 1000, [100.0, 100.0], seed=1)
    x = S.traces_matrix(tr)
    mu, cov = G.moments(g)
    assert np.all(np.abs(x.mean(axis=0) - mu) <= 3 * np.sqrt(np.diag(cov) / 1000))


def test_synthetic_ground_truth_shape():
    lay = U.FleetLayout(2, 1, 10)
    gt = S.synthetic_ground_truth(lay, [2.0, 2.0, 2.0], 12, seed=1)
    assert gt.n_components == 12 and gt.dim == 30
    assert np.all(G.mean(gt) >= 0)


# --- comparison ---------------------------------------------------------


def test_compare_identical_reports(noisy_runs):
    tab = S.compare({"a": noisy_runs[:3], "b": noisy_runs[:3]})
    assert np.all(tab.delta("a", "b") == 0)
    assert tab.win_rate("a", "b") == 1.0 and tab.win_rate("a", "b", strict=True) == 0.0
    rows = tab.summary_rows()
    assert [r["label"] for r in rows] == ["a", "b"]
    assert rows[1]["mean_delta_vs_first"] == 0


def test_compare_networked_against_standalone(noisy_runs):
    tab = S.compare({"net": noisy_runs[:3], "sa": noisy_runs[3:]})
    assert tab.days == 3
    np.testing.assert_allclose(tab.delta("net", "sa"),
                               [a.resilience() - b.resilience() for a, b in zip(noisy_runs[:3], noisy_runs[3:])])


def test_compare_rejects_mismatched_days(noisy_runs):
    with pytest.raises(S.SimulationError):
        S.compare({"a": noisy_runs[:3], "b": noisy_runs[:2]})
    with pytest.raises(S.SimulationError):
        S.compare({})
