"""Receding-horizon restoration simulator.

Each period: solve the window from the current uncertainty state, commit the
first interval, reveal the realized renewables, regulate diesel output or
spill, then roll energies/SOC forward and fold the observation in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import gmm as G
from . import restoration as R
from . import uncertainty as U
from .gmm import Gmm
from .milp import Status

log = logging.getLogger(__name__)

BAL_TOL = 1e-9


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class TraceSet:
    """Realized renewable output, periods x assets (MW)."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise SimulationError("trace must be a finite 2-D matrix")
        if (v < 0).any():
            raise SimulationError("trace holds negative power")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    def check(self, layout: U.FleetLayout, capacities=None):
        if self.values.shape != (layout.periods, layout.n_assets):
            raise SimulationError(
                f"trace shape {self.values.shape} != {(layout.periods, layout.n_assets)}"
            )
        if capacities is not None and (self.values > np.asarray(capacities)[None, :] + 1e-9).any():
            raise SimulationError("trace exceeds asset capacity")

    def __eq__(self, other):
        return isinstance(other, TraceSet) and np.array_equal(self.values, other.values) \
            and self.source == other.source


@dataclass
class AdjustmentOutcome:
    regulation_up: np.ndarray  # per generator, MW
    spillage: float  # MW
    unserved_energy: float  # MWh
    shortfall_flag: bool
    shed: tuple[int, ...] = ()  # loads dropped to absorb unserved energy


def adjust_realization(demand: float, gen_power, ess_net: float, renewables: float,
                       gen_headroom, tau: float = 1.0, tol: float = BAL_TOL) -> AdjustmentOutcome:
    """Balance one group after the renewables are revealed.

    ``gen_headroom`` is the extra MW each unit can still deliver this period
    (limited by p_max and the remaining energy).  Units are raised in index
    order.  Storage is never re-dispatched.
    """
    gen_power = np.asarray(gen_power, dtype=float)
    head = np.maximum(np.asarray(gen_headroom, dtype=float), 0.0)
    delta = demand - (gen_power.sum() + ess_net + renewables)
    reg = np.zeros_like(gen_power)
    if delta > tol:
        rest = delta
        for g in range(len(reg)):
            take = min(head[g], rest)
            reg[g] = take
            rest -= take
            if rest <= 0:
                break
        rest = max(rest, 0.0)
        return AdjustmentOutcome(reg, 0.0, rest * tau if rest > tol else 0.0, True)
    return AdjustmentOutcome(reg, max(-delta, 0.0), 0.0, False)


@dataclass
class PeriodRecord:
    period: int
    status: str
    restored: np.ndarray  # committed 0/1 per load
    served: np.ndarray  # restored minus loads shed for unserved energy
    gen_power: np.ndarray  # scheduled MW
    ess_discharge: np.ndarray
    ess_charge: np.ndarray
    soc_after: np.ndarray
    renewables: np.ndarray  # realized MW per asset
    regulation: np.ndarray  # MW per generator
    spillage: float  # MWh
    unserved: float  # MWh
    shortfall: bool
    objective: float = float("nan")  # window objective that produced this commitment


@dataclass
class SimulationReport:
    label: str
    scenario: R.ScenarioSpec
    records: list[PeriodRecord] = field(default_factory=list)
    final_energy: np.ndarray | None = None
    final_soc: np.ndarray | None = None
    trace_source: str = ""

    def _served(self) -> np.ndarray:
        return np.array([r.served for r in self.records]) if self.records else np.zeros((0, 0))

    def resilience(self, metric=None) -> float:
        sc = self.scenario
        metric = R.Metric(metric or sc.metric)
        dem = sc.demand_matrix()[[r.period - 1 for r in self.records]]
        return R.resilience(self._served(), sc.weights(), sc.tau, metric, dem)

    @property
    def service_time(self) -> float:
        return self.resilience(R.Metric.SERVICE_TIME)

    @property
    def weighted_energy(self) -> float:
        return self.resilience(R.Metric.WEIGHTED_POWER)

    @property
    def spillage(self) -> float:
        return float(sum(r.spillage for r in self.records))

    @property
    def regulation_events(self) -> int:
        return int(sum(r.shortfall for r in self.records))

    @property
    def unserved(self) -> float:
        return float(sum(r.unserved for r in self.records))

    def group_resilience(self, metric=None) -> dict[str, float]:
        sc = self.scenario
        metric = R.Metric(metric or sc.metric)
        served = self._served()
        dem = sc.demand_matrix()[[r.period - 1 for r in self.records]]
        out, lo = {}, 0
        for mg in sc.microgrids:
            sl = slice(lo, lo + len(mg.loads))
            out[mg.name] = R.resilience(served[:, sl], sc.weights()[sl], sc.tau, metric, dem[:, sl])
            lo += len(mg.loads)
        return out


def _headroom(sc: R.ScenarioSpec, gens, P, energy) -> np.ndarray:
    out = []
    for g in gens:
        spec = sc.generators[g]
        left = max(energy[g] - P[g] * sc.tau, 0.0) / sc.tau
        out.append(max(min(spec.p_max - P[g], left), 0.0))
    return np.array(out)


def _shed(restored, demand, weights, loads, need_mw) -> tuple[int, ...]:
    """Lowest-priority committed loads whose demand covers ``need_mw``."""
    on = [l for l in loads if restored[l]]
    on.sort(key=lambda l: (weights[l], -demand[l], l))
    out, got = [], 0.0
    for l in on:
        if got >= need_mw - BAL_TOL:
            break
        out.append(l)
        got += demand[l]
    return tuple(out)


def _fallback_plan(sc: R.ScenarioSpec, state: R.OperatingState) -> R.PlanWindow:
    n_l, n_e = len(sc.loads), len(sc.esses)
    gen = np.array([min(g.p_min, state.energy[i] / sc.tau) for i, g in enumerate(sc.generators)])
    soc = np.tile(np.asarray(state.soc, dtype=float), (2, 1)).reshape(2, n_e)
    return R.PlanWindow(
        [state.k + 1], np.zeros((1, n_l), dtype=int), gen[None, :], np.zeros((1, n_e)),
        np.zeros((1, n_e)), np.zeros((1, n_e), dtype=int), np.zeros((1, n_e), dtype=int), soc,
    )


def run(sc: R.ScenarioSpec, prior: Gmm, trace: TraceSet, update: bool = True,
        label: str = "", backend: str = "native", abs_gap: float = 1e-6) -> SimulationReport:
    """Roll the restoration controller through one outage day.

    Stand-alone microgrids share nothing but the renewable forecast, so they
    are simulated one at a time and the records merged.
    """
    if sc.mode is R.Mode.STANDALONE and len(sc.microgrids) > 1:
        parts = [_run(replace(sc.sub_scenario(i), mode=R.Mode.NETWORKED), prior, trace, update,
                      label, backend, abs_gap) for i in range(len(sc.microgrids))]
        return _merge(sc, parts, label or sc.mode.value)
    return _run(sc, prior, trace, update, label, backend, abs_gap)


def _merge(sc: R.ScenarioSpec, parts: list[SimulationReport], label: str) -> SimulationReport:
    recs = []
    for rows in zip(*(p.records for p in parts)):
        cat = lambda f: np.concatenate([getattr(r, f) for r in rows])
        status = rows[0].status if len({r.status for r in rows}) == 1 else "/".join(r.status for r in rows)
        recs.append(PeriodRecord(
            rows[0].period, status, cat("restored"), cat("served"), cat("gen_power"),
            cat("ess_discharge"), cat("ess_charge"), cat("soc_after"), rows[0].renewables.copy(),
            cat("regulation"), float(sum(r.spillage for r in rows)),
            float(sum(r.unserved for r in rows)), any(r.shortfall for r in rows),
            float(sum(r.objective for r in rows)),
        ))
    return SimulationReport(label, sc, recs, np.concatenate([p.final_energy for p in parts]),
                            np.concatenate([p.final_soc for p in parts]), parts[0].trace_source)


def _run(sc, prior, trace, update, label, backend, abs_gap) -> SimulationReport:
    layout = sc.layout
    trace.check(layout)
    if prior.dim != layout.dim:
        raise SimulationError(f"prior dim {prior.dim} != {layout.dim}")
    us = U.initial_state(layout, prior)
    state = R.OperatingState.initial(sc)
    weights = sc.weights()
    dem_all = sc.demand_matrix()
    groups = sc.groups()
    report = SimulationReport(label or sc.mode.value, sc, trace_source=trace.source)

    for k in range(sc.periods):
        t = k + 1
        w = R.build_window(sc, us, state)
        sol, plan = R.solve_window(w, abs_gap=abs_gap, backend=backend)
        status = sol.status.value
        objective = float(sol.objective) if plan is not None else float("nan")
        if plan is None:
            log.warning("period %d: window %s; committing the all-off fallback", t, status)
            plan = _fallback_plan(sc, state)
        elif sol.status is not Status.OPTIMAL:
            log.warning("period %d: window solved with status %s", t, status)
        first = plan.first()
        u, P = first["restored"], first["gen_power"]
        dch, ch = first["ess_discharge"], first["ess_charge"]
        realized = trace.values[k]
        demand = dem_all[k]

        reg = np.zeros(len(sc.generators))
        served = u.copy()
        spill = unserved = 0.0
        short = False
        for grp in groups:
            gl = list(grp.gens)
            out = adjust_realization(
                float((u[list(grp.loads)] * demand[list(grp.loads)]).sum()),
                P[gl],
                float(dch[list(grp.esses)].sum() + ch[list(grp.esses)].sum()),
                float(realized[list(grp.assets)].sum()),
                _headroom(sc, gl, P, state.energy),
                sc.tau,
            )
            reg[gl] = out.regulation_up
            spill += out.spillage * sc.tau
            unserved += out.unserved_energy
            short |= out.shortfall_flag
            if out.unserved_energy > 0:
                shed = _shed(u, demand, weights, grp.loads, out.unserved_energy / sc.tau)
                served[list(shed)] = 0

        soc = np.array([R.soc_step(state.soc[e], dch[e], ch[e], spec, sc.tau)
                        for e, spec in enumerate(sc.esses)])
        out_p = P + reg
        state = R.OperatingState(
            t,
            R.roll_energy(state.energy, out_p, sc.tau),
            tuple(float(v) for v in soc),
            tuple(float(v) for v in out_p),
            tuple(float(v) for v in dch + ch),
        )
        report.records.append(PeriodRecord(
            t, status, u, served, P, dch, ch, soc, realized.copy(), reg, spill, unserved, short,
            objective,
        ))
        if t < sc.periods:
            us = U.ingest_observation(us, t, realized) if update else U.skip_observation(us, t)

    report.final_energy = np.array(state.energy)
    report.final_soc = np.array(state.soc)
    return report


# ---------------------------------------------------------------------------
# synthetic renewables


def synthetic_ground_truth(layout: U.FleetLayout, capacities, n_components: int = 12,
                           seed: int = 0, rho: float = 0.9, spatial: float = 0.5) -> Gmm:
    """Regime mixture over a day of wind and solar output.

    Each component is one weather regime: wind assets get a level that
    drifts linearly over the day, solar assets a bell-shaped daylight profile
    scaled by a cloudiness factor.  Within a regime, deviations follow an
    AR(1) in time (coefficient ``rho``) with equicorrelated assets.
    """
    cap = np.asarray(capacities, dtype=float)
    n, K = layout.n_assets, layout.periods
    if cap.shape != (n,):
        raise SimulationError(f"need {n} capacities")
    rng = np.random.default_rng(seed)
    hours = np.arange(K)
    bell = np.sin(np.pi * (hours + 0.5) / K)
    lag = np.abs(hours[:, None] - hours[None, :])
    temporal = rho ** lag
    space = np.full((n, n), spatial) + (1 - spatial) * np.eye(n)
    corr = np.kron(temporal, space)  # period-major
    weights = rng.dirichlet(np.full(n_components, 3.0))
    means, covs = [], []
    for _ in range(n_components):
        mu = np.zeros((K, n))
        sd = np.zeros((K, n))
        for v in range(n):
            if v < layout.wind:
                start, end = rng.uniform(0.15, 0.85, size=2)
                mu[:, v] = cap[v] * np.linspace(start, end, K)
                sd[:, v] = cap[v] * rng.uniform(0.05, 0.10)
            else:
                clear = rng.uniform(0.3, 0.9)
                mu[:, v] = cap[v] * clear * bell
                sd[:, v] = cap[v] * rng.uniform(0.04, 0.08) * (0.3 + bell)
        s = sd.reshape(-1)
        means.append(mu.reshape(-1))
        covs.append(corr * np.outer(s, s))
    return Gmm(weights, np.array(means), np.array(covs))


def generate_traces(ground_truth: Gmm, days: int, capacities, seed: int = 0,
                    layout: U.FleetLayout | None = None, clip: bool = True) -> list[TraceSet]:
    """One day per draw from ``ground_truth``, clamped to [0, capacity]."""
    cap = np.asarray(capacities, dtype=float)
    n = cap.size
    if ground_truth.dim % n:
        raise SimulationError("ground-truth dimension is not a multiple of the asset count")
    K = ground_truth.dim // n
    if layout is not None and layout.dim != ground_truth.dim:
        raise SimulationError("ground truth does not match the layout")
    draws = G.sample(ground_truth, days, seed=seed).reshape(days, K, n)
    if clip:
        draws = np.clip(draws, 0.0, cap[None, None, :])
    else:
        draws = np.maximum(draws, 0.0)
    return [TraceSet(d, f"synthetic:seed={seed}:day={i}") for i, d in enumerate(draws)]


def traces_matrix(traces: list[TraceSet]) -> np.ndarray:
    """Stack traces into flat period-major training rows."""
    return np.array([t.values.reshape(-1) for t in traces])


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonTable:
    labels: list[str]
    resilience: dict[str, np.ndarray]  # per day
    spillage: dict[str, np.ndarray]
    regulation: dict[str, np.ndarray]
    unserved: dict[str, np.ndarray]

    @property
    def days(self) -> int:
        return len(next(iter(self.resilience.values())))

    def delta(self, a: str, b: str) -> np.ndarray:
        return self.resilience[a] - self.resilience[b]

    def win_rate(self, a: str, b: str, strict: bool = False) -> float:
        d = self.delta(a, b)
        return float(np.mean(d > 1e-9 if strict else d >= -1e-9))

    def summary_rows(self) -> list[dict]:
        base = self.labels[0]
        rows = []
        for lab in self.labels:
            rows.append({
                "label": lab,
                "mean_resilience": float(self.resilience[lab].mean()),
                "mean_spillage_mwh": float(self.spillage[lab].mean()),
                "mean_regulation_events": float(self.regulation[lab].mean()),
                "mean_unserved_mwh": float(self.unserved[lab].mean()),
                "mean_delta_vs_first": float(self.delta(lab, base).mean()),
                "win_rate_vs_first": self.win_rate(lab, base),
            })
        return rows


def compare(reports: dict[str, list[SimulationReport]]) -> ComparisonTable:
    """Tabulate per-day totals for each labelled run of the same trace days."""
    if not reports:
        raise SimulationError("nothing to compare")
    counts = {lab: len(r) for lab, r in reports.items()}
    if len(set(counts.values())) != 1:
        raise SimulationError(f"mismatched day counts: {counts}")
    labels = list(reports)

    def col(fn):
        return {lab: np.array([fn(r) for r in reports[lab]], dtype=float) for lab in labels}

    return ComparisonTable(
        labels,
        col(lambda r: r.resilience()),
        col(lambda r: r.spillage),
        col(lambda r: r.regulation_events),
        col(lambda r: r.unserved),
    )


def with_mode(sc: R.ScenarioSpec, mode) -> R.ScenarioSpec:
    return replace(sc, mode=R.Mode(mode))
