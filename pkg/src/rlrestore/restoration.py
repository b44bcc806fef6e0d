"""Restoration window MILPs.

One window covers periods ``k+1..K``.  Loads are binary restore decisions,
diesel units and storage are dispatched, and the renewable adequacy
requirements enter as linear rows whose right-hand sides are mixture
quantiles (or point forecasts for the deterministic baselines).
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gmm as G
from . import uncertainty as U
from .milp import INF, MilpModel, MilpSolution, Sense, Status, VarKind, Variable, solve, solve_relaxation

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


class Mode(enum.Enum):
    STANDALONE = "standalone"
    NETWORKED = "networked"


class Metric(enum.Enum):
    SERVICE_TIME = "service-time"
    WEIGHTED_POWER = "weighted-power"


class Formulation(enum.Enum):
    DED = "ded"
    OCDD = "ocdd"
    PERSISTENCE = "persistence"
    EXPECTATION = "expectation"


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    p_min: float
    p_max: float
    en_0: float
    r_up: float
    r_dn: float
    p_prev: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ScenarioError(f"{self.name}: need 0 <= p_min <= p_max")
        if self.en_0 < 0 or self.r_up < 0 or self.r_dn < 0:
            raise ScenarioError(f"{self.name}: energy and ramp magnitudes must be nonnegative")


@dataclass(frozen=True)
class EssSpec:
    name: str
    capacity: float
    soc_min: float
    soc_max: float
    soc_now: float
    p_ch_max: float
    p_dch_max: float
    eff_ch: float = 0.95
    eff_dch: float = 0.95
    # last committed net output (discharge positive), used by the ramp-increment form
    p_prev: float = 0.0

    def __post_init__(self):
        if not 0 <= self.soc_min <= self.soc_now <= self.soc_max <= 1:
            raise ScenarioError(f"{self.name}: need 0 <= soc_min <= soc_now <= soc_max <= 1")
        if self.capacity <= 0 or self.p_ch_max < 0 or self.p_dch_max < 0:
            raise ScenarioError(f"{self.name}: capacity must be positive, powers nonnegative")
        if not (0 < self.eff_ch <= 1 and 0 < self.eff_dch <= 1):
            raise ScenarioError(f"{self.name}: efficiencies must lie in (0, 1]")


@dataclass(frozen=True)
class LoadSpec:
    name: str
    weight: float
    demand: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "demand", tuple(float(v) for v in self.demand))
        if self.weight <= 0:
            raise ScenarioError(f"{self.name}: priority weight must be positive")
        if any(v < 0 for v in self.demand):
            raise ScenarioError(f"{self.name}: demand must be nonnegative")


@dataclass(frozen=True)
class RenewableSpec:
    name: str
    kind: str  # "wind" | "solar"
    capacity: float

    def __post_init__(self):
        if self.kind not in ("wind", "solar"):
            raise ScenarioError(f"{self.name}: kind must be 'wind' or 'solar'")
        if self.capacity <= 0:
            raise ScenarioError(f"{self.name}: capacity must be positive")


@dataclass(frozen=True)
class MicrogridSpec:
    name: str
    generators: tuple[GeneratorSpec, ...]
    esses: tuple[EssSpec, ...]
    loads: tuple[LoadSpec, ...]
    renewables: tuple[int, ...]

    def __post_init__(self):
        for f in ("generators", "esses", "loads", "renewables"):
            object.__setattr__(self, f, tuple(getattr(self, f)))
        if not self.loads:
            raise ScenarioError(f"{self.name}: at least one load required")


@dataclass(frozen=True)
class ScenarioSpec:
    microgrids: tuple[MicrogridSpec, ...]
    assets: tuple[RenewableSpec, ...]
    periods: int
    tau: float = 1.0
    alpha: float = 0.9
    mode: Mode = Mode.NETWORKED
    metric: Metric = Metric.SERVICE_TIME
    formulation: Formulation = Formulation.DED
    monotone_restoration: bool = False

    def __post_init__(self):
        object.__setattr__(self, "microgrids", tuple(self.microgrids))
        object.__setattr__(self, "assets", tuple(self.assets))
        for f, cls in (("mode", Mode), ("metric", Metric), ("formulation", Formulation)):
            object.__setattr__(self, f, cls(getattr(self, f)))
        if self.periods < 1:
            raise ScenarioError("periods must be >= 1")
        if not self.tau > 0:
            raise ScenarioError("tau must be positive")
        if not 0.5 < self.alpha < 1:
            raise ScenarioError(f"alpha={self.alpha} outside (0.5, 1)")
        kinds = [a.kind for a in self.assets]
        if kinds != sorted(kinds, key=lambda k: k != "wind"):
            raise ScenarioError("wind assets must precede solar assets")
        for mg in self.microgrids:
            for rid in mg.renewables:
                if not 0 <= rid < len(self.assets):
                    raise ScenarioError(f"{mg.name}: renewable id {rid} not in asset list")
            for load in mg.loads:
                if len(load.demand) != self.periods:
                    raise ScenarioError(
                        f"{load.name}: demand has {len(load.demand)} entries, expected {self.periods}"
                    )

    @property
    def layout(self) -> U.FleetLayout:
        wind = sum(a.kind == "wind" for a in self.assets)
        return U.FleetLayout(wind, len(self.assets) - wind, self.periods)

    @property
    def generators(self) -> list[GeneratorSpec]:
        return [g for mg in self.microgrids for g in mg.generators]

    @property
    def esses(self) -> list[EssSpec]:
        return [e for mg in self.microgrids for e in mg.esses]

    @property
    def loads(self) -> list[LoadSpec]:
        return [ld for mg in self.microgrids for ld in mg.loads]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([a.capacity for a in self.assets])

    def demand_matrix(self) -> np.ndarray:
        """(K, L) demand in MW."""
        return np.array([ld.demand for ld in self.loads]).T

    def weights(self) -> np.ndarray:
        return np.array([ld.weight for ld in self.loads])

    def groups(self) -> list[Group]:
        """Index sets sharing one adequacy constraint set."""
        out, li, gi, ei = [], 0, 0, 0
        for mg in self.microgrids:
            nl, ng, ne = len(mg.loads), len(mg.generators), len(mg.esses)
            out.append(Group(mg.name, range(li, li + nl), range(gi, gi + ng),
                             range(ei, ei + ne), tuple(mg.renewables)))
            li, gi, ei = li + nl, gi + ng, ei + ne
        if self.mode is Mode.NETWORKED:
            assets = tuple(sorted({a for g in out for a in g.assets}))
            return [Group("network", range(li), range(gi), range(ei), assets)]
        return out

    def sub_scenario(self, index: int) -> ScenarioSpec:
        """A single-microgrid scenario sharing the full asset list."""
        return replace(self, microgrids=(self.microgrids[index],))


@dataclass(frozen=True)
class Group:
    name: str
    loads: range
    gens: range
    esses: range
    assets: tuple[int, ...]


@dataclass(frozen=True)
class OperatingState:
    """Rolled-forward quantities at the start of period ``k+1``."""

    k: int
    energy: tuple[float, ...]  # EN_g(k+1), MWh
    soc: tuple[float, ...]
    gen_prev: tuple[float, ...]
    ess_prev: tuple[float, ...]

    @classmethod
    def initial(cls, sc: ScenarioSpec) -> OperatingState:
        return cls(
            0,
            tuple(g.en_0 for g in sc.generators),
            tuple(e.soc_now for e in sc.esses),
            tuple(g.p_prev for g in sc.generators),
            tuple(e.p_prev for e in sc.esses),
        )


# ---------------------------------------------------------------------------
# right-hand sides


@dataclass(frozen=True)
class AdequacyRhs:
    power: tuple[float, ...]  # per period of the window
    energy: float


def adequacy_rhs(sc: ScenarioSpec, us: U.UncertaintyState, group: Group) -> AdequacyRhs:
    k, K = us.current_k, sc.periods
    n_t = K - k
    if not group.assets:
        return AdequacyRhs((0.0,) * n_t, 0.0)
    p = 1.0 - sc.alpha
    hz = us.horizon
    f = sc.formulation
    if f in (Formulation.DED, Formulation.OCDD):
        power = tuple(G.quantile1(hz.period_sum(t, group.assets), p) for t in range(k + 1, K + 1))
        energy = G.quantile1(hz.horizon_sum(K, group.assets), p)
    elif f is Formulation.EXPECTATION:
        power = tuple(float(G.mean(hz.period_sum(t, group.assets))[0]) for t in range(k + 1, K + 1))
        energy = float(G.mean(hz.horizon_sum(K, group.assets))[0])
    else:
        if us.observations:
            fc = np.array(us.observations[-1][1])
        else:
            # nothing measured yet: fall back to the expected first-period output
            fc = G.mean(hz.per_period[k + 1])
        level = float(fc[list(group.assets)].sum())
        power = (level,) * n_t
        energy = level * n_t
    return AdequacyRhs(power, energy)


# ---------------------------------------------------------------------------
# window model


@dataclass
class RestorationWindow:
    model: MilpModel
    scenario: ScenarioSpec
    state: OperatingState
    periods: list[int]
    u: np.ndarray  # (n_t, L) variable ids
    gen: np.ndarray  # (n_t, G): output ids (DED) or increment ids (OCDD)
    dch: np.ndarray  # (n_t, E)
    ch: np.ndarray
    chi: np.ndarray
    gamma: np.ndarray
    soc: np.ndarray | None  # (n_t+1, E) ids, DED only
    rhs: dict[str, AdequacyRhs] = field(default_factory=dict)
    fallback_ok: bool = True

    @property
    def ocdd(self) -> bool:
        return self.scenario.formulation is Formulation.OCDD


def _objective(sc: ScenarioSpec, k: int, u: np.ndarray) -> dict[int, float]:
    w = sc.weights()
    dem = sc.demand_matrix()
    obj = {}
    for i, t in enumerate(range(k + 1, sc.periods + 1)):
        for l in range(len(w)):
            c = w[l] * sc.tau
            if sc.metric is Metric.WEIGHTED_POWER:
                c *= dem[t - 1, l]
            obj[int(u[i, l])] = c
    return obj


def build_window(sc: ScenarioSpec, us: U.UncertaintyState, state: OperatingState | None = None) -> RestorationWindow:
    """Assemble the restoration MILP for periods ``us.current_k+1..K``."""
    state = state or OperatingState.initial(sc)
    k, K = us.current_k, sc.periods
    if state.k != k:
        raise ScenarioError(f"operating state is at period {state.k}, uncertainty at {k}")
    if us.layout != sc.layout:
        raise ScenarioError("uncertainty layout does not match the scenario assets/horizon")
    if k >= K:
        raise ScenarioError("empty horizon")
    if sc.formulation is Formulation.OCDD:
        return _build_ocdd(sc, us, state)
    return _build_ded(sc, us, state)


def _ess_vars(m: MilpModel, ess: list[EssSpec], n_t: int, periods, ocdd: bool):
    E = len(ess)
    dch = np.zeros((n_t, E), dtype=int)
    ch = np.zeros((n_t, E), dtype=int)
    chi = np.zeros((n_t, E), dtype=int)
    gam = np.zeros((n_t, E), dtype=int)
    for i, t in enumerate(periods):
        for e, spec in enumerate(ess):
            if ocdd:
                dch[i, e] = m.add_var(-INF, INF, name=f"rdch_{t}_{e}")
                ch[i, e] = m.add_var(-INF, INF, name=f"rch_{t}_{e}")
            else:
                dch[i, e] = m.add_var(0.0, spec.p_dch_max, name=f"dch_{t}_{e}")
                ch[i, e] = m.add_var(-spec.p_ch_max, 0.0, name=f"ch_{t}_{e}")
            chi[i, e] = m.add_var(0, 1, VarKind.BINARY, name=f"chi_{t}_{e}")
            gam[i, e] = m.add_var(0, 1, VarKind.BINARY, name=f"gam_{t}_{e}")
    return dch, ch, chi, gam


def _loads(m: MilpModel, sc: ScenarioSpec, periods):
    L = len(sc.loads)
    u = np.zeros((len(periods), L), dtype=int)
    for i, t in enumerate(periods):
        for l in range(L):
            u[i, l] = m.add_var(0, 1, VarKind.BINARY, name=f"u_{t}_{l}")
    if sc.monotone_restoration:
        for i in range(1, len(periods)):
            for l in range(L):
                m.add_constraint({int(u[i, l]): 1, int(u[i - 1, l]): -1}, Sense.GE, 0.0,
                                 name=f"mono_{periods[i]}_{l}")
    return u


def _add_adequacy(m, sc, us, state, periods, u, gen_expr, ess_net_expr, rhs_store):
    """Power rows per period and one energy row per group.

    ``gen_expr(i, g)`` / ``ess_net_expr(i, e)`` return (coef dict, constant).
    """
    dem = sc.demand_matrix()
    ok = True
    for grp in sc.groups():
        rhs = adequacy_rhs(sc, us, grp)
        rhs_store[grp.name] = rhs
        for i, t in enumerate(periods):
            coefs: dict[int, float] = {}
            const = 0.0
            for l in grp.loads:
                coefs[int(u[i, l])] = coefs.get(int(u[i, l]), 0.0) + dem[t - 1, l]
            for g in grp.gens:
                c, k0 = gen_expr(i, g)
                const -= k0
                for j, a in c.items():
                    coefs[j] = coefs.get(j, 0.0) - a
            for e in grp.esses:
                c, k0 = ess_net_expr(i, e)
                const -= k0
                for j, a in c.items():
                    coefs[j] = coefs.get(j, 0.0) - a
            m.add_constraint(coefs, Sense.LE, rhs.power[i] - const, name=f"power_{grp.name}_{t}")
            avail = sum(sc.generators[g].p_max for g in grp.gens) + sum(
                sc.esses[e].p_dch_max for e in grp.esses)
            ok &= -avail <= rhs.power[i] + 1e-9
        coefs = {}
        for i, t in enumerate(periods):
            for l in grp.loads:
                coefs[int(u[i, l])] = dem[t - 1, l]
        fuel = sum(state.energy[g] for g in grp.gens) / sc.tau
        m.add_constraint(coefs, Sense.LE, rhs.energy + fuel, name=f"energy_{grp.name}")
        ok &= -fuel <= rhs.energy + 1e-9
    return ok


def _build_ded(sc, us, state) -> RestorationWindow:
    k, K, tau = us.current_k, sc.periods, sc.tau
    periods = list(range(k + 1, K + 1))
    n_t = len(periods)
    gens, ess = sc.generators, sc.esses
    m = MilpModel(maximize=True)
    u = _loads(m, sc, periods)
    P = np.zeros((n_t, len(gens)), dtype=int)
    for i, t in enumerate(periods):
        for g, spec in enumerate(gens):
            P[i, g] = m.add_var(spec.p_min, spec.p_max, name=f"p_{t}_{g}")
    dch, ch, chi, gam = _ess_vars(m, ess, n_t, periods, ocdd=False)
    soc = np.zeros((n_t + 1, len(ess)), dtype=int)
    for e, spec in enumerate(ess):
        soc[0, e] = m.add_var(state.soc[e], state.soc[e], name=f"soc_{k + 1}_{e}")
        for i in range(1, n_t + 1):
            soc[i, e] = m.add_var(spec.soc_min, spec.soc_max, name=f"soc_{k + 1 + i}_{e}")

    for g, spec in enumerate(gens):
        m.add_constraint({int(P[i, g]): tau for i in range(n_t)}, Sense.LE, state.energy[g],
                         name=f"fuel_{g}")
        for i in range(1, n_t):
            d = {int(P[i, g]): 1.0, int(P[i - 1, g]): -1.0}
            m.add_constraint(d, Sense.LE, spec.r_up, name=f"rup_{periods[i]}_{g}")
            m.add_constraint(d, Sense.GE, -spec.r_dn, name=f"rdn_{periods[i]}_{g}")
    for e, spec in enumerate(ess):
        for i, t in enumerate(periods):
            m.add_constraint({int(chi[i, e]): 1, int(gam[i, e]): 1}, Sense.LE, 1.0, name=f"mode_{t}_{e}")
            m.add_constraint({int(dch[i, e]): 1, int(chi[i, e]): -spec.p_dch_max}, Sense.LE, 0.0,
                             name=f"dchmax_{t}_{e}")
            m.add_constraint({int(ch[i, e]): 1, int(gam[i, e]): spec.p_ch_max}, Sense.GE, 0.0,
                             name=f"chmax_{t}_{e}")
            m.add_constraint(
                {
                    int(soc[i + 1, e]): 1.0,
                    int(soc[i, e]): -1.0,
                    int(dch[i, e]): tau / (spec.eff_dch * spec.capacity),
                    int(ch[i, e]): tau * spec.eff_ch / spec.capacity,
                },
                Sense.EQ, 0.0, name=f"soc_{t}_{e}",
            )

    rhs: dict[str, AdequacyRhs] = {}
    ok = _add_adequacy(
        m, sc, us, state, periods, u,
        lambda i, g: ({int(P[i, g]): 1.0}, 0.0),
        lambda i, e: ({int(dch[i, e]): 1.0, int(ch[i, e]): 1.0}, 0.0),
        rhs,
    )
    m.set_objective(_objective(sc, k, u), maximize=True)
    w = RestorationWindow(m, sc, state, periods, u, P, dch, ch, chi, gam, soc, rhs, ok)
    if not ok:
        log.warning("window k=%d: the all-off fallback plan violates an adequacy row", k)
    return w


def _build_ocdd(sc, us, state) -> RestorationWindow:
    k, K, tau = us.current_k, sc.periods, sc.tau
    periods = list(range(k + 1, K + 1))
    n_t = len(periods)
    gens, ess = sc.generators, sc.esses
    m = MilpModel(maximize=True)
    u = _loads(m, sc, periods)
    R = np.zeros((n_t, len(gens)), dtype=int)
    for i, t in enumerate(periods):
        for g, spec in enumerate(gens):
            R[i, g] = m.add_var(-spec.r_dn, spec.r_up, name=f"r_{t}_{g}")
    dch, ch, chi, gam = _ess_vars(m, ess, n_t, periods, ocdd=True)
    p0 = state.gen_prev
    d0 = [max(v, 0.0) for v in state.ess_prev]
    c0 = [min(v, 0.0) for v in state.ess_prev]

    def cum(ids, i):
        return {int(ids[s]): 1.0 for s in range(i + 1)}

    for g, spec in enumerate(gens):
        for i, t in enumerate(periods):
            m.add_constraint(cum(R[:, g], i), Sense.LE, spec.p_max - p0[g], name=f"pmax_{t}_{g}")
            m.add_constraint(cum(R[:, g], i), Sense.GE, spec.p_min - p0[g], name=f"pmin_{t}_{g}")
        fuel = {int(R[s, g]): tau * (n_t - s) for s in range(n_t)}
        m.add_constraint(fuel, Sense.LE, state.energy[g] - n_t * p0[g] * tau, name=f"fuel_{g}")
    for e, spec in enumerate(ess):
        drain = {}
        const = 0.0
        for i, t in enumerate(periods):
            m.add_constraint({int(chi[i, e]): 1, int(gam[i, e]): 1}, Sense.LE, 1.0, name=f"mode_{t}_{e}")
            dsum, csum = cum(dch[:, e], i), cum(ch[:, e], i)
            m.add_constraint(dsum, Sense.GE, -d0[e], name=f"dchpos_{t}_{e}")
            m.add_constraint({**dsum, int(chi[i, e]): -spec.p_dch_max}, Sense.LE, -d0[e],
                             name=f"dchmax_{t}_{e}")
            m.add_constraint(csum, Sense.LE, -c0[e], name=f"chneg_{t}_{e}")
            m.add_constraint({**csum, int(gam[i, e]): spec.p_ch_max}, Sense.GE, -c0[e],
                             name=f"chmax_{t}_{e}")
            # SOC at the start of period t+1 after this period's exchange
            a_d = tau / (spec.eff_dch * spec.capacity)
            a_c = tau * spec.eff_ch / spec.capacity
            for j in dsum:
                drain[j] = drain.get(j, 0.0) + a_d
            for j in csum:
                drain[j] = drain.get(j, 0.0) + a_c
            const += a_d * d0[e] + a_c * c0[e]
            level = state.soc[e] - const
            m.add_constraint(dict(drain), Sense.LE, level - spec.soc_min, name=f"socmin_{t + 1}_{e}")
            m.add_constraint(dict(drain), Sense.GE, level - spec.soc_max, name=f"socmax_{t + 1}_{e}")

    rhs: dict[str, AdequacyRhs] = {}
    ok = _add_adequacy(
        m, sc, us, state, periods, u,
        lambda i, g: (cum(R[:, g], i), p0[g]),
        lambda i, e: ({**cum(dch[:, e], i), **cum(ch[:, e], i)}, d0[e] + c0[e]),
        rhs,
    )
    m.set_objective(_objective(sc, k, u), maximize=True)
    return RestorationWindow(m, sc, state, periods, u, R, dch, ch, chi, gam, None, rhs, ok)


def build_window_ocdd(sc, us, state=None) -> RestorationWindow:
    return build_window(replace(sc, formulation=Formulation.OCDD), us, state)


# ---------------------------------------------------------------------------
# solving and decoding


@dataclass
class PlanWindow:
    periods: list[int]
    restored: np.ndarray  # (n_t, L) in {0, 1}
    gen_power: np.ndarray  # (n_t, G) MW
    ess_discharge: np.ndarray  # (n_t, E) MW >= 0
    ess_charge: np.ndarray  # (n_t, E) MW <= 0
    chi: np.ndarray
    gamma: np.ndarray
    soc: np.ndarray  # (n_t+1, E), SOC at the start of each period plus the end state

    def objective(self, sc: ScenarioSpec) -> float:
        dem = sc.demand_matrix()[[t - 1 for t in self.periods]]
        c = sc.weights()[None, :] * sc.tau
        if sc.metric is Metric.WEIGHTED_POWER:
            c = c * dem
        return float((c * self.restored).sum())

    def first(self) -> dict:
        return {
            "period": self.periods[0],
            "restored": self.restored[0].copy(),
            "gen_power": self.gen_power[0].copy(),
            "ess_discharge": self.ess_discharge[0].copy(),
            "ess_charge": self.ess_charge[0].copy(),
        }


class PlanError(RuntimeError):
    pass


def extract_plan(w: RestorationWindow, sol: MilpSolution) -> PlanWindow:
    if not sol.ok:
        raise PlanError(f"cannot decode a {sol.status.value} solution")
    x = np.asarray(sol.values, dtype=float)
    sc, st = w.scenario, w.state
    n_t = len(w.periods)
    restored = np.round(x[w.u]).astype(int)
    chi = np.round(x[w.chi]).astype(int)
    gam = np.round(x[w.gamma]).astype(int)
    if w.ocdd:
        gen = np.asarray(st.gen_prev)[None, :] + np.cumsum(x[w.gen], axis=0)
        d0 = np.array([max(v, 0.0) for v in st.ess_prev])
        c0 = np.array([min(v, 0.0) for v in st.ess_prev])
        dch = d0[None, :] + np.cumsum(x[w.dch], axis=0)
        ch = c0[None, :] + np.cumsum(x[w.ch], axis=0)
    else:
        gen, dch, ch = x[w.gen], x[w.dch], x[w.ch]
    gen = gen.reshape(n_t, -1)
    dch = np.maximum(dch.reshape(n_t, -1), 0.0)
    ch = np.minimum(ch.reshape(n_t, -1), 0.0)
    soc = np.zeros((n_t + 1, len(sc.esses)))
    soc[0] = st.soc
    for e, spec in enumerate(sc.esses):
        for i in range(n_t):
            soc[i + 1, e] = soc_step(soc[i, e], dch[i, e], ch[i, e], spec, sc.tau)
    return PlanWindow(list(w.periods), restored, gen, dch, ch, chi, gam, soc)


def soc_step(soc: float, dch: float, ch: float, spec: EssSpec, tau: float) -> float:
    return soc - tau * (dch / spec.eff_dch + ch * spec.eff_ch) / spec.capacity


def min_generation_dispatch(w: RestorationWindow, sol: MilpSolution, backend: str = "native") -> MilpSolution:
    """Among plans with the same binaries, pick the one burning the least fuel.

    Keeps the restoration decisions of ``sol`` and re-solves the continuous
    dispatch minimizing total scheduled diesel energy over the window.
    """
    m = w.model
    fixed = MilpModel(maximize=False)
    fixed.variables = list(m.variables)
    fixed.constraints = m.constraints
    x = np.asarray(sol.values)
    for j in m.binaries:
        v = float(round(x[j]))
        fixed.variables[j] = Variable(v, v, VarKind.BINARY, m.variables[j].name)
    n_t = len(w.periods)
    if w.ocdd:
        # total output = sum_t (P0 + sum_{i<=t} r_i): increment i weighs (n_t - i)
        obj = {int(w.gen[i, g]): float(n_t - i) for i in range(n_t) for g in range(w.gen.shape[1])}
    else:
        obj = {int(j): 1.0 for j in w.gen.ravel()}
    fixed.set_objective(obj, maximize=False)
    res = solve_relaxation(fixed, backend)
    if res.status is not Status.OPTIMAL:
        return sol
    res.objective = m.evaluate(res.values)
    res.gap, res.bound, res.node_count = sol.gap, sol.bound, sol.node_count
    return res


def solve_window(w: RestorationWindow, abs_gap: float = 1e-6, node_limit: int = 200_000,
                 min_generation: bool = True, backend: str = "native") -> tuple[MilpSolution, PlanWindow | None]:
    sol = solve(w.model, backend, abs_gap=abs_gap, node_limit=node_limit)
    if not sol.ok:
        return sol, None
    if min_generation:
        sol = min_generation_dispatch(w, sol, backend)
    return sol, extract_plan(w, sol)


# ---------------------------------------------------------------------------
# bookkeeping


def roll_energy(energy, outputs, tau: float) -> tuple[float, ...]:
    """EN_g after one more period at the given outputs, clamped at zero."""
    out = []
    for en, p in zip(energy, outputs):
        left = en - p * tau
        if left < -1e-9:
            log.warning("generation resource overdrawn by %.3g MWh; clamping at zero", -left)
        out.append(max(left, 0.0))
    return tuple(out)


def roll_energy_history(en_0, history, tau: float) -> np.ndarray:
    """EN_g(k+1) after committing the outputs in ``history`` (k x G)."""
    en = tuple(en_0)
    for row in np.atleast_2d(history):
        en = roll_energy(en, row, tau)
    return np.array(en)


def resilience(served, weights, tau: float, metric: Metric | str = Metric.SERVICE_TIME,
               demand=None) -> float:
    """Priority-weighted service time (or weighted energy) of served loads.

    ``served`` is (periods, L) of 0/1; ``demand`` (periods, L) MW is needed
    for the weighted-power metric.
    """
    served = np.atleast_2d(np.asarray(served, dtype=float))
    w = np.asarray(weights, dtype=float)
    metric = Metric(metric)
    if metric is Metric.WEIGHTED_POWER:
        if demand is None:
            raise ValueError("weighted-power metric needs the demand matrix")
        return float((served * w[None, :] * np.atleast_2d(demand)).sum() * tau)
    return float((served * w[None, :]).sum() * tau)


# ---------------------------------------------------------------------------
# scenario files and the bundled test system


def _enum_value(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _enum_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_enum_value(v) for v in obj]
    return obj


def scenario_to_dict(sc: ScenarioSpec) -> dict:
    return _enum_value(asdict(sc))


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    try:
        mgs = [
            MicrogridSpec(
                mg["name"],
                tuple(GeneratorSpec(**g) for g in mg.get("generators", [])),
                tuple(EssSpec(**e) for e in mg.get("esses", [])),
                tuple(LoadSpec(**ld) for ld in mg["loads"]),
                tuple(mg.get("renewables", [])),
            )
            for mg in doc["microgrids"]
        ]
        assets = tuple(RenewableSpec(**a) for a in doc.get("assets", []))
        extra = {k: doc[k] for k in ("tau", "alpha", "mode", "metric", "formulation",
                                      "monotone_restoration") if k in doc}
        unknown = set(doc) - {"microgrids", "assets", "periods", *extra}
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        return ScenarioSpec(mgs, assets, int(doc["periods"]), **extra)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def save_scenario(sc: ScenarioSpec, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1))


def load_scenario(path) -> ScenarioSpec:
    return scenario_from_dict(json.loads(Path(path).read_text()))


# MG name, diesel (MW, MWh), ESS (MW, MWh, SOC), renewable (name, kind, MW), load total MW, load count
REFERENCE_SYSTEM = (
    ("MG1", (2.0, 5.0), (0.5, 2.0, 0.70), ("WT1", "wind", 2.0), 6.48, 32),
    ("MG2", (3.0, 8.0), (1.5, 3.0, 0.60), ("WT2", "wind", 2.0), 8.79, 30),
    ("MG3", (2.5, 10.0), (1.0, 4.0, 0.70), ("PV3", "solar", 2.0), 6.54, 34),
)


def synthetic_loads(prefix: str, total: float, count: int, periods: int, seed: int) -> list[LoadSpec]:
    """Placeholder critical-load list: sizes sum to ``total`` MW, integer priorities.

    Roughly one load in six is critical (weight 10), the rest are graded 1-5.
    """
    rng = np.random.default_rng(seed)
    sizes = rng.dirichlet(np.full(count, 4.0)) * total
    sizes = np.round(sizes, 4)
    sizes[-1] = round(total - sizes[:-1].sum(), 4)
    weights = rng.integers(1, 6, size=count)
    weights[rng.permutation(count)[: max(1, count // 6)]] = 10
    return [
        LoadSpec(f"{prefix}-L{i + 1}", float(weights[i]), (float(sizes[i]),) * periods)
        for i in range(count)
    ]


def reference_scenario(periods: int = 10, loads_per_mg: int | None = None, seed: int = 7,
                    ramp: float = 1.0, **overrides) -> ScenarioSpec:
    """Three-microgrid test system with the published diesel/ESS/renewable ratings.

    Load lists are synthetic; they sum to the published per-microgrid totals.
    ``loads_per_mg`` overrides the published load counts.
    """
    mgs, assets = [], []
    for i, (name, (pd, en), (pe, ec, soc), (rn, kind, cap), total, count) in enumerate(REFERENCE_SYSTEM):
        gen = GeneratorSpec(f"Diesel{i + 1}", 0.0, pd, en, ramp, ramp)
        ess = EssSpec(f"ESS{i + 1}", ec, 0.1, 0.95, soc, pe, pe, 0.95, 0.95)
        n = loads_per_mg or count
        loads = synthetic_loads(name, total, n, periods, seed + i)
        assets.append(RenewableSpec(rn, kind, cap))
        mgs.append(MicrogridSpec(name, (gen,), (ess,), tuple(loads), (i,)))
    return ScenarioSpec(tuple(mgs), tuple(assets), periods, **overrides)
