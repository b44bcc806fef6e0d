"""Recursive renewable-output uncertainty over the restoration horizon.

The prior is a mixture over ``(W+S)*K`` variables laid out period-major:
asset ``v`` (0-based) in period ``t`` (1-based) sits at ``(t-1)*(W+S) + v``.
Each observed period is folded in by exact conditioning, so the state always
carries the joint distribution of the periods not yet seen.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import gmm as G
from .gmm import Gmm


class UncertaintyError(ValueError):
    pass


@dataclass(frozen=True)
class FleetLayout:
    wind: int
    solar: int
    periods: int

    def __post_init__(self):
        if self.wind < 0 or self.solar < 0 or self.wind + self.solar < 1:
            raise UncertaintyError("need at least one renewable asset")
        if self.periods < 1:
            raise UncertaintyError("need at least one period")

    @property
    def n_assets(self) -> int:
        return self.wind + self.solar

    @property
    def dim(self) -> int:
        return self.n_assets * self.periods

    def index(self, t: int, v: int) -> int:
        if not 1 <= t <= self.periods or not 0 <= v < self.n_assets:
            raise UncertaintyError(f"(period {t}, asset {v}) outside the layout")
        return (t - 1) * self.n_assets + v

    def block(self, t: int) -> list[int]:
        return [self.index(t, v) for v in range(self.n_assets)]

    def flatten(self, matrix) -> np.ndarray:
        """K x (W+S) matrix -> flat vector in layout order."""
        m = np.asarray(matrix, dtype=float)
        if m.shape != (self.periods, self.n_assets):
            raise UncertaintyError(f"expected {(self.periods, self.n_assets)} matrix, got {m.shape}")
        return m.reshape(-1)


class Forecast(enum.Enum):
    PERSISTENCE = "persistence"
    UPDATED_EXPECTATION = "expectation"


@dataclass(frozen=True)
class HorizonDistributions:
    """Per-period mixtures for periods ``first..K`` plus the horizon joint."""

    first: int
    per_period: dict[int, Gmm]
    joint: Gmm
    n_assets: int

    def _row(self, assets) -> np.ndarray:
        row = np.zeros(self.n_assets)
        row[list(range(self.n_assets)) if assets is None else list(assets)] = 1.0
        return row

    def period_sum(self, t: int, assets=None) -> Gmm:
        if t not in self.per_period:
            raise UncertaintyError(f"period {t} not in horizon {self.first}..")
        return G.linear_map(self.per_period[t], self._row(assets)[None, :])

    def horizon_sum(self, last: int | None = None, assets=None) -> Gmm:
        last = max(self.per_period) if last is None else last
        if not self.first <= last <= max(self.per_period):
            raise UncertaintyError(f"horizon end {last} outside {self.first}..{max(self.per_period)}")
        n = last - self.first + 1
        row = np.zeros(self.joint.dim)
        row[: n * self.n_assets] = np.tile(self._row(assets), n)
        return G.linear_map(self.joint, row[None, :])

    @property
    def period_sums(self) -> dict[int, Gmm]:
        return {t: self.period_sum(t) for t in self.per_period}


@dataclass(frozen=True, eq=False)
class UncertaintyState:
    layout: FleetLayout
    prior: Gmm
    observations: tuple[tuple[int, tuple[float, ...]], ...] = ()
    # joint over periods current_k+1..K; None means "the prior"
    _joint: Gmm | None = field(default=None, repr=False)
    _skipped: int = 0

    def __post_init__(self):
        if self.prior.dim != self.layout.dim:
            raise UncertaintyError(
                f"prior dim {self.prior.dim} != layout dim {self.layout.dim}"
            )

    @property
    def current_k(self) -> int:
        """Last period whose outcome has been processed (observed or skipped)."""
        return len(self.observations) + self._skipped

    @property
    def joint(self) -> Gmm:
        return self.prior if self._joint is None else self._joint

    def _block(self, t: int) -> list[int]:
        # positions of period t inside the current joint
        n = self.layout.n_assets
        off = (t - self.current_k - 1) * n
        return list(range(off, off + n))

    @cached_property
    def horizon(self) -> HorizonDistributions:
        return _chain(self)


def initial_state(layout: FleetLayout, prior: Gmm) -> UncertaintyState:
    return UncertaintyState(layout, prior)


def _next_checks(s: UncertaintyState, k: int):
    if k != s.current_k + 1:
        raise UncertaintyError(f"expected period {s.current_k + 1}, got {k}")
    if k >= s.layout.periods:
        raise UncertaintyError(
            f"period {k} leaves no future periods (horizon is {s.layout.periods})"
        )


def ingest_observation(s: UncertaintyState, k: int, obs) -> UncertaintyState:
    """Condition the remaining joint on the realized outputs of period ``k``."""
    _next_checks(s, k)
    if s._skipped:
        raise UncertaintyError("state was advanced without observations; cannot mix modes")
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    if obs.shape != (s.layout.n_assets,):
        raise UncertaintyError(f"observation needs {s.layout.n_assets} values, got {obs.shape}")
    joint = G.condition(s.joint, s._block(k), obs)
    return UncertaintyState(
        s.layout,
        s.prior,
        s.observations + ((k, tuple(float(v) for v in obs)),),
        joint,
    )


def skip_observation(s: UncertaintyState, k: int) -> UncertaintyState:
    """Advance past period ``k`` by marginalizing it out instead of conditioning."""
    _next_checks(s, k)
    if s.observations:
        raise UncertaintyError("state already holds observations; cannot mix modes")
    n = s.layout.n_assets
    rest = list(range(n, s.joint.dim))
    return UncertaintyState(s.layout, s.prior, (), G.marginal(s.joint, rest), s._skipped + 1)


def condition_on_history(s: UncertaintyState) -> Gmm:
    """One-shot conditioning of the prior on every stored observation."""
    if not s.observations:
        return s.prior
    idx, vals = [], []
    for t, obs in s.observations:
        idx += s.layout.block(t)
        vals += list(obs)
    return G.condition(s.prior, idx, vals)


def _chain(s: UncertaintyState) -> HorizonDistributions:
    k, K = s.current_k, s.layout.periods
    n = s.layout.n_assets
    cur = s.joint
    first_block = list(range(n))
    per_period = {k + 1: G.marginal(cur, first_block)}
    for t in range(k + 1, K):
        # replace the unobserved period t by its conditional expectation
        expected = G.mean(per_period[t])
        cur = G.condition(cur, first_block, expected)
        per_period[t + 1] = G.marginal(cur, first_block)
    return HorizonDistributions(k + 1, per_period, s.joint, n)


def _check_future(s: UncertaintyState, t: int):
    if s.current_k >= s.layout.periods:
        raise UncertaintyError("horizon exhausted")
    if not s.current_k + 1 <= t <= s.layout.periods:
        raise UncertaintyError(
            f"period {t} outside the open horizon {s.current_k + 1}..{s.layout.periods}"
        )


def dist_next_period(s: UncertaintyState) -> Gmm:
    _check_future(s, s.current_k + 1)
    return G.marginal(s.joint, s._block(s.current_k + 1))


def dist_future_period(s: UncertaintyState, t: int) -> Gmm:
    _check_future(s, t)
    if t == s.current_k + 1:
        return dist_next_period(s)
    return s.horizon.per_period[t]


def sum_dist_period(s: UncertaintyState, t: int, assets=None) -> Gmm:
    _check_future(s, t)
    return s.horizon.period_sum(t, assets)


def sum_dist_horizon(s: UncertaintyState, last: int, assets=None) -> Gmm:
    _check_future(s, last)
    return s.horizon.horizon_sum(last, assets)


def point_forecast(s: UncertaintyState, t: int, method: Forecast | str) -> np.ndarray:
    method = Forecast(method)
    _check_future(s, t)
    if method is Forecast.PERSISTENCE:
        if not s.observations:
            raise UncertaintyError("persistence forecast needs at least one observation")
        return np.array(s.observations[-1][1])
    return G.mean(dist_future_period(s, t))
