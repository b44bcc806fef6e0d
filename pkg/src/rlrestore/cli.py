"""Command line entry point.

Exit codes: 0 success, 2 usage error, 3 data validation error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import gmm as G
from . import io as IO
from . import restoration as R
from . import simulation as S
from . import uncertainty as U
from .milp import BACKENDS

log = logging.getLogger("rlrestore")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
COMMANDS = ("fit", "gen-traces", "solve-window", "simulate", "compare", "make-scenario")
REQUIRED = {
    "fit": ("traces", "out"),
    "gen-traces": ("scenario", "out"),
    "solve-window": ("scenario", "prior"),
    "simulate": ("scenario", "prior", "traces"),
    "compare": ("reports",),
    "make-scenario": ("out",),
}


class UsageError(Exception):
    pass


class SolverFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    scenario: str | None = None
    prior: str | None = None
    traces: str | None = None
    out: str | None = None
    alpha: float | None = None
    components: int = 4
    seed: int = 0
    formulation: str | None = None
    mode: str | None = None
    metric: str | None = None
    no_update: bool = False
    days: int | None = None
    day: int = 0
    k: int = 0
    backend: str = "highs"
    reports: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    truth_components: int = 12
    truth_seed: int | None = None

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        missing = [f for f in REQUIRED[self.command] if not getattr(self, f)]
        if missing:
            raise UsageError(f"{self.command}: missing required {', '.join('--' + m for m in missing)}")
        if self.alpha is not None and not 0.5 < self.alpha < 1:
            raise ValueError(f"alpha: {self.alpha} outside (0.5, 1)")
        if self.components < 1:
            raise ValueError(f"components: must be >= 1, got {self.components}")
        if self.days is not None and self.days < 1:
            raise ValueError(f"days: must be >= 1, got {self.days}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend: {self.backend!r} not in {BACKENDS}")
        for name, cls in (("formulation", R.Formulation), ("mode", R.Mode), ("metric", R.Metric)):
            v = getattr(self, name)
            if v is not None:
                try:
                    cls(v)
                except ValueError:
                    raise ValueError(f"{name}: {v!r} not one of {[e.value for e in cls]}") from None
        if self.labels and len(self.labels) != len(self.reports):
            raise UsageError("compare: --labels must match --reports one to one")
        return self


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rlrestore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of defaults; flags override it")
        sp.add_argument("--scenario", help="scenario JSON, or \"reference\" for the bundled three-microgrid system")
        sp.add_argument("--prior")
        sp.add_argument("--traces")
        sp.add_argument("--out")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--components", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--formulation", choices=[f.value for f in R.Formulation])
        sp.add_argument("--mode", choices=[m.value for m in R.Mode])
        sp.add_argument("--metric", choices=[m.value for m in R.Metric])
        sp.add_argument("--backend", choices=BACKENDS)
        sp.add_argument("--no-update", action="store_true", default=None,
                        help="skip observation updates (prior marginals every window)")
        sp.add_argument("--days", type=int, help="limit/number of trace days")
        return sp

    common(sub.add_parser("fit", help="fit a mixture prior to training traces"))
    sp = common(sub.add_parser("gen-traces", help="sample synthetic trace days"))
    sp.add_argument("--truth-components", type=int, help="regimes in the synthetic ground truth")
    sp.add_argument("--truth-seed", type=int, help="ground-truth seed (defaults to --seed)")
    sp = common(sub.add_parser("solve-window", help="solve one restoration window"))
    sp.add_argument("--day", type=int, help="trace day supplying the observations")
    sp.add_argument("--k", type=int, help="number of observed periods")
    common(sub.add_parser("simulate", help="rolling simulation over trace days"))
    sp = common(sub.add_parser("compare", help="tabulate saved simulation reports"))
    sp.add_argument("--reports", nargs="+")
    sp.add_argument("--labels", nargs="+")
    common(sub.add_parser("make-scenario", help="write the bundled three-microgrid scenario"))
    return p


def parse_config(argv=None) -> RunConfig:
    """Parse flags (plus an optional JSON config file) into a validated RunConfig."""
    ns = build_parser().parse_args(argv)
    values: dict = {}
    if ns.config:
        try:
            doc = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"config {ns.config}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"config {ns.config}: unknown keys {sorted(unknown)}")
        values.update(doc)
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(ns.command, **values).validate()


# ---------------------------------------------------------------------------
# commands


def _scenario(cfg: RunConfig) -> R.ScenarioSpec:
    sc = R.reference_scenario() if cfg.scenario == "reference" else R.load_scenario(cfg.scenario)
    over = {}
    if cfg.alpha is not None:
        over["alpha"] = cfg.alpha
    for name in ("formulation", "mode", "metric"):
        if getattr(cfg, name) is not None:
            over[name] = getattr(cfg, name)
    return replace(sc, **over) if over else sc


def cmd_fit(cfg: RunConfig):
    traces = IO.read_traces_csv(cfg.traces)[: cfg.days]
    data = S.traces_matrix(traces)
    res = G.fit_em(data, cfg.components, G.FitConfig(seed=cfg.seed))
    IO.atomic_write(cfg.out, res.gmm.to_json())
    print(f"fitted M={cfg.components} on {len(data)} days: log-likelihood "
          f"{G.log_likelihood(res.gmm, data):.6f} ({len(res.trace)} iterations, "
          f"converged={res.converged})")


def cmd_gen_traces(cfg: RunConfig):
    sc = _scenario(cfg)
    if cfg.prior:
        truth = G.Gmm.load(cfg.prior)
    else:
        ts = cfg.seed if cfg.truth_seed is None else cfg.truth_seed
        truth = S.synthetic_ground_truth(sc.layout, sc.capacities, cfg.truth_components, ts)
    traces = S.generate_traces(truth, cfg.days or 10, sc.capacities, seed=cfg.seed, layout=sc.layout)
    IO.write_traces_csv(traces, cfg.out)
    print(f"wrote {len(traces)} days to {cfg.out}")


def cmd_solve_window(cfg: RunConfig):
    sc = _scenario(cfg)
    prior = G.Gmm.load(cfg.prior)
    us = U.initial_state(sc.layout, prior)
    state = R.OperatingState.initial(sc)
    if cfg.k:
        if not cfg.traces:
            raise UsageError("solve-window: --k needs --traces")
        tr = IO.read_traces_csv(cfg.traces)[cfg.day]
        tr.check(sc.layout)
        for t in range(1, cfg.k + 1):
            us = U.ingest_observation(us, t, tr.values[t - 1])
        state = replace(state, k=cfg.k)
    w = R.build_window(sc, us, state)
    sol, plan = R.solve_window(w, backend=cfg.backend)
    if plan is None:
        raise SolverFailure(f"window status {sol.status.value}: {sol.message}")
    doc = {
        "status": sol.status.value,
        "objective": sol.objective,
        "periods": plan.periods,
        "restored": plan.restored.tolist(),
        "gen_power": plan.gen_power.tolist(),
        "ess_discharge": plan.ess_discharge.tolist(),
        "ess_charge": plan.ess_charge.tolist(),
        "soc": plan.soc.tolist(),
        "adequacy_rhs": {k: {"power": list(v.power), "energy": v.energy} for k, v in w.rhs.items()},
    }
    if cfg.out:
        IO.atomic_write(cfg.out, IO.dumps(doc))
    print(f"{sol.status.value}: objective {sol.objective:.6f} over periods "
          f"{plan.periods[0]}..{plan.periods[-1]}")


def cmd_simulate(cfg: RunConfig):
    sc = _scenario(cfg)
    prior = G.Gmm.load(cfg.prior)
    traces = IO.read_traces_csv(cfg.traces)[: cfg.days]
    label = f"{sc.mode.value}-{sc.formulation.value}" + ("-noupdate" if cfg.no_update else "")
    reports = []
    for tr in traces:
        tr.check(sc.layout)
        rep = S.run(sc, prior, tr, update=not cfg.no_update, label=label, backend=cfg.backend)
        reports.append(rep)
        print(f"{tr.source}: resilience {rep.resilience():.4f}, spillage {rep.spillage:.4f} MWh, "
              f"regulations {rep.regulation_events}, unserved {rep.unserved:.4f} MWh")
    if cfg.out:
        out = Path(cfg.out)
        IO.save_reports(reports, out / "reports.json")
        for d, rep in enumerate(reports):
            IO.emit_report(rep, out, stem=f"day{d:03d}")
        IO.emit_report(S.compare({label: reports}), out, stem="summary")


def cmd_compare(cfg: RunConfig):
    runs = {}
    for i, path in enumerate(cfg.reports):
        reps = IO.load_reports(path)
        lab = cfg.labels[i] if cfg.labels else (reps[0].label if reps else Path(path).stem)
        if lab in runs:
            lab = f"{lab}#{i}"
        runs[lab] = reps
    tab = S.compare(runs)
    rows = tab.summary_rows()
    print(IO.summary_text(rows), end="")
    if cfg.out:
        IO.emit_report(tab, cfg.out, stem="comparison")


def cmd_make_scenario(cfg: RunConfig):
    sc = R.reference_scenario()
    IO.atomic_write(cfg.out, IO.dumps(R.scenario_to_dict(sc)))
    print(f"wrote {cfg.out}")


HANDLERS = {
    "fit": cmd_fit,
    "gen-traces": cmd_gen_traces,
    "solve-window": cmd_solve_window,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "make-scenario": cmd_make_scenario,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
