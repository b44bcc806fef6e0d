"""Files in and out: trace CSVs, JSON reports and summary tables.

Every writer goes through ``atomic_write`` (temp file in the target
directory, then rename), so a crashed run never leaves half a file behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import restoration as R
from .simulation import ComparisonTable, PeriodRecord, SimulationReport, TraceSet

TRACE_HEADER = ["day", "period", "asset", "power_mw"]


class DataError(ValueError):
    pass


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"writing {path}: {exc}") from exc
    return path


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# traces


def traces_to_csv(traces: list[TraceSet]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for d, tr in enumerate(traces):
        for t in range(tr.periods):
            for v in range(tr.n_assets):
                w.writerow([d, t + 1, v, repr(float(tr.values[t, v]))])
    return buf.getvalue()


def write_traces_csv(traces: list[TraceSet], path) -> Path:
    return atomic_write(path, traces_to_csv(traces))


def read_traces_csv(path) -> list[TraceSet]:
    """Parse a trace file into one complete periods x assets matrix per day."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != TRACE_HEADER:
        raise DataError(f"{path}: header must be {','.join(TRACE_HEADER)}")
    cells: dict[tuple[int, int, int], float] = {}
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError(f"{path}:{n}: expected 4 fields, got {len(row)}")
        try:
            key = (int(row[0]), int(row[1]), int(row[2]))
            val = float(row[3])
        except ValueError as exc:
            raise DataError(f"{path}:{n}: {exc}") from exc
        if key in cells:
            raise DataError(f"{path}:{n}: duplicate row day={key[0]} period={key[1]} asset={key[2]}")
        if not np.isfinite(val) or val < 0:
            raise DataError(f"{path}:{n}: power must be finite and nonnegative, got {val}")
        if key[1] < 1 or key[2] < 0:
            raise DataError(f"{path}:{n}: periods are 1-based and assets 0-based")
        cells[key] = val
    if not cells:
        raise DataError(f"{path}: no data rows")
    days = sorted({k[0] for k in cells})
    K = max(k[1] for k in cells)
    n = max(k[2] for k in cells) + 1
    out = []
    for d in days:
        m = np.full((K, n), np.nan)
        for (dd, t, v), val in cells.items():
            if dd == d:
                m[t - 1, v] = val
        if np.isnan(m).any():
            t, v = np.argwhere(np.isnan(m))[0]
            raise DataError(f"{path}: day {d} missing period={t + 1} asset={v}")
        out.append(TraceSet(m, f"file:{path.name}:day={d}"))
    return out


# ---------------------------------------------------------------------------
# reports


def _arr(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _int_arr(a):
    return [int(v) for v in np.asarray(a).ravel()]


def record_to_dict(r: PeriodRecord) -> dict:
    return {
        "period": r.period,
        "status": r.status,
        "restored": _int_arr(r.restored),
        "served": _int_arr(r.served),
        "gen_power": _arr(r.gen_power),
        "ess_discharge": _arr(r.ess_discharge),
        "ess_charge": _arr(r.ess_charge),
        "soc_after": _arr(r.soc_after),
        "renewables": _arr(r.renewables),
        "regulation": _arr(r.regulation),
        "spillage": float(r.spillage),
        "unserved": float(r.unserved),
        "shortfall": bool(r.shortfall),
        "objective": float(r.objective),
    }


def record_from_dict(d: dict) -> PeriodRecord:
    return PeriodRecord(
        int(d["period"]), d["status"],
        np.array(d["restored"], dtype=int), np.array(d["served"], dtype=int),
        np.array(d["gen_power"]), np.array(d["ess_discharge"]), np.array(d["ess_charge"]),
        np.array(d["soc_after"]), np.array(d["renewables"]), np.array(d["regulation"]),
        float(d["spillage"]), float(d["unserved"]), bool(d["shortfall"]),
        float(d.get("objective", float("nan"))),
    )


def report_to_dict(rep: SimulationReport) -> dict:
    return {
        "label": rep.label,
        "trace_source": rep.trace_source,
        "scenario": R.scenario_to_dict(rep.scenario),
        "records": [record_to_dict(r) for r in rep.records],
        "final_energy": _arr(rep.final_energy if rep.final_energy is not None else []),
        "final_soc": _arr(rep.final_soc if rep.final_soc is not None else []),
        "totals": {
            "resilience_service_time": rep.service_time,
            "resilience_weighted_power": rep.weighted_energy,
            "spillage_mwh": rep.spillage,
            "regulation_events": rep.regulation_events,
            "unserved_mwh": rep.unserved,
        },
    }


def report_from_dict(doc: dict) -> SimulationReport:
    try:
        return SimulationReport(
            doc["label"],
            R.scenario_from_dict(doc["scenario"]),
            [record_from_dict(r) for r in doc["records"]],
            np.array(doc["final_energy"]),
            np.array(doc["final_soc"]),
            doc.get("trace_source", ""),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed report: {exc}") from exc


def reports_equal(a: SimulationReport, b: SimulationReport) -> bool:
    return dumps(report_to_dict(a)) == dumps(report_to_dict(b))


def report_csv(rep: SimulationReport) -> str:
    """Flat per-period series for plotting."""
    sc = rep.scenario
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    gens = [g.name for g in sc.generators]
    ess = [e.name for e in sc.esses]
    w.writerow(["period", "status", "restored_loads", "served_mw", "renewables_mw", "spillage_mwh",
                "unserved_mwh", "shortfall"] + [f"{g}_mw" for g in gens] + [f"{g}_reg_mw" for g in gens]
               + [f"{e}_net_mw" for e in ess] + [f"{e}_soc" for e in ess])
    dem = sc.demand_matrix()
    for r in rep.records:
        w.writerow([r.period, r.status, int(r.restored.sum()),
                    repr(float((r.served * dem[r.period - 1]).sum())),
                    repr(float(r.renewables.sum())), repr(r.spillage), repr(r.unserved), int(r.shortfall)]
                   + [repr(float(v)) for v in r.gen_power] + [repr(float(v)) for v in r.regulation]
                   + [repr(float(v)) for v in r.ess_discharge + r.ess_charge]
                   + [repr(float(v)) for v in r.soc_after])
    return buf.getvalue()


def comparison_to_dict(tab: ComparisonTable) -> dict:
    return {
        "labels": list(tab.labels),
        "per_day": {
            lab: {
                "resilience": _arr(tab.resilience[lab]),
                "spillage_mwh": _arr(tab.spillage[lab]),
                "regulation_events": _arr(tab.regulation[lab]),
                "unserved_mwh": _arr(tab.unserved[lab]),
            }
            for lab in tab.labels
        },
        "summary": tab.summary_rows(),
    }


def comparison_from_dict(doc: dict) -> ComparisonTable:
    labels = list(doc["labels"])
    pd = doc["per_day"]

    def col(key):
        return {lab: np.array(pd[lab][key], dtype=float) for lab in labels}

    return ComparisonTable(labels, col("resilience"), col("spillage_mwh"),
                           col("regulation_events"), col("unserved_mwh"))


def summary_text(rows: list[dict]) -> str:
    cols = ["label", "mean_resilience", "mean_spillage_mwh", "mean_regulation_events",
            "mean_unserved_mwh", "mean_delta_vs_first", "win_rate_vs_first"]
    width = [max(len(c), 12) for c in cols]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(cols, width))]
    for row in rows:
        cells = []
        for c, wd in zip(cols, width):
            v = row[c]
            cells.append((v if isinstance(v, str) else f"{v:.4f}").rjust(wd))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def emit_report(obj, out_dir, stem: str = "report") -> list[Path]:
    """Write a report or comparison as JSON, CSV series and a summary table."""
    out = Path(out_dir)
    written = []
    if isinstance(obj, SimulationReport):
        written.append(atomic_write(out / f"{stem}.json", dumps(report_to_dict(obj))))
        written.append(atomic_write(out / f"{stem}.csv", report_csv(obj)))
        tab = ComparisonTable([obj.label], {obj.label: np.array([obj.resilience()])},
                              {obj.label: np.array([obj.spillage])},
                              {obj.label: np.array([float(obj.regulation_events)])},
                              {obj.label: np.array([obj.unserved])})
        written.append(atomic_write(out / f"{stem}.txt", summary_text(tab.summary_rows())))
    elif isinstance(obj, ComparisonTable):
        doc = comparison_to_dict(obj)
        written.append(atomic_write(out / f"{stem}.json", dumps(doc)))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day"] + [f"{lab}_resilience" for lab in obj.labels])
        for d in range(obj.days):
            w.writerow([d] + [repr(float(obj.resilience[lab][d])) for lab in obj.labels])
        written.append(atomic_write(out / f"{stem}.csv", buf.getvalue()))
        written.append(atomic_write(out / f"{stem}.txt", summary_text(doc["summary"])))
    else:
        raise TypeError(f"cannot emit {type(obj).__name__}")
    return written


def save_reports(reports: list[SimulationReport], path) -> Path:
    return atomic_write(path, dumps([report_to_dict(r) for r in reports]))


def load_reports(path) -> list[SimulationReport]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = [doc]
    return [report_from_dict(d) for d in doc]
