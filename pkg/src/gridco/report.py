"""Plot-ready CSVs and bid-constraint audits from stored run directories."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import config_from_dict
from .harness import prepare, read_metrics, read_summary_csv, summarize
from .market import MAX_DAILY_RATIO, STEP_RATIO_HIGH, STEP_RATIO_LOW

RATIO_TOL = 1e-9


@dataclass
class RunData:
    run_id: str
    path: Path
    header: dict
    episodes: list
    agent_names: list
    line_names: list
    summary: dict


@dataclass
class BidAudit:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def load_run(path, run_id=None):
    path = Path(path)
    metrics = path / "metrics.jsonl"
    if not metrics.is_file():
        raise FileNotFoundError(f"{path}: no metrics.jsonl")
    header, _, episodes = read_metrics(metrics)
    if header is None or not episodes:
        raise ValueError(f"{metrics}: missing header or episode records")
    ctx = prepare(config_from_dict(header["config"]))
    case = ctx.case
    names = [case.generators[i].name for i in case.strategic]
    lines = [case.lines[k].name for k in case.candidates]
    summary = summarize(metrics, ctx=ctx)
    if (path / "summary.csv").is_file():
        # planned-cost and final-design columns live only in the stored summary
        for k, v in read_summary_csv(path / "summary.csv").items():
            summary.setdefault(k, v)
    return RunData(run_id or path.name, path, header, episodes, names, lines, summary)


def audit_bids(run):
    """Check max/min <= 1.5 and consecutive ratios in [0.9, 1.1] for every episode and agent."""
    audit = BidAudit()
    for ep in run.episodes:
        for k, series in enumerate(ep["bids"]):
            b = np.asarray(series, dtype=float)
            audit.checked += 1
            spread = b.max() / b.min()
            ratios = b[1:] / b[:-1]
            if spread > MAX_DAILY_RATIO + RATIO_TOL:
                audit.violations.append((ep["episode"], run.agent_names[k], f"max/min {spread:.6g}"))
            if ratios.size and (ratios.min() < STEP_RATIO_LOW - RATIO_TOL or ratios.max() > STEP_RATIO_HIGH + RATIO_TOL):
                audit.violations.append((ep["episode"], run.agent_names[k], f"step ratio range [{ratios.min():.6g}, {ratios.max():.6g}]"))
    return audit


def breakdown_rows(run):
    """Window-averaged cost components; total = operational + expansion."""
    s = run.summary
    window = run.episodes[-s["window"] :]
    w = s["w_anu"]
    row = {
        "run": run.run_id,
        "operational_cost": s["operational_cost"],
        "expansion_cost": s["expansion_cost"],
        "total_cost": s["total_cost"],
    }
    # logs from before per-episode revenue was recorded leave the column blank
    has_revenue = all("revenue" in e for e in window)
    for k, name in enumerate(run.agent_names):
        row[f"revenue_{name}"] = float(np.mean([w * e["revenue"][k] for e in window])) if has_revenue else ""
        row[f"profit_{name}"] = s[f"profit_{name}"]
    return [row]


def bid_rows(run):
    rows = []
    for e in run.episodes:
        row = {"episode": e["episode"]}
        for k, name in enumerate(run.agent_names):
            b = e["bids"][k]
            row[f"mean_bid_{name}"] = float(np.mean(b))
        rows.append(row)
    return rows


def mu_rows(run):
    rows = []
    for e in run.episodes:
        if e.get("mu") is None:
            continue
        row = {"episode": e["episode"]}
        row.update({f"mu_{n}": v for n, v in zip(run.line_names, e["mu"])})
        row.update({f"design_{n}": v for n, v in zip(run.line_names, e["design"])})
        rows.append(row)
    return rows


def write_rows(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (f"{v:.15g}" if isinstance(v, float) else v) for k, v in r.items()})


def unique_ids(paths):
    ids, seen = [], {}
    for p in paths:
        base = Path(p).resolve().name
        n = seen.get(base, 0)
        seen[base] = n + 1
        ids.append(base if n == 0 else f"{base}_{n}")
    return ids


def build_report(run_dirs, out_dir=None, plots=True):
    """Write breakdown, bid and mu CSVs (plus PNGs); returns (files, audits)."""
    runs = [load_run(p, rid) for p, rid in zip(run_dirs, unique_ids(run_dirs))]
    out = Path(out_dir) if out_dir else (runs[0].path if len(runs) == 1 else Path("report"))
    out.mkdir(parents=True, exist_ok=True)
    files = []
    single = len(runs) == 1

    def name(stem, run):
        return out / (f"{stem}.csv" if single else f"{stem}_{run.run_id}.csv")

    breakdown = []
    for run in runs:
        breakdown += breakdown_rows(run)
        write_rows(name("bids", run), bid_rows(run))
        files.append(name("bids", run))
        mus = mu_rows(run)
        if mus:
            write_rows(name("mu", run), mus)
            files.append(name("mu", run))
    write_rows(out / "breakdown.csv", breakdown)
    files.append(out / "breakdown.csv")
    if not single:
        comparison = [{"run": r.run_id, **r.summary} for r in runs]
        write_rows(out / "comparison.csv", comparison)
        files.append(out / "comparison.csv")
    if plots:
        from .plotting import plot_bids, plot_breakdown, plot_mu

        files.append(plot_breakdown(breakdown, out / "breakdown.png"))
        for run in runs:
            suffix = "" if single else f"_{run.run_id}"
            files.append(plot_bids(run, bid_rows(run), out / f"bids{suffix}.png"))
            mus = mu_rows(run)
            if mus:
                files.append(plot_mu(run, mus, out / f"mu{suffix}.png"))
    audits = {r.run_id: audit_bids(r) for r in runs}
    return files, audits

