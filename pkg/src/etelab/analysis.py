"""Post-sweep analysis: bound verification, Pareto frontiers, scheduler
comparison at matched quality, and plot-data export (delimited series only).
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LN2, DecodeTrace
from .errors import ConfigError
from .infotool import per_round_cap_check

PASS_TOL = 1e-9
BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 100003


def _parse(value: str):
    if value == "":
        return None
    try:
        f = float(value)
    except ValueError:
        return value
    return int(f) if f.is_integer() and "." not in value and "e" not in value else f


def load_results(result_dir) -> tuple[dict, list[dict]]:
    out = Path(result_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    lines = (out / "runs.csv").read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append({k: _parse(v) for k, v in zip(header, parts)})
    return manifest, rows


def _slope(xs: list[float], ys: list[float]) -> float | None:
    """Least-squares slope of y on x; None when x carries no variance."""
    if len(xs) < 2:
        return None
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    var = float(((x - x.mean()) ** 2).sum())
    if var <= 0.0:
        return None
    return float(((x - x.mean()) * (y - y.mean())).sum() / var)


@dataclass(frozen=True)
class VerifySummary:
    n_bound_runs: int
    n_passed: int
    worst_margin: float | None
    violations: tuple[dict, ...]
    slopes: dict
    slopes_positive: bool
    slopes_non_increasing: bool

    @property
    def ok(self) -> bool:
        return (
            not self.violations
            and self.n_bound_runs > 0
            and self.slopes_positive
            and self.slopes_non_increasing
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ok"] = self.ok
        return d


def verify_bounds(result_dir) -> VerifySummary:
    """Check every bound margin and the per-factor rounds-vs-nats slopes.

    Slopes are fitted per factor by least squares of exploit rounds on exploit
    nats; they must be positive and non-increasing as the factor grows. Any
    margin below -1e-9 is reported with the run id and the worst round.
    """
    out = Path(result_dir)
    _, rows = load_results(out)
    bound_rows = [r for r in rows if r.get("margin") is not None]
    violations = []
    worst = None
    for r in bound_rows:
        margin = float(r["margin"])
        worst = margin if worst is None else min(worst, margin)
        if margin < -PASS_TOL:
            detail = {"run_id": r["run_id"], "margin": margin, "round": None}
            trace_path = out / "traces" / f"{r['run_id']}.jsonl"
            if trace_path.exists() and r.get("f") is not None:
                trace = DecodeTrace.from_jsonl(trace_path.read_text())
                heads = per_round_cap_check(trace, float(r["f"]))
                if heads:
                    exploit_idx = [i for i, rd in enumerate(trace.rounds) if rd.kind == "exploit"]
                    worst_i = int(np.argmin(heads))
                    detail["round"] = exploit_idx[worst_i]
            violations.append(detail)

    slopes: dict[float, float | None] = {}
    factors = sorted({float(r["f"]) for r in bound_rows if r.get("f") is not None})
    for f in factors:
        pts = [
            (float(r["nats_exploit_joint"]), float(r["rounds_exploit"]))
            for r in bound_rows
            if r.get("f") == f and r.get("nats_exploit_joint") is not None
        ]
        slopes[f] = _slope([p[0] for p in pts], [p[1] for p in pts])
    defined = [(f, s) for f, s in slopes.items() if s is not None]
    positive = all(s > 0 for _, s in defined)
    non_increasing = all(
        defined[i + 1][1] <= defined[i][1] + PASS_TOL for i in range(len(defined) - 1)
    )
    return VerifySummary(
        n_bound_runs=len(bound_rows),
        n_passed=len(bound_rows) - len(violations),
        worst_margin=worst,
        violations=tuple(violations),
        slopes=slopes,
        slopes_positive=positive,
        slopes_non_increasing=non_increasing,
    )


@dataclass(frozen=True)
class FrontierPoint:
    cell_id: int
    metric: float
    rounds: float
    forward_passes: float
    n_runs: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _cell_points(rows: list[dict], metric: str) -> list[FrontierPoint]:
    cells: dict[int, list[dict]] = {}
    for r in rows:
        cells.setdefault(int(r["cell_id"]), []).append(r)
    pts = []
    for cid in sorted(cells):
        group = cells[cid]
        pts.append(
            FrontierPoint(
                cell_id=cid,
                metric=float(np.mean([float(g[metric]) for g in group])),
                rounds=float(np.mean([float(g["rounds_total"]) for g in group])),
                forward_passes=float(np.mean([float(g["forward_passes"]) for g in group])),
                n_runs=len(group),
            )
        )
    return pts


def pareto(result_dir, metric: str = "exact_match") -> list[FrontierPoint]:
    """Non-dominated cells under (higher metric, fewer forward passes)."""
    _, rows = load_results(result_dir)
    pts = sorted(_cell_points(rows, metric), key=lambda p: (p.forward_passes, -p.metric))
    frontier = []
    best = -math.inf
    for p in pts:
        if p.metric > best:
            frontier.append(p)
            best = p.metric
    return frontier


@dataclass(frozen=True)
class ComparePair:
    cell_a: int
    cell_b: int
    metric_a: float
    metric_b: float
    passes_a: float
    passes_b: float
    reduction_pct: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CompareReport:
    pairs: tuple[ComparePair, ...]
    mean_reduction_pct: float
    metric: str

    def to_dict(self) -> dict:
        return {
            "pairs": [p.to_dict() for p in self.pairs],
            "mean_reduction_pct": self.mean_reduction_pct,
            "metric": self.metric,
        }


def compare(dir_a, dir_b, metric: str = "exact_match") -> CompareReport:
    """Forward-pass reduction of B relative to A at matched quality.

    Both result sets must come from the identical task suite and master seed;
    cells are paired by nearest mean metric. The bootstrap interval resamples
    the shared sample indices with a fixed seed.
    """
    man_a, rows_a = load_results(dir_a)
    man_b, rows_b = load_results(dir_b)
    if man_a["suite_fingerprint"] != man_b["suite_fingerprint"]:
        raise ConfigError(
            "result sets come from different task suites: "
            f"{man_a['suite_fingerprint']} vs {man_b['suite_fingerprint']}"
        )
    if man_a["config"]["seed"] != man_b["config"]["seed"]:
        raise ConfigError("result sets use different master seeds; runs are not paired")
    if man_a["config"]["samples"] != man_b["config"]["samples"]:
        raise ConfigError("result sets cover different sample counts")

    pts_a = _cell_points(rows_a, metric)
    pts_b = _cell_points(rows_b, metric)
    by_cell_a: dict[int, dict[int, float]] = {}
    by_cell_b: dict[int, dict[int, float]] = {}
    for r in rows_a:
        by_cell_a.setdefault(int(r["cell_id"]), {})[int(r["sample_id"])] = float(
            r["forward_passes"]
        )
    for r in rows_b:
        by_cell_b.setdefault(int(r["cell_id"]), {})[int(r["sample_id"])] = float(
            r["forward_passes"]
        )

    rng = np.random.default_rng(BOOTSTRAP_SEED)
    pairs = []
    for pa in pts_a:
        pb = min(pts_b, key=lambda p: (abs(p.metric - pa.metric), p.forward_passes))
        samples = sorted(set(by_cell_a[pa.cell_id]) & set(by_cell_b[pb.cell_id]))
        xa = np.asarray([by_cell_a[pa.cell_id][s] for s in samples])
        xb = np.asarray([by_cell_b[pb.cell_id][s] for s in samples])
        reduction = 100.0 * (xa.mean() - xb.mean()) / xa.mean()
        reps = []
        for _ in range(BOOTSTRAP_RESAMPLES):
            idx = rng.integers(0, len(samples), size=len(samples))
            reps.append(100.0 * (xa[idx].mean() - xb[idx].mean()) / xa[idx].mean())
        lo, hi = np.percentile(reps, [2.5, 97.5])
        pairs.append(
            ComparePair(
                cell_a=pa.cell_id,
                cell_b=pb.cell_id,
                metric_a=pa.metric,
                metric_b=pb.metric,
                passes_a=float(xa.mean()),
                passes_b=float(xb.mean()),
                reduction_pct=float(reduction),
                ci_low=float(lo),
                ci_high=float(hi),
            )
        )
    mean_red = float(np.mean([p.reduction_pct for p in pairs])) if pairs else 0.0
    return CompareReport(tuple(pairs), mean_red, metric)


SCATTER_COLUMNS = (
    "run_id", "f", "C", "nats_exploit", "bits_exploit", "rounds_exploit",
    "nats_total", "bits_total", "rounds_total", "forward_passes", "steps",
)
PER_F_COLUMNS = ("f", "mean_nats_per_exploit_round", "mean_bits_per_exploit_round", "n_runs")
FRONTIER_COLUMNS = ("cell_id", "metric", "rounds", "forward_passes", "n_runs", "on_frontier")


def emit_plotdata(result_dir, metric: str = "exact_match") -> dict:
    """Write the rounds-vs-nats scatter, nats-per-round-vs-f, and frontier series.

    Deterministic column order; one scatter row per run; header-only files for
    empty result sets.
    """
    out = Path(result_dir)
    _, rows = load_results(out)
    plotdir = out / "plotdata"
    plotdir.mkdir(exist_ok=True)

    def fmt(v):
        if v is None:
            return ""
        return repr(v) if isinstance(v, float) else str(v)

    scatter_lines = [",".join(SCATTER_COLUMNS)]
    for r in rows:
        nx = r.get("nats_exploit_joint")
        if nx is None:
            nx = r.get("nats_exploit_marginal")
        nt = r.get("nats_joint")
        if nt is None:
            nt = r.get("nats_marginal")
        scatter_lines.append(
            ",".join(
                fmt(v)
                for v in (
                    r["run_id"], r.get("f"), r.get("C"),
                    nx, None if nx is None else nx / LN2,
                    r["rounds_exploit"],
                    nt, None if nt is None else nt / LN2,
                    r["rounds_total"], r["forward_passes"], r["steps"],
                )
            )
        )
    (plotdir / "rounds_vs_nats.csv").write_text("\n".join(scatter_lines) + "\n")

    per_f_lines = [",".join(PER_F_COLUMNS)]
    factors = sorted({r["f"] for r in rows if r.get("f") is not None})
    for f in factors:
        group = [r for r in rows if r.get("f") == f and r["rounds_exploit"]]
        if group:
            per_round = [
                (r.get("nats_exploit_joint") or r.get("nats_exploit_marginal") or 0.0)
                / r["rounds_exploit"]
                for r in group
            ]
            mean_nats = float(np.mean(per_round))
            per_f_lines.append(
                ",".join(fmt(v) for v in (f, mean_nats, mean_nats / LN2, len(group)))
            )
        else:
            per_f_lines.append(",".join(fmt(v) for v in (f, None, None, 0)))
    (plotdir / "nats_per_round_vs_f.csv").write_text("\n".join(per_f_lines) + "\n")

    frontier_lines = [",".join(FRONTIER_COLUMNS)]
    if rows:
        frontier_cells = {p.cell_id for p in pareto(out, metric)}
        for p in sorted(_cell_points(rows, metric), key=lambda p: p.cell_id):
            frontier_lines.append(
                ",".join(
                    fmt(v)
                    for v in (
                        p.cell_id, p.metric, p.rounds, p.forward_passes,
                        p.n_runs, int(p.cell_id in frontier_cells),
                    )
                )
            )
    (plotdir / "frontier.csv").write_text("\n".join(frontier_lines) + "\n")
    return {
        "plotdata": str(plotdir),
        "rows": len(rows),
        "files": ["rounds_vs_nats.csv", "nats_per_round_vs_f.csv", "frontier.csv"],
    }
