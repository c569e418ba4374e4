"""Config-driven experiment runner.

A sweep is a grid of scheduler-parameter cells crossed with suite sample
indices. Every run is fully determined by (master seed, cell index, sample
index), so reruns reproduce traces and aggregate CSVs byte for byte, and
workers may execute runs in any order.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from copy import deepcopy
from dataclasses import dataclass
from itertools import product
from pathlib import Path

from . import __version__
from .baseline import SelectionRule, run_block_diffusion, vanilla_any_order_run
from .core import DecodeTrace, make_initial_state, stable_seed
from .errors import ConfigError
from .ete import EteConfig, run_ete
from .infotool import BoundReport, annotate_exact_joints, bound_report
from .oracles import RemoteOracle
from .suites import TaskSuite, build_suite

log = logging.getLogger("etelab.sweep")

AGGREGATE_COLUMNS = (
    "sample_id", "f", "C", "total_nats", "epsilon",
    "R_total", "R_exploit", "bound", "margin",
)

RUNS_COLUMNS = (
    "run_id", "cell_id", "sample_id", "suite", "task", "scheduler", "f", "C",
    "n", "block_len", "rounds_total", "rounds_exploit", "forward_passes",
    "steps", "exact_match", "nats_marginal", "nats_joint",
    "nats_exploit_marginal", "nats_exploit_joint", "epsilon",
    "epsilon_exploit", "bound", "margin", "passed",
)


@dataclass(frozen=True)
class ExperimentConfig:
    suite: dict
    scheduler: dict
    sweep: dict
    samples: int
    seed: int
    out: str | None = None

    KNOWN_KEYS = ("suite", "scheduler", "sweep", "samples", "seed", "out")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown experiment config keys {sorted(unknown)}")
        for key in ("suite", "scheduler"):
            if key not in d:
                raise ConfigError(f"experiment config needs a {key!r} section")
        samples = int(d.get("samples", d.get("suite", {}).get("size", 1)))
        if samples < 1:
            raise ConfigError("samples must be >= 1")
        return cls(
            suite=dict(d["suite"]),
            scheduler=dict(d["scheduler"]),
            sweep=dict(d.get("sweep", {})),
            samples=samples,
            seed=int(d.get("seed", 0)),
            out=d.get("out"),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def cells(self) -> list[dict]:
        """Scheduler spec per cell: the Cartesian product of the sweep grids."""
        if not self.sweep:
            return [deepcopy(self.scheduler)]
        keys = list(self.sweep)
        out = []
        for values in product(*(self.sweep[k] for k in keys)):
            spec = deepcopy(self.scheduler)
            for key, value in zip(keys, values):
                node = spec
                parts = key.split(".")
                for p in parts[:-1]:
                    node = node.setdefault(p, {})
                node[parts[-1]] = value
            out.append(spec)
        return out


def _scheduler_knobs(spec: dict) -> tuple[float | None, float | None]:
    """(dynamic factor f, confidence threshold C) advertised by a scheduler spec."""
    kind = spec.get("kind")
    if kind == "alg1":
        rule = spec.get("rule", {})
        f = rule.get("factor") if rule.get("variant") == "dynamic_threshold" else None
        c = rule.get("threshold") if rule.get("variant") == "static_threshold" else None
        return f, c
    if kind == "ete":
        return None, spec.get("ete", {}).get("conf_threshold", EteConfig().conf_threshold)
    return None, None


@dataclass
class RunResult:
    run_id: str
    cell_id: int
    sample_id: int
    suite: str
    task: str
    scheduler: str
    f: float | None
    C: float | None
    n: int
    block_len: int
    exact_match: int
    trace: DecodeTrace
    bound_exploit: BoundReport | None
    bound_all: BoundReport | None
    error: str | None = None


def execute_run(
    cfg: ExperimentConfig,
    cell_id: int,
    sample_id: int,
    endpoint: str | None = None,
) -> RunResult:
    suite = build_suite(cfg.suite)
    spec = cfg.cells()[cell_id]
    task = suite.task(sample_id)
    seed = stable_seed(cfg.seed, cell_id, sample_id)
    mask_id = task.oracle.vocabulary.mask_id
    state = make_initial_state(task.prompt, task.gen_len, task.block_len,
                               seed=seed, mask_id=mask_id)
    oracle = task.oracle
    exact = oracle.supports_exact_joint and endpoint is None
    if endpoint is not None:
        oracle = RemoteOracle(
            endpoint,
            vocab_size=task.oracle.vocabulary.size,
            seq_len=len(task.prompt) + task.gen_len,
            mask_id=mask_id,
        )

    kind = spec.get("kind")
    f, c = _scheduler_knobs(spec)
    if kind == "vanilla":
        trace = vanilla_any_order_run(oracle, state, mode=spec.get("mode", "greedy"))
    elif kind == "alg1":
        trace = run_block_diffusion(oracle, state, SelectionRule.from_dict(spec["rule"]))
    elif kind == "ete":
        trace = run_ete(oracle, state, EteConfig.from_dict(spec.get("ete", {})))
    else:
        raise ConfigError(f"unknown scheduler kind {kind!r}")

    bound_x = bound_a = None
    if exact:
        trace = annotate_exact_joints(trace, task.oracle)
        if kind == "alg1" and f is not None:
            bound_x = bound_report(trace, task.oracle, f, scope="exploit")
            bound_a = bound_report(trace, task.oracle, f, scope="all")
    match = int(tuple(trace.generated_tokens()) == tuple(task.target)) if task.target else 0
    return RunResult(
        run_id=f"c{cell_id:03d}_s{sample_id:04d}",
        cell_id=cell_id,
        sample_id=sample_id,
        suite=suite.name,
        task=task.name,
        scheduler=kind,
        f=f,
        C=c,
        n=task.gen_len,
        block_len=task.block_len,
        exact_match=match,
        trace=trace,
        bound_exploit=bound_x,
        bound_all=bound_a,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def result_rows(res: RunResult) -> tuple[dict, dict]:
    """(runs.csv row, aggregate.csv row) for one completed run."""
    t = res.trace
    exploit_rounds = [r for r in t.rounds if r.kind == "exploit"]
    nats_marg = sum(r.nats_marginal for r in t.rounds)
    joints = [r.nats_joint for r in t.rounds]
    has_joint = bool(t.rounds) and all(j is not None for j in joints)
    nats_joint = sum(joints) if has_joint else None
    nx_marg = sum(r.nats_marginal for r in exploit_rounds)
    nx_joint = (
        sum(r.nats_joint for r in exploit_rounds) if has_joint else None
    )
    eps = abs(nats_joint - nats_marg) if has_joint else None
    eps_x = abs(nx_joint - nx_marg) if has_joint else None
    bx = res.bound_exploit
    runs_row = {
        "run_id": res.run_id,
        "cell_id": res.cell_id,
        "sample_id": res.sample_id,
        "suite": res.suite,
        "task": res.task,
        "scheduler": res.scheduler,
        "f": res.f,
        "C": res.C,
        "n": res.n,
        "block_len": res.block_len,
        "rounds_total": t.total_rounds,
        "rounds_exploit": len(exploit_rounds),
        "forward_passes": t.total_forward_passes,
        "steps": t.total_steps,
        "exact_match": res.exact_match,
        "nats_marginal": nats_marg,
        "nats_joint": nats_joint,
        "nats_exploit_marginal": nx_marg,
        "nats_exploit_joint": nx_joint,
        "epsilon": eps,
        "epsilon_exploit": eps_x,
        "bound": bx.bound if bx is not None else None,
        "margin": bx.margin if bx is not None else None,
        "passed": bx.passed if bx is not None else None,
    }
    agg_row = {
        "sample_id": res.run_id,
        "f": res.f,
        "C": res.C,
        "total_nats": nats_joint if has_joint else nats_marg,
        "epsilon": eps,
        "R_total": t.total_rounds,
        "R_exploit": len(exploit_rounds),
        "bound": bx.bound if bx is not None else None,
        "margin": bx.margin if bx is not None else None,
    }
    return runs_row, agg_row


def _write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def _pool_entry(payload: tuple) -> RunResult | tuple:
    cfg_dict, cell_id, sample_id, endpoint = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return execute_run(cfg, cell_id, sample_id, endpoint)
    except Exception as exc:  # recorded per-run, sweep continues
        return (f"c{cell_id:03d}_s{sample_id:04d}", repr(exc))


def run_sweep(
    cfg: ExperimentConfig,
    out_dir,
    jobs: int = 1,
    endpoint: str | None = None,
) -> dict:
    """Execute all cells x samples, writing traces, bound reports, and CSVs.

    Returns a summary dict; summary["failures"] is non-empty when any run
    raised (the sweep itself keeps going).
    """
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "bounds").mkdir(parents=True, exist_ok=True)
    suite = build_suite(cfg.suite)
    cells = cfg.cells()
    work = [(cfg.to_dict(), ci, si, endpoint)
            for ci in range(len(cells)) for si in range(cfg.samples)]
    results: list[RunResult] = []
    failures: list[dict] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_pool_entry, work))
    else:
        outcomes = [_pool_entry(w) for w in work]
    for outcome in outcomes:
        if isinstance(outcome, RunResult):
            results.append(outcome)
        else:
            run_id, err = outcome
            failures.append({"run_id": run_id, "error": err})
            log.error("run %s failed: %s", run_id, err)

    results.sort(key=lambda r: (r.cell_id, r.sample_id))
    runs_rows, agg_rows = [], []
    for res in results:
        (out / "traces" / f"{res.run_id}.jsonl").write_text(res.trace.to_jsonl())
        bound_doc = {
            "run_id": res.run_id,
            "exploit": res.bound_exploit.to_dict() if res.bound_exploit else None,
            "all": res.bound_all.to_dict() if res.bound_all else None,
        }
        (out / "bounds" / f"{res.run_id}.json").write_text(
            json.dumps(bound_doc, sort_keys=True, indent=1) + "\n"
        )
        rr, ar = result_rows(res)
        runs_rows.append(rr)
        agg_rows.append(ar)

    _write_csv(out / "runs.csv", RUNS_COLUMNS, runs_rows)
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, agg_rows)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "suite_fingerprint": suite.fingerprint(),
        "cells": [{"cell_id": i, "scheduler": spec} for i, spec in enumerate(cells)],
        "n_runs": len(results),
        "n_failures": len(failures),
        "remote_endpoint": endpoint,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    if failures:
        (out / "failures.json").write_text(json.dumps(failures, indent=1) + "\n")
    return {
        "out": str(out),
        "runs": len(results),
        "failures": failures,
        "cells": len(cells),
    }
