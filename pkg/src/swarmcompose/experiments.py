"""Monte Carlo experiment runners and their CSV/JSON outputs.

Every experiment sweeps bins of perturbed requests. A request is materialised
into a random topology and allocation, then each method is run on it. Rows
come back in (bin, request) order whatever the worker count, so outputs are
byte-identical across runs except for the wall-clock runtime columns.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from swarmcompose import __version__
from swarmcompose.baselines import DEFAULT_CAP, brute_force_clustered, brute_force_direct
from swarmcompose.composition import CostWeights, Strategy, TooFewDrones, compose
from swarmcompose.core import InsufficientCapacity
from swarmcompose.enforcement import run_framework
from swarmcompose.queueing import PlanEvaluator, QueueConfig
from swarmcompose.selection import SlaSpec
from swarmcompose.workload import DEFAULT_DEVICE_LAMBDA, ScenarioScale, generate_requests, materialize

EXPERIMENTS = ("exp1", "exp2", "exp3", "exp4")

DEFAULT_BINS = {
    # SLA latency bounds in seconds; the two-hop service floor is about 0.55 ms
    "exp1": (0.6e-3, 0.7e-3, 0.8e-3, 1.0e-3, 1.5e-3, 2.0e-3),
    # 25-device steps resolve where each strategy's stability gives out
    "exp2": tuple(range(100, 451, 25)),
    "exp3": tuple(range(100, 451, 25)),
    "exp4": (50, 100, 150, 200, 250, 300, 350, 400, 500, 600, 700),
}


@dataclass(frozen=True)
class ExperimentConfig:
    requests_per_bin: int = 100
    seed: int = 0
    workers: int = 1
    mode: str = "paper"
    rho_max: float = 0.95
    sla_metric: str = "avg"
    per_device_lambda: float = DEFAULT_DEVICE_LAMBDA
    perturbation: float = 0.1
    cap: int = DEFAULT_CAP
    exp1_devices: int = 110
    exp1_scale: str = "small"
    # loose enough that only stability binds in the load sweeps
    load_sla_bound: float = 1.0
    load_scale: str = "medium"
    scales: tuple[str, ...] = ("small", "medium", "large")
    # (entry drones, gateways) to stand in for the large scale on slow machines
    large_override: tuple[int, int] | None = None
    bins: tuple = ()

    def scale(self, name: str):
        if name == "large" and self.large_override is not None:
            entry, gateways = self.large_override
            return ScenarioScale("large", int(entry), int(gateways))
        return name

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig
    bins: tuple
    rows: list[dict]
    summary: list[dict]
    checks: dict = field(default_factory=dict)

    def provenance(self) -> str:
        return (f"# swarmcompose {__version__} experiment={self.name} seed={self.config.seed} "
                f"config={self.config.digest()}")

    def summary_csv(self) -> str:
        return _csv(self.provenance(), self.summary)

    def rows_csv(self) -> str:
        return _csv(self.provenance(), self.rows)

    def to_json(self) -> str:
        return json.dumps({"experiment": self.name, "version": __version__,
                           "config": asdict(self.config), "config_hash": self.config.digest(),
                           "bins": list(self.bins), "summary": self.summary, "checks": self.checks},
                          indent=2, sort_keys=True, default=str)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{self.name}_bins.csv", out / f"{self.name}_requests.csv",
                 out / f"{self.name}_summary.json"]
        for p, text in zip(paths, (self.summary_csv(), self.rows_csv(), self.to_json())):
            p.write_text(text)
        return paths


def _csv(comment: str, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(comment + "\n")
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _bin_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _mean_se(values: Sequence[float]):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    m = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return m, se


def _map(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _tasks(name: str, cfg: ExperimentConfig, bins, axis: str, scale: str,
           base_sla: SlaSpec, base_devices: int = 110):
    tasks = []
    for b, nominal in enumerate(bins):
        rb = generate_requests(nominal, axis, cfg.requests_per_bin, cfg.perturbation,
                               _bin_seed(cfg.seed, b), base_devices, base_sla, cfg.per_device_lambda)
        tasks += [(name, cfg, b, nominal, scale, r) for r in rb.requests]
    return tasks


def _violation(feasible: bool, latency: float | None, bound: float) -> bool:
    return not feasible or latency is None or latency > bound


def _exp1_task(task) -> list[dict]:
    _, cfg, b, nominal, scale, req = task
    topo, alloc = materialize(req, cfg.scale(scale))
    qc = QueueConfig(mode=cfg.mode)
    sla = req.sla
    rows = []
    t0 = time.perf_counter()
    fw = run_framework(topo, alloc, sla, config=qc, seed=req.seed % (1 << 31))
    rt = time.perf_counter() - t0
    lat = fw.evaluation.latency.metric(sla.metric) if fw.stable else None
    rows.append(("heuristic", fw.stable, lat, rt))
    for method, fn in (("bf_direct", brute_force_direct), ("bf_clustered", brute_force_clustered)):
        t0 = time.perf_counter()
        try:
            res = fn(topo, alloc, sla, cap=cfg.cap, seed=req.seed % (1 << 31), config=qc)
            best = res.best
        except TooFewDrones:
            best = None
        rt = time.perf_counter() - t0
        rows.append((method, best is not None and best.feasible,
                     None if best is None else best.latency_sla, rt))
    return [{"bin": b, "sla_bin": nominal, "request": req.index, "method": m,
             "sla_bound": sla.latency_bound, "stable": st, "latency": lat,
             "violation": _violation(st, lat, sla.latency_bound), "runtime_s": rt}
            for m, st, lat, rt in rows]


FIXED = (Strategy.DIRECT, Strategy.CLUSTERED, Strategy.PARALLEL)


def _load_task(task) -> list[dict]:
    name, cfg, b, nominal, scale, req = task
    base = {"bin": b, "devices_bin": nominal, "scale": scale, "request": req.index,
            "devices": req.device_count}
    methods = ("framework",) + (tuple(s.value for s in FIXED) if name == "exp2" else ())
    try:
        topo, alloc = materialize(req, cfg.scale(scale))
    except InsufficientCapacity:
        # more devices than the entry drones can host: no method is feasible
        return [{**base, "method": m, "strategy": None, "stable": False, "compliant": False,
                 "latency": None, "max_rho": None} for m in methods]
    qc = QueueConfig(mode=cfg.mode)
    sla = req.sla
    seed = req.seed % (1 << 31)
    fw = run_framework(topo, alloc, sla, config=qc, seed=seed)
    out = [{**base, "method": "framework",
            "strategy": None if fw.strategy is None else fw.strategy.value,
            "stable": fw.stable, "compliant": fw.compliant,
            "latency": fw.evaluation.latency.metric(sla.metric) if fw.stable else None,
            "max_rho": None if fw.evaluation is None else fw.evaluation.max_rho}]
    if name != "exp2":
        return out
    evaluator = PlanEvaluator(topo, alloc, qc)
    for s in FIXED:
        try:
            plan = compose(s, topo, alloc, CostWeights(), seed=seed)
        except TooFewDrones:
            plan = None
        ev = None if plan is None else evaluator(plan)
        stable = ev is not None and ev.feasible
        out.append({**out[0], "method": s.value, "strategy": s.value, "stable": stable,
                    "compliant": None,
                    "latency": ev.latency.metric(sla.metric) if stable else None,
                    "max_rho": None if ev is None else ev.max_rho})
    return out


def _flatten(results):
    return [row for rows in results for row in rows]


def _stable_threshold(summary, method, scale=None):
    """Lowest bin value where fewer than half the requests are stable, or None."""
    for row in summary:
        if row["method"] == method and (scale is None or row.get("scale") == scale):
            if row["stable_fraction"] < 0.5:
                return row["devices_bin"]
    return None


def _max_stable(summary, method, scale=None):
    best = None
    for row in summary:
        if row["method"] == method and (scale is None or row.get("scale") == scale):
            if row["stable_fraction"] >= 0.5:
                best = row["devices_bin"]
    return best


def run_exp1(cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Violation rate and runtime against SLA bound: heuristic vs capped brute force."""
    bins = tuple(cfg.bins) or DEFAULT_BINS["exp1"]
    base = SlaSpec(bins[0], cfg.sla_metric, cfg.rho_max)
    tasks = _tasks("exp1", cfg, bins, "sla_latency", cfg.exp1_scale, base, cfg.exp1_devices)
    rows = _flatten(_map(_exp1_task, tasks, cfg.workers))
    summary = []
    for b, nominal in enumerate(bins):
        for method in ("heuristic", "bf_direct", "bf_clustered"):
            sel = [r for r in rows if r["bin"] == b and r["method"] == method]
            viol = [float(r["violation"]) for r in sel]
            vm, vse = _mean_se(viol)
            rm, rse = _mean_se([r["runtime_s"] for r in sel])
            lm, lse = _mean_se([r["latency"] for r in sel])
            summary.append({"sla_bin": nominal, "method": method, "violation_rate": vm,
                            "mean_runtime_s": rm, "violation_se": vse, "runtime_se": rse,
                            "mean_latency": lm, "latency_se": lse, "n": len(sel)})
    return ExperimentResult("exp1", cfg, bins, rows, summary)


def _load_summary(rows, bins, methods, scales):
    summary = []
    for scale in scales:
        for b, nominal in enumerate(bins):
            for method in methods:
                sel = [r for r in rows if r["bin"] == b and r["method"] == method and r["scale"] == scale]
                if not sel:
                    continue
                lm, lse = _mean_se([r["latency"] for r in sel])
                summary.append({"devices_bin": nominal, "scale": scale, "method": method,
                                "stable_fraction": sum(r["stable"] for r in sel) / len(sel),
                                "mean_latency": lm, "latency_se": lse, "n": len(sel)})
    return summary


def run_exp2(cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Mean latency against device count: enforced framework vs each fixed strategy."""
    bins = tuple(cfg.bins) or DEFAULT_BINS["exp2"]
    sla = SlaSpec(cfg.load_sla_bound, cfg.sla_metric, cfg.rho_max)
    tasks = _tasks("exp2", cfg, bins, "device_count", cfg.load_scale, sla)
    rows = _flatten(_map(_load_task, tasks, cfg.workers))
    methods = ("framework",) + tuple(s.value for s in FIXED)
    summary = _load_summary(rows, bins, methods, (cfg.load_scale,))
    # framework latency on exactly the requests where each fixed strategy is stable
    fw = {(r["bin"], r["request"]): r["latency"] for r in rows if r["method"] == "framework"}
    for row, b in zip(summary, [i for i in range(len(bins)) for _ in methods]):
        paired = [fw[(r["bin"], r["request"])] for r in rows
                  if r["bin"] == b and r["method"] == row["method"] and r["stable"]]
        row["framework_paired_latency"] = _mean_se(paired)[0]
    checks = {m: {"instability_at": _stable_threshold(summary, m),
                  "max_stable": _max_stable(summary, m)} for m in methods}
    checks["dominance"] = all(
        row["framework_paired_latency"] <= row["mean_latency"] * (1 + 1e-12)
        for row in summary
        if row["method"] != "framework" and row["stable_fraction"] >= 0.5)
    return ExperimentResult("exp2", cfg, bins, rows, summary, checks)


def run_exp3(cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """How often the framework ends on each strategy, per device-count bin."""
    bins = tuple(cfg.bins) or DEFAULT_BINS["exp3"]
    sla = SlaSpec(cfg.load_sla_bound, cfg.sla_metric, cfg.rho_max)
    tasks = _tasks("exp3", cfg, bins, "device_count", cfg.load_scale, sla)
    rows = _flatten(_map(_load_task, tasks, cfg.workers))
    summary = []
    for b, nominal in enumerate(bins):
        sel = [r for r in rows if r["bin"] == b]
        n = len(sel)
        counts = {s.value: sum(r["strategy"] == s.value for r in sel) for s in FIXED}
        for s in FIXED:
            summary.append({"devices_bin": nominal, "strategy": s.value,
                            "frequency": counts[s.value] / n if n else 0.0, "n": n})
    return ExperimentResult("exp3", cfg, bins, rows, summary)


def run_exp4(cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Framework latency and stable load range across swarm scales."""
    bins = tuple(cfg.bins) or DEFAULT_BINS["exp4"]
    sla = SlaSpec(cfg.load_sla_bound, cfg.sla_metric, cfg.rho_max)
    tasks = []
    for scale in cfg.scales:
        tasks += _tasks("exp4", cfg, bins, "device_count", scale, sla)
    rows = _flatten(_map(_load_task, tasks, cfg.workers))
    summary = _load_summary(rows, bins, ("framework",), cfg.scales)
    checks = {s: {"max_stable": _max_stable(summary, "framework", s)} for s in cfg.scales}
    return ExperimentResult("exp4", cfg, bins, rows, summary, checks)


RUNNERS = {"exp1": run_exp1, "exp2": run_exp2, "exp3": run_exp3, "exp4": run_exp4}


def run_experiment(name: str, cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}") from None
    return runner(cfg)


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
