"""Batch experiments over topology sweeps, seeds and schedulers.

Run ``python -m pcptdma --suite degree-sweep --out-dir results`` or point
``--spec`` at a JSON file mirroring :class:`ExperimentSpec`.  Every run becomes
one CSV (or JSON-lines) row; per sweep point and scheduler an aggregate row
carries the mean and the 95% Student-t half-width.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from . import baselines
from .protocol import InsufficientPeriod
from .simengine import NonConvergence, SimConfig, compute_metrics, run_to_convergence
from .topology import (
    Topology,
    generate_average_degree,
    generate_complete,
    generate_fixed_degree,
    generate_geometric,
    generate_grid,
    generate_line,
)

log = logging.getLogger(__name__)

SCHEDULERS = ("pcp", "algo2", "jazzymac", "roma", "oracle")
FAMILIES = ("fixed-degree", "average-degree", "geometric", "named", "small-random", "custom")
RUN_HEADER = ["topology", "seed", "policy", "P_i", "P_f", "conv_slots", "resv", "grt", "avg_links"]
METRICS = ["P_f", "conv_slots", "resv", "grt", "avg_links"]
AGG_HEADER = ["topology", "policy", "runs", "failed"] + [
    f"{m}_{s}" for m in METRICS for s in ("mean", "ci95")
]
ORACLE_LIMIT = 10


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str
    family: str
    sweep: list = field(default_factory=list)
    schedulers: list[str] = field(default_factory=lambda: ["pcp"])
    policies: list[str] = field(default_factory=lambda: ["Pi3"])
    seeds: int = 20
    seed_base: int = 0
    nodes: int = 50
    area_side: float = 100.0
    # "auto" expands the period on an empty feasible set unless the policy is Pi1
    on_empty_feasible: str = "auto"
    timeout_hops: int | None = None
    topology_file: str | None = None
    out_dir: str = "results"
    format: str = "csv"

    def validate(self) -> None:
        if self.seeds < 1:
            raise SpecError("seeds must be at least 1")
        if not self.sweep:
            raise SpecError("sweep must not be empty")
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}")
        bad = set(self.schedulers) - set(SCHEDULERS)
        if bad:
            raise SpecError(f"unknown schedulers {sorted(bad)}")
        if self.format not in ("csv", "jsonl"):
            raise SpecError("format must be csv or jsonl")
        if "oracle" in self.schedulers and self.family not in ("small-random", "named", "custom"):
            raise SpecError("the oracle only runs on small families")
        if self.family == "small-random" and max(self.sweep) > ORACLE_LIMIT:
            raise SpecError(f"small-random sizes must be <= {ORACLE_LIMIT}")
        if self.family == "custom" and not self.topology_file:
            raise SpecError("custom family needs topology_file")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise SpecError(f"unknown spec keys {sorted(unknown)}")
        return cls(**doc)


SUITES: dict[str, ExperimentSpec] = {
    "degree-sweep": ExperimentSpec(
        "degree-sweep", "fixed-degree", list(range(5, 16)),
        ["pcp", "algo2", "jazzymac", "roma"], ["Pi3"],
    ),
    "range-sweep": ExperimentSpec(
        "range-sweep", "geometric", list(range(30, 101, 10)),
        ["pcp", "algo2", "jazzymac", "roma"], ["Pi3"],
    ),
    "bipartite": ExperimentSpec(
        "bipartite", "named", ["line16", "grid4x4"], ["pcp", "algo2", "jazzymac", "roma"], ["Pi1"],
    ),
    "convergence": ExperimentSpec(
        "convergence", "fixed-degree", list(range(5, 16)), ["pcp"], ["Pi1", "Pi2", "Pi3"],
    ),
    "signaling": ExperimentSpec(
        "signaling", "fixed-degree", list(range(5, 16)), ["pcp"], ["Pi1", "Pi2", "Pi3"],
    ),
    "oracle": ExperimentSpec(
        "oracle", "small-random", [6, 7, 8, 9, 10], list(SCHEDULERS), ["Pi1"], seeds=10,
    ),
}


def named_topology(label: str) -> Topology:
    if label.startswith("line"):
        return generate_line(int(label[4:]))
    if label.startswith("grid"):
        r, c = label[4:].split("x")
        return generate_grid(int(r), int(c))
    if label.startswith("K"):
        return generate_complete(int(label[1:]))
    raise SpecError(f"unknown named topology {label!r}")


def build_topology(spec: ExperimentSpec, point, seed: int) -> Topology:
    if spec.family == "fixed-degree":
        return generate_fixed_degree(spec.nodes, int(point), seed)
    if spec.family == "average-degree":
        return generate_average_degree(spec.nodes, float(point), seed)
    if spec.family == "geometric":
        return generate_geometric(spec.nodes, spec.area_side, float(point), seed)
    if spec.family == "named":
        return named_topology(str(point))
    if spec.family == "small-random":
        n = int(point)
        rng = np.random.default_rng([seed, n])
        degree = float(rng.uniform(2.0, n - 1))
        return generate_average_degree(n, degree, seed)
    return Topology.load(spec.topology_file)


@dataclass
class RunRow:
    topology: str
    seed: int
    policy: str
    P_i: int | None = None
    P_f: int | None = None
    conv_slots: int | None = None
    resv: int | None = None
    grt: int | None = None
    avg_links: float | None = None

    @property
    def failed(self) -> bool:
        return self.P_f is None

    def cells(self) -> list[str]:
        return ["" if v is None else repr(v) if isinstance(v, float) else str(v) for v in asdict(self).values()]


@dataclass
class AggregateRow:
    topology: str
    policy: str
    runs: int
    failed: int
    values: dict[str, tuple[float, float]]

    def cells(self) -> list[str]:
        out = [self.topology, self.policy, str(self.runs), str(self.failed)]
        for m in METRICS:
            mean, ci = self.values.get(m, (None, None))
            out += ["" if mean is None else repr(mean), "" if ci is None else repr(ci)]
        return out

    def to_dict(self) -> dict:
        return dict(zip(AGG_HEADER, self.cells()))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[RunRow]
    aggregates: list[AggregateRow]

    @property
    def failed(self) -> int:
        return sum(r.failed for r in self.rows)


@dataclass(frozen=True)
class _Task:
    spec: ExperimentSpec
    point: object
    seed: int
    scheduler: str
    policy: str | None


def _run_task(task: _Task) -> RunRow:
    spec = task.spec
    topo = build_topology(spec, task.point, task.seed)
    # random small instances differ per seed; group them by size
    label = f"small{task.point}" if spec.family == "small-random" else topo.name
    if task.scheduler == "pcp":
        mode = spec.on_empty_feasible
        if mode == "auto":
            mode = "raise" if task.policy == "Pi1" else "expand"
        cfg = SimConfig(
            topo,
            policy=task.policy,
            seed=task.seed,
            on_empty_feasible=mode,
            timeout_hops=spec.timeout_hops,
            record_messages=False,
        )
        p_i = cfg.resolved_initial_period()
        row = RunRow(label, task.seed, f"pcp-{task.policy}", p_i)
        try:
            trace = run_to_convergence(cfg)
        except (NonConvergence, InsufficientPeriod) as exc:
            log.warning("%s seed %d %s failed: %s", label, task.seed, row.policy, exc)
            return row
        m = compute_metrics(trace, topo)
        row.P_f = m.final_period
        row.conv_slots = m.convergence_slots
        row.resv = m.resv_total
        row.grt = m.grt_total
        row.avg_links = m.avg_concurrent_links
        return row
    row = RunRow(label, task.seed, task.scheduler)
    try:
        if task.scheduler == "algo2":
            sf = baselines.algo2_schedule(topo)
        elif task.scheduler == "jazzymac":
            sf = baselines.jazzymac_schedule(topo)
        elif task.scheduler == "roma":
            sf = baselines.roma_schedule(topo, task.seed)
        else:
            sf = baselines.oracle_min_superframe(topo, ORACLE_LIMIT).witness
    except (baselines.SchedulingFailed, baselines.OracleUnavailable) as exc:
        log.warning("%s seed %d %s failed: %s", label, task.seed, task.scheduler, exc)
        return row
    row.P_f = sf.period
    row.avg_links = sf.avg_concurrent_links()
    return row


def _tasks(spec: ExperimentSpec) -> list[_Task]:
    out = []
    for point in spec.sweep:
        for k in range(spec.seeds):
            seed = spec.seed_base + k
            for sched in spec.schedulers:
                if sched == "pcp":
                    out += [_Task(spec, point, seed, sched, p) for p in spec.policies]
                else:
                    out.append(_Task(spec, point, seed, sched, None))
    return out


def mean_ci(values) -> tuple[float | None, float | None]:
    """Mean and 95% Student-t half-width; the half-width is 0 for a single sample."""
    xs = [float(v) for v in values]
    if not xs:
        return None, None
    mean = math.fsum(xs) / len(xs)
    if len(xs) < 2:
        return mean, 0.0
    sd = float(np.std(xs, ddof=1))
    return mean, float(stats.t.ppf(0.975, len(xs) - 1) * sd / math.sqrt(len(xs)))


def aggregate(rows: list[RunRow]) -> list[AggregateRow]:
    groups: dict[tuple[str, str], list[RunRow]] = {}
    for r in rows:
        groups.setdefault((r.topology, r.policy), []).append(r)
    out = []
    for (topo, policy), rs in groups.items():
        ok = [r for r in rs if not r.failed]
        values = {}
        for m in METRICS:
            vals = [getattr(r, m) for r in ok if getattr(r, m) is not None]
            if vals:
                values[m] = mean_ci(vals)
        out.append(AggregateRow(topo, policy, len(rs), len(rs) - len(ok), values))
    return out


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    spec.validate()
    tasks = _tasks(spec)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        rows = [_run_task(t) for t in tasks]
    return ExperimentResult(spec, rows, aggregate(rows))


def rows_to_csv(rows: list[RunRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def aggregates_to_csv(aggs: list[AggregateRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_HEADER)
    for a in aggs:
        w.writerow(a.cells())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[RunRow]:
    def num(s, typ):
        return None if s == "" else typ(s)

    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        out.append(
            RunRow(
                rec["topology"], int(rec["seed"]), rec["policy"],
                num(rec["P_i"], int), num(rec["P_f"], int), num(rec["conv_slots"], int),
                num(rec["resv"], int), num(rec["grt"], int), num(rec["avg_links"], float),
            )
        )
    return out


def write_result(result: ExperimentResult, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = result.spec.name
    if fmt == "csv":
        runs = out_dir / f"{name}-runs.csv"
        aggs = out_dir / f"{name}-aggregate.csv"
        runs.write_text(rows_to_csv(result.rows))
        aggs.write_text(aggregates_to_csv(result.aggregates))
    else:
        runs = out_dir / f"{name}-runs.jsonl"
        aggs = out_dir / f"{name}-aggregate.jsonl"
        runs.write_text("".join(json.dumps(dict(zip(RUN_HEADER, r.cells()))) + "\n" for r in result.rows))
        aggs.write_text("".join(json.dumps(a.to_dict()) + "\n" for a in result.aggregates))
    return [runs, aggs]


@dataclass(frozen=True)
class GapRow:
    instance: str
    seed: int
    scheduler: str
    oracle: int
    period: int

    @property
    def ratio(self) -> float:
        return self.period / self.oracle


def compare_against_oracle(
    instances: list[tuple[str, int, Topology]],
    schedulers=("pcp", "algo2", "jazzymac", "roma"),
    policy: str = "Pi1",
) -> list[GapRow]:
    """Period of each scheduler next to the exact optimum on small instances.

    Raises AssertionError if any scheduler beats the oracle, which would mean
    one of them produced an invalid schedule.
    """
    out = []
    for label, seed, topo in instances:
        try:
            best = baselines.oracle_min_superframe(topo, ORACLE_LIMIT).period
        except baselines.OracleUnavailable as exc:
            log.warning("skipping %s: %s", label, exc)
            continue
        for sched in schedulers:
            if sched == "pcp":
                period = run_to_convergence(SimConfig(topo, policy=policy, seed=seed, record_messages=False)).final_period
            elif sched == "algo2":
                period = baselines.algo2_schedule(topo).period
            elif sched == "jazzymac":
                period = baselines.jazzymac_schedule(topo).period
            else:
                period = baselines.roma_schedule(topo, seed).period
            assert period >= best, f"{sched} beat the oracle on {label} seed {seed}"
            out.append(GapRow(label, seed, sched, best, period))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcptdma", description=__doc__.splitlines()[0])
    p.add_argument("--spec", help="JSON experiment spec")
    p.add_argument("--suite", choices=sorted(SUITES), help="built-in experiment suite")
    p.add_argument("--seed-base", type=int, help="first seed (overrides the spec)")
    p.add_argument("--seeds", type=int, help="number of seeds per sweep point (overrides the spec)")
    p.add_argument("--out-dir", help="output directory (overrides the spec)")
    p.add_argument("--format", choices=["csv", "jsonl"], help="output format (overrides the spec)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_spec(args) -> ExperimentSpec:
    if bool(args.spec) == bool(args.suite):
        raise SpecError("give exactly one of --spec or --suite")
    if args.spec:
        spec = ExperimentSpec.from_json(json.loads(Path(args.spec).read_text()))
    else:
        spec = ExperimentSpec(**asdict(SUITES[args.suite]))
    for attr, value in (("seed_base", args.seed_base), ("seeds", args.seeds),
                        ("out_dir", args.out_dir), ("format", args.format)):
        if value is not None:
            setattr(spec, attr, value)
    spec.validate()
    return spec


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        spec = resolve_spec(args)
    except (SpecError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return 1
    result = run_experiment(spec, jobs=args.jobs)
    paths = write_result(result, spec.out_dir, spec.format)
    for a in result.aggregates:
        mean = a.values.get("P_f", (None, None))[0]
        shown = "-" if mean is None else f"{mean:.2f}"
        print(f"{a.topology:<16} {a.policy:<10} runs={a.runs:<3} failed={a.failed:<3} P_f={shown}")
    for path in paths:
        print(f"wrote {path}")
    return 2 if result.failed else 0

