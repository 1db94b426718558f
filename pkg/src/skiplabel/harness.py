"""Experiment runner: engines over workloads, CSV results, oracle checks.

All randomness flows through the seeds recorded in the spec, cells run
sequentially, and floats are rendered with repr, so re-running a spec
reproduces its CSV byte for byte.
"""
from __future__ import annotations

import io
import math
from bisect import bisect_left, insort
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .allocator import ceil_slot
from .engine import Engine, EngineConfig
from .proactive import ProactiveConfig
from .workloads import (WorkloadOp, gen_delete_max_insert_random, gen_front_insert,
                        gen_hammer, gen_uniform_mix, read_trace)

WORKLOADS = ("front", "delmax", "uniform", "hammer")


class HarnessFailure(RuntimeError):
    """An invariant failed during a harness run."""


@dataclass
class ExperimentSpec:
    workload: str              # front | delmax | uniform | hammer | trace
    capacity: int
    steps: int
    warmup: int = 0
    epsilon: float = 1.0
    gamma: float = 0.5
    gamma_mode: str = "constant"
    split: str = "adaptive"
    kappa: float = 8.0
    seeds: tuple[int, ...] = (0,)
    p_insert: float = 0.5
    rank_fraction: float = 0.0
    metrics_every: int = 64
    audit_every: int = 4096
    record_events: bool = False
    trace_path: Optional[str] = None

    def engine_config(self, seed: int) -> EngineConfig:
        return EngineConfig(
            capacity=self.capacity,
            epsilon=self.epsilon,
            proactive=ProactiveConfig(gamma=self.gamma, split_mode=self.split,
                                      kappa=self.kappa, gamma_mode=self.gamma_mode),
            seed=seed,
            metrics_every=self.metrics_every,
            audit_every=self.audit_every,
            record_events=self.record_events,
        )


@dataclass
class ResultRow:
    n: int
    epsilon: float
    gamma: float
    split_mode: str
    seed: int
    steps: int
    writes_total: int
    writes_moved: int
    amortized_writes: float
    eta_min: float
    r_levels: int
    realloc_breakdown: str


RESULT_FIELDS = ("n,epsilon,gamma,splitMode,seed,steps,writesTotal,writesMoved,"
                 "amortizedWrites,etaMin,rLevels,reallocBreakdown")


def build_ops(spec: ExperimentSpec, seed: int):
    """(warmup ops, measured ops) for one cell of the spec."""
    if spec.workload == "front":
        return [], gen_front_insert(spec.steps)
    if spec.workload == "delmax":
        ops = gen_delete_max_insert_random(spec.warmup, spec.steps, seed)
    elif spec.workload == "uniform":
        ops = gen_uniform_mix(spec.warmup, spec.steps, spec.p_insert, seed,
                              n_max=spec.capacity - 1)
    elif spec.workload == "hammer":
        ops = gen_hammer(spec.rank_fraction, spec.steps, seed,
                         warmup_n=spec.warmup)
    elif spec.workload == "trace":
        return [], read_trace(spec.trace_path)
    else:
        raise ValueError(f"unknown workload {spec.workload!r}")
    return ops[:spec.warmup], ops[spec.warmup:]


def run(spec: ExperimentSpec, out_path: Optional[str] = None) -> list[ResultRow]:
    """One engine per seed; warmup is applied but not measured.

    Raises HarnessFailure on any invariant violation; writes one CSV row
    per seed when out_path is given.
    """
    rows = []
    for seed in spec.seeds:
        eng = Engine(spec.engine_config(seed))
        warmup_ops, measured = build_ops(spec, seed)
        for op in warmup_ops:
            eng.apply(op.kind, op.value)
        m = eng.metrics
        w0, mv0 = m.writes_total, m.writes_moved
        for op in measured:
            eng.apply(op.kind, op.value)
        ok, violations = eng.verify()
        if not ok:
            raise HarnessFailure(
                f"seed {seed}: " + "; ".join(violations[:4]))
        eng.compute_eta()
        writes = m.writes_total - w0
        moved = m.writes_moved - mv0
        steps = max(1, len(measured))
        breakdown = (f"parent:{m.parent_reallocs};trigger:{m.trigger_reallocs};"
                     f"resplit:{m.resplits};round:{m.round_splits};"
                     f"rebuild:{m.rebuilds}")
        rows.append(ResultRow(
            n=eng.n, epsilon=spec.epsilon, gamma=eng.gamma,
            split_mode=spec.split, seed=seed, steps=steps,
            writes_total=writes, writes_moved=moved,
            amortized_writes=writes / steps, eta_min=m.eta_min,
            r_levels=eng.tree.root.level, realloc_breakdown=breakdown))
        if spec.record_events and out_path:
            with open(f"{out_path}.events-{seed}.csv", "w", newline="\n") as fh:
                fh.write(eng.events_csv())
    if out_path:
        with open(out_path, "w", newline="\n") as fh:
            fh.write(results_csv(rows))
    return rows


def results_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(RESULT_FIELDS + "\n")
    for r in rows:
        buf.write(f"{r.n},{r.epsilon!r},{r.gamma!r},{r.split_mode},{r.seed},"
                  f"{r.steps},{r.writes_total},{r.writes_moved},"
                  f"{r.amortized_writes!r},{r.eta_min!r},{r.r_levels},"
                  f"{r.realloc_breakdown}\n")
    return buf.getvalue()


@dataclass
class SweepRow:
    n: int
    split_mode: str
    gamma_mode: str
    median_amortized: float
    ratio_log_loglog: float
    ratio_log2: float


def sweep(template: ExperimentSpec, n_list: list[int],
          out_path: Optional[str] = None) -> list[SweepRow]:
    """Scaling table over operating sizes.

    Each size n runs with capacity 2n, warmup n, and the template's steps
    (defaulting to 2n when the template says 0); the median amortized
    write count per seed feeds the growth-law ratio columns.
    """
    rows = []
    for n in sorted(n_list):
        steps = template.steps if template.steps else 2 * n
        spec = replace(template, capacity=2 * n, warmup=n, steps=steps)
        cell = run(spec)
        med = _median([r.amortized_writes for r in cell])
        lg = math.log2(n)
        rows.append(SweepRow(
            n=n, split_mode=spec.split, gamma_mode=spec.gamma_mode,
            median_amortized=med,
            ratio_log_loglog=med / (lg * math.log2(lg)),
            ratio_log2=med / (lg * lg)))
    if out_path:
        with open(out_path, "w", newline="\n") as fh:
            fh.write("n,splitMode,gammaMode,medianAmortized,ratioLogLogLog,ratioLog2\n")
            for r in rows:
                fh.write(f"{r.n},{r.split_mode},{r.gamma_mode},"
                         f"{r.median_amortized!r},{r.ratio_log_loglog!r},"
                         f"{r.ratio_log2!r}\n")
    return rows


def _median(values: list[float]) -> float:
    vs = sorted(values)
    mid = len(vs) // 2
    if len(vs) % 2:
        return vs[mid]
    return 0.5 * (vs[mid - 1] + vs[mid])


@dataclass
class OracleReport:
    ok: bool
    step: int = -1
    detail: str = ""


def oracle_verify(trace: list[WorkloadOp], config: EngineConfig) -> OracleReport:
    """Replay a trace, rebuilding the expected sorted sequence independently
    after every step and diffing it against the engine's array snapshot.

    Checks the order-preserving injection into [1, m'], the one-slot
    spacing of fractional positions, and slot/position rounding agreement.
    """
    if len(trace) > 10_000:
        raise ValueError("oracle is quadratic; traces are capped at 10^4 steps")
    eng = Engine(config)
    expected: list[float] = []
    for i, op in enumerate(trace):
        try:
            eng.apply(op.kind, op.value)
        except Exception as exc:  # noqa: BLE001 - reported, not raised
            return OracleReport(False, i, f"engine rejected {op}: {exc}")
        if op.kind == "insert":
            insort(expected, op.value)
        else:
            expected.pop(bisect_left(expected, op.value))
        snapshot = eng.array.snapshot_csv().splitlines()[1:]
        if len(snapshot) != len(expected):
            return OracleReport(False, i,
                                f"array holds {len(snapshot)} keys, oracle {len(expected)}")
        prev_slot = 0
        prev_frac = None
        for j, line in enumerate(snapshot):
            slot_s, key_s = line.split(",")
            slot, stored = int(slot_s), float(key_s)
            if stored != expected[j]:
                return OracleReport(False, i,
                                    f"slot {slot} holds {stored}, oracle expects {expected[j]}")
            if slot <= prev_slot or slot > eng.m_prime:
                return OracleReport(False, i, f"slot {slot} out of order/range")
            frac = float(eng.array.fracs[slot])
            if prev_frac is not None and frac - prev_frac < 1.0 - 1e-9:
                return OracleReport(False, i,
                                    f"spacing {frac - prev_frac:.12f} below one slot at {slot}")
            if ceil_slot(frac) != slot:
                return OracleReport(False, i, f"slot {slot} disagrees with position {frac}")
            prev_slot, prev_frac = slot, frac
    return OracleReport(True, len(trace), "")


@dataclass
class DriftReport:
    n_bar: int
    epsilon: float
    phase: int
    min_eta: dict[str, float] = field(default_factory=dict)
    by_depth: dict[str, dict[int, float]] = field(default_factory=dict)

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write("mode,depth,minRelativeSlack\n")
        for mode, table in self.by_depth.items():
            for depth in sorted(table):
                buf.write(f"{mode},{depth},{table[depth]!r}\n")
        for mode, eta in self.min_eta.items():
            buf.write(f"{mode},overall,{eta!r}\n")
        return buf.getvalue()


DRIFT_MODES = (
    ("smooth-const", "smooth", "constant"),
    ("smooth-invlog", "smooth", "invlog"),
    ("adaptive", "adaptive", "constant"),
)


def drift_report(n_bar: int, epsilon: float = 1.0, capacity: Optional[int] = None,
                 seed: int = 0, kappa: float = 8.0,
                 out_path: Optional[str] = None) -> DriftReport:
    """Front-insertion pressure over exactly one rebuild phase.

    Builds n_bar uniform keys, rebuilds, then applies floor(epsilon *
    n_bar / 4) front inserts while tracking the minimum relative slack per
    tree depth, for the three split/gamma policies.
    """
    capacity = capacity or 2 * n_bar
    phase = int(epsilon * n_bar / 4.0)
    report = DriftReport(n_bar=n_bar, epsilon=epsilon, phase=phase)
    warmup = gen_uniform_mix(n_bar, 0, 1.0, seed)
    for label, split, gamma_mode in DRIFT_MODES:
        cfg = EngineConfig(
            capacity=capacity, epsilon=epsilon,
            proactive=ProactiveConfig(gamma=0.5, split_mode=split,
                                      gamma_mode=gamma_mode, kappa=kappa),
            seed=seed, metrics_every=0, audit_every=0)
        eng = Engine(cfg)
        for op in warmup:
            eng.apply(op.kind, op.value)
        eng.rebuild_all()
        table: dict[int, float] = {}
        overall = math.inf
        value = math.floor(min(op.value for op in warmup)) - 1.0
        for _ in range(phase):
            eng.apply("insert", value)
            value -= 1.0
            for depth, eta in eng.eta_by_depth().items():
                if eta < table.get(depth, math.inf):
                    table[depth] = eta
                if eta < overall:
                    overall = eta
        report.min_eta[label] = overall
        report.by_depth[label] = table
    if out_path:
        with open(out_path, "w", newline="\n") as fh:
            fh.write(report.csv())
    return report
