"""Deterministic, seed-replayable request generators.

Each generator tracks its own key set while emitting the trace, so every
trace is valid by construction (no duplicate inserts, no missing deletes)
and fully determined by its parameters and seed.  Values are synthesized
by rank: a uniform-rank insert picks one of the n+1 gaps uniformly and
takes a point inside it (unbounded gaps use unit offsets).
"""
from __future__ import annotations

import csv
import io
import random
from bisect import bisect_left
from collections import deque
from typing import Iterable, NamedTuple


class WorkloadOp(NamedTuple):
    kind: str     # "insert" | "delete"
    value: float


class TraceError(ValueError):
    """A generator could not produce a valid next operation."""


def _as_rng(rng) -> random.Random:
    return rng if isinstance(rng, random.Random) else random.Random(rng)


def _gap_value(keys: list[float], gap: int) -> float | None:
    """A fresh value inside the gap-th of the n+1 gaps, or None if the gap
    has no representable interior point left."""
    n = len(keys)
    if n == 0:
        return 0.0
    if gap == 0:
        return keys[0] - 1.0
    if gap == n:
        return keys[-1] + 1.0
    lo, hi = keys[gap - 1], keys[gap]
    mid = lo + (hi - lo) / 2.0
    return mid if lo < mid < hi else None


def _insert_uniform_rank(keys: list[float], rng: random.Random) -> float:
    """Insert a value at a uniformly random rank; returns the value."""
    n = len(keys)
    for _ in range(64):
        gap = rng.randrange(n + 1)
        v = _gap_value(keys, gap)
        if v is not None:
            keys.insert(gap, v)
            return v
    for gap in range(n + 1):  # deterministic fallback: first splittable gap
        v = _gap_value(keys, gap)
        if v is not None:
            keys.insert(gap, v)
            return v
    raise TraceError("no splittable gap left")


def gen_front_insert(steps: int) -> list[WorkloadOp]:
    """Insert-only trace of strictly decreasing values 0, -1, -2, ..."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    return [WorkloadOp("insert", float(-i)) for i in range(steps)]


def gen_delete_max_insert_random(warmup_n: int, steps: int, rng) -> list[WorkloadOp]:
    """warmup_n uniform-rank inserts, then steps operations alternating
    (delete the current maximum, insert at a uniform rank)."""
    if warmup_n < 1:
        raise ValueError("warmup_n must be at least 1")
    rng = _as_rng(rng)
    keys: list[float] = []
    ops: list[WorkloadOp] = []
    for _ in range(warmup_n):
        ops.append(WorkloadOp("insert", _insert_uniform_rank(keys, rng)))
    for i in range(steps):
        if i % 2 == 0:
            ops.append(WorkloadOp("delete", keys.pop()))
        else:
            ops.append(WorkloadOp("insert", _insert_uniform_rank(keys, rng)))
    return ops


def gen_uniform_mix(warmup_n: int, steps: int, p_insert: float, rng,
                    n_max: int | None = None) -> list[WorkloadOp]:
    """warmup_n uniform-rank inserts, then a coin-flip mix of uniform-rank
    inserts and uniform deletes; clamps instead of emptying the set or
    exceeding n_max."""
    if not 0.0 <= p_insert <= 1.0:
        raise ValueError("p_insert must be in [0, 1]")
    rng = _as_rng(rng)
    keys: list[float] = []
    ops: list[WorkloadOp] = []
    for _ in range(warmup_n):
        ops.append(WorkloadOp("insert", _insert_uniform_rank(keys, rng)))
    for _ in range(steps):
        do_insert = rng.random() < p_insert
        if not keys:
            do_insert = True
        elif n_max is not None and len(keys) >= n_max:
            do_insert = False
        if do_insert:
            ops.append(WorkloadOp("insert", _insert_uniform_rank(keys, rng)))
        else:
            ops.append(WorkloadOp("delete", keys.pop(rng.randrange(len(keys)))))
    return ops


def gen_hammer(rank_fraction: float, steps: int, rng, warmup_n: int = 0,
               n_max: int | None = None) -> list[WorkloadOp]:
    """Concentrate inserts at one rank region; once the set reaches its
    bound, the oldest hammered key is deleted before each further insert.

    rank_fraction 0 degenerates to front insertion (each insert is a new
    minimum); 0.5 keeps hammering the median region.
    """
    if not 0.0 <= rank_fraction <= 1.0:
        raise ValueError("rank_fraction must be in [0, 1]")
    rng = _as_rng(rng)
    keys: list[float] = []
    ops: list[WorkloadOp] = []
    fifo: deque[float] = deque()
    for _ in range(warmup_n):
        ops.append(WorkloadOp("insert", _insert_uniform_rank(keys, rng)))
    cap = n_max if n_max is not None else warmup_n + 512
    cap = max(cap, warmup_n + 2, 2)
    i = 0
    while i < steps:
        if len(keys) >= cap and fifo:
            v = fifo.popleft()
            keys.pop(bisect_left(keys, v))
            ops.append(WorkloadOp("delete", v))
            i += 1
            if i >= steps:
                break
        gap = round(rank_fraction * len(keys))
        v = None
        for g in _spiral(gap, len(keys)):
            v = _gap_value(keys, g)
            if v is not None:
                keys.insert(g, v)
                break
        if v is None:
            raise TraceError("no splittable gap near the hammer rank")
        fifo.append(v)
        ops.append(WorkloadOp("insert", v))
        i += 1
    return ops


def _spiral(center: int, n: int) -> Iterable[int]:
    """Gap indices by distance from center: center, center+1, center-1, ..."""
    yield center
    for d in range(1, n + 2):
        if center + d <= n:
            yield center + d
        if center - d >= 0:
            yield center - d


def trace_csv(ops: Iterable[WorkloadOp]) -> str:
    buf = io.StringIO()
    buf.write("step,kind,value\n")
    for i, op in enumerate(ops):
        buf.write(f"{i},{op.kind},{op.value!r}\n")
    return buf.getvalue()


def write_trace(path: str, ops: Iterable[WorkloadOp]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(trace_csv(ops))


def read_trace(path: str) -> list[WorkloadOp]:
    ops: list[WorkloadOp] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            kind = row["kind"]
            if kind not in ("insert", "delete"):
                raise TraceError(f"bad op kind {kind!r} at step {row['step']}")
            ops.append(WorkloadOp(kind, float(row["value"])))
    return ops


def check_trace(ops: Iterable[WorkloadOp], n_max: int | None = None) -> int:
    """Validate a trace (no duplicate inserts, no missing deletes, optional
    size bound); returns the peak key count."""
    present: set[float] = set()
    peak = 0
    for i, op in enumerate(ops):
        if op.kind == "insert":
            if op.value in present:
                raise TraceError(f"duplicate insert of {op.value} at step {i}")
            present.add(op.value)
        else:
            if op.value not in present:
                raise TraceError(f"delete of missing {op.value} at step {i}")
            present.remove(op.value)
        if len(present) > peak:
            peak = len(present)
        if n_max is not None and peak > n_max:
            raise TraceError(f"trace exceeds n_max={n_max} at step {i}")
    return peak
