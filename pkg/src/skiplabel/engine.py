"""Facade tying structure updates, budgets, triggers, and metrics together.

One engine owns one skip tree, one slot array, and one allocator.  Every
update runs the same pipeline: periodic-rebuild check, structural change,
update-weight charging, reallocation of the parent of the lowest allocated
interval containing the key, then trigger/round processing until no
allocated ancestor has a pending action.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, fields
from typing import Optional

from .allocator import (EPS, BudgetAllocator, LabelArray, OverflowViolation,
                        audit_budgets)
from .proactive import (TOL, ProactiveConfig, RoundSchedule, fire_trigger,
                        record_update, schedule_shapes)
from .skiplist import (DuplicateKeyError, Interval, Key, MissingKeyError,
                       SkipTree, sample_level)


class ConfigError(ValueError):
    """Invalid engine configuration."""


class CapacityError(RuntimeError):
    """An insert would push the key count past the configured capacity."""


class AuditFailure(RuntimeError):
    """A self-audit found an invariant violation."""


@dataclass
class EngineConfig:
    capacity: int                      # largest key count the array is sized for
    epsilon: float = 1.0               # extra space fraction; array has capacity*(1+epsilon) slots
    proactive: ProactiveConfig = field(default_factory=ProactiveConfig)
    seed: int = 0
    metrics_every: int = 64            # min-relative-slack sampling stride (0: off)
    audit_every: int = 0               # full self-audit stride (0: off; test mode)
    record_events: bool = False        # keep one event tuple per reallocation

    def validate(self) -> None:
        if self.capacity < 1:
            raise ConfigError(f"capacity must be positive, got {self.capacity}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        try:
            self.proactive.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class Metrics:
    steps: int = 0
    writes_total: int = 0
    writes_moved: int = 0
    parent_reallocs: int = 0
    trigger_reallocs: int = 0
    resplits: int = 0
    round_splits: int = 0
    rebuilds: int = 0
    eta_min: float = math.inf   # smallest sampled relative slack
    alloc_events: int = 0       # budget stampings, each checked for slack >= 1
    degenerate_fairs: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


EVENT_FIELDS = ("step", "kind", "interval_level", "subtree_keys", "delta",
                "deltaBar", "eps_before", "eps_after")


class Engine:
    """Sorted-array label maintenance over a skip-list interval tree."""

    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        self.m = config.capacity + math.ceil(config.epsilon * config.capacity)
        self.tree = SkipTree()
        self.rng = random.Random(config.seed)
        self.array: Optional[LabelArray] = None
        self.allocator = BudgetAllocator(None)
        self.adaptive = config.proactive.split_mode == "adaptive"
        self.gamma = config.proactive.effective_gamma(0)
        self._shapes = schedule_shapes(self.gamma, config.capacity,
                                       config.proactive.kappa)
        self.n_bar = 0
        self.m_prime = 0
        self.updates_since_rebuild = 0
        self.metrics = Metrics()
        self.events: list[tuple] = []

    # -- basic accessors ----------------------------------------------

    @property
    def n(self) -> int:
        return self.tree.n

    def phase_limit(self) -> int:
        return int(self.config.epsilon * self.n_bar / 4.0)

    def dump(self) -> str:
        return self.tree.dump()

    # -- update pipeline ----------------------------------------------

    def insert(self, value: float):
        return self.apply("insert", value)

    def delete(self, value: float):
        return self.apply("delete", value)

    def apply(self, kind: str, value: float):
        """Process one update; returns (keys written, keys moved)."""
        value = float(value)
        tree = self.tree
        if kind == "insert":
            if value in tree.key_level:
                raise DuplicateKeyError(value)
            if tree.n >= self.config.capacity:
                raise CapacityError(
                    f"insert at n={tree.n} exceeds capacity {self.config.capacity}")
        elif kind == "delete":
            if value not in tree.key_level:
                raise MissingKeyError(value)
        else:
            raise ValueError(f"unknown op kind {kind!r}")
        m = self.metrics
        w0, mv0 = m.writes_total, m.writes_moved

        # (1) rebuild before the update that would close the phase or
        # stretch the key count past the rebuild window
        need = self.array is None or self.updates_since_rebuild >= self.phase_limit()
        if not need and kind == "insert":
            need = (tree.n + 1) > (1.0 + self.config.epsilon / 4.0) * self.n_bar
        if need:
            self.rebuild_all()

        # (2) structural change
        if kind == "insert":
            key = Key(value, sample_level(self.rng))
            tree.insert_key(key)
        else:
            key = Key(value, tree.key_level[value])
            tree.delete_key(value)
        self.updates_since_rebuild += 1
        m.steps += 1

        # (3) charge the update weight to every allocated ancestor
        record_update(tree, key, self.gamma)

        # (4) reallocate the parent of the lowest allocated interval
        # containing the key (the root reallocates in place)
        chain = tree.allocated_chain(value)
        if len(chain) <= 1:
            self._realloc(tree.root, "parent")
        else:
            self._realloc(chain[-2], "parent")
        m.parent_reallocs += 1

        # (5) triggers and round actions, deepest first, until quiescent
        self._drain_pending(value)

        s = m.steps
        if self.config.metrics_every and s % self.config.metrics_every == 0:
            self.compute_eta()
        if self.config.audit_every and s % self.config.audit_every == 0:
            ok, violations = self.verify()
            if not ok:
                raise AuditFailure("; ".join(violations[:4]))
        return m.writes_total - w0, m.writes_moved - mv0

    def _realloc(self, node: Interval, tag: str, focus: Optional[Interval] = None):
        root = node is self.tree.root
        a, b = (0.0, float(self.m_prime)) if root else (node.a, node.b)
        rec = self.config.record_events
        if rec:
            f = focus or node
            delta_before = f.update_weight
            bar = f.slack_at_alloc
            eps_before = f.relative_slack() if f.allocated else math.nan
        emitted, moved = self.allocator.allocate(node, a, b)
        self.metrics.writes_total += emitted
        self.metrics.writes_moved += moved
        if rec:
            f = focus or node
            self.events.append((self.metrics.steps, tag, f.level, f.key_count,
                                delta_before, bar, eps_before, f.relative_slack()))
        return emitted, moved

    def _drain_pending(self, value: float) -> None:
        gamma = self.gamma
        adaptive = self.adaptive
        full, degenerate = self._shapes
        m = self.metrics
        while True:
            chain = self.tree.allocated_chain(value)
            target = None
            for i in range(len(chain) - 1, -1, -1):
                v = chain[i]
                dw = v.update_weight
                if dw >= gamma * v.slack_at_alloc - TOL:
                    target = v
                    action = "phase_end"
                    break
                if not adaptive or v.is_run or not v.children or not dw:
                    continue
                sched = v.schedule
                if sched is None:
                    phase = gamma * v.slack_at_alloc
                    shape = full if phase >= full.rounds else degenerate
                    sched = v.schedule = RoundSchedule(phase, len(v.children), shape)
                if sched.pending(dw):
                    target = v
                    action = "sched"
                    break
            if target is None:
                return
            if action == "phase_end":
                req = fire_trigger(target)
                if req.target is None:
                    self.rebuild_all()
                else:
                    self._realloc(req.target, "trigger", focus=target)
                m.trigger_reallocs += 1
            else:
                kind, fair, bonus = target.schedule.consume(target.update_weight)
                rec = self.config.record_events
                if rec:
                    eps_before = target.relative_slack()
                emitted, moved = self.allocator.resplit(target, bonus, fair)
                m.writes_total += emitted
                m.writes_moved += moved
                if kind == "round":
                    m.round_splits += 1
                else:
                    m.resplits += 1
                if rec:
                    self.events.append(
                        (m.steps, kind, target.level, target.key_count,
                         target.update_weight, target.slack_at_alloc,
                         eps_before, target.relative_slack()))

    # -- rebuilds and metrics -----------------------------------------

    def rebuild_all(self):
        """Full rebuild: refit the used slot range to the current key count
        and re-lay out everything from the root."""
        cfg = self.config
        n = self.tree.n
        self.n_bar = n
        # the max() only binds in the tiny regime (every update rebuilds);
        # it keeps one slot of slack for the insert that follows a rebuild
        self.m_prime = min(
            self.m,
            max(n + 2, math.ceil((1.0 + cfg.epsilon) * (1.0 + cfg.epsilon / 4.0) * n)))
        gamma = cfg.proactive.effective_gamma(n)
        if gamma != self.gamma:
            self.gamma = gamma
            self._shapes = schedule_shapes(gamma, cfg.capacity, cfg.proactive.kappa)
        prior = self.array.occupied() if self.array is not None else None
        self.array = LabelArray(self.m_prime)
        alloc = self.allocator
        alloc.array = self.array
        self.updates_since_rebuild = 0
        root = self.tree.root
        rec = self.config.record_events
        if rec:
            eps_before = root.relative_slack() if root.allocated else math.nan
            delta_before = root.update_weight
            bar = root.slack_at_alloc
        emitted, moved = alloc.allocate(root, 0.0, float(self.m_prime), prior=prior)
        self.metrics.writes_total += emitted
        self.metrics.writes_moved += moved
        self.metrics.rebuilds += 1
        self.metrics.alloc_events = alloc.alloc_events
        if rec:
            self.events.append((self.metrics.steps, "rebuild", root.level,
                                root.key_count, delta_before, bar, eps_before,
                                root.relative_slack()))
        return emitted, moved

    def compute_eta(self) -> float:
        """Smallest relative slack over all allocated intervals."""
        best = math.inf
        stack = [self.tree.root]
        while stack:
            v = stack.pop()
            e = (v.b - v.a - v.key_count) / v.weight
            if e < best:
                best = e
            if not v.is_run:
                for c in v.children:
                    if c.allocated:
                        stack.append(c)
        if best < self.metrics.eta_min:
            self.metrics.eta_min = best
        self.metrics.alloc_events = self.allocator.alloc_events
        return best

    def eta_by_depth(self) -> dict[int, float]:
        """Smallest relative slack per tree depth (root is depth 0)."""
        out: dict[int, float] = {}
        rl = self.tree.root.level
        stack = [self.tree.root]
        while stack:
            v = stack.pop()
            d = rl - v.level
            e = (v.b - v.a - v.key_count) / v.weight
            if e < out.get(d, math.inf):
                out[d] = e
            if not v.is_run:
                for c in v.children:
                    if c.allocated:
                        stack.append(c)
        return out

    # -- audits ---------------------------------------------------------

    def verify(self) -> tuple[bool, list[str]]:
        """Run all module audits; returns (ok, violations)."""
        self.metrics.alloc_events = self.allocator.alloc_events
        self.metrics.degenerate_fairs = self.allocator.degenerate_fairs
        bad = self.tree.audit()
        if self.array is None:
            return (not bad, bad)
        bad += self.array.audit()
        slots, stored = self.array.occupied()
        if stored.size != self.tree.n:
            bad.append(f"array holds {stored.size} keys, tree has {self.tree.n}")
        else:
            expected = sorted(self.tree.key_level)
            for i in range(stored.size):
                if stored[i] != expected[i]:
                    bad.append(f"array content diverges at slot {slots[i]}")
                    break
        bad += audit_budgets(self.tree.root)
        bad += self._audit_density()
        return (not bad, bad)

    def _audit_density(self) -> list[str]:
        eps = self.config.epsilon
        n, n_bar, mp = self.tree.n, self.n_bar, self.m_prime
        if mp < 1 or self.phase_limit() < 1:
            # below n_bar = 4/epsilon every update rebuilds and one insert
            # overshoots the window fraction; the window is vacuous there
            return []
        bad = []
        ratio = n / mp
        if ratio > 1.0 - eps / (1.0 + eps) + EPS:
            bad.append(f"density {ratio:.4f} above the rebuild window")
        floor = (1.0 - eps / 4.0) / ((1.0 + eps) * (1.0 + eps / 4.0) + 1.0 / n_bar)
        if ratio < floor - EPS:
            bad.append(f"density {ratio:.4f} below the rebuild window")
        if floor > 1.0 - 2.0 * eps and ratio <= 1.0 - 2.0 * eps:
            bad.append(f"density {ratio:.4f} not above 1 - 2*epsilon")
        return bad

    def events_csv(self) -> str:
        lines = [",".join(EVENT_FIELDS)]
        for ev in self.events:
            step, kind, lvl, kc, delta, bar, eb, ea = ev
            fmt = lambda x: "" if x != x else f"{x:.6g}"  # nan -> empty
            lines.append(f"{step},{kind},{lvl},{kc},{fmt(delta)},{fmt(bar)},"
                         f"{fmt(eb)},{fmt(ea)}")
        return "\n".join(lines) + "\n"
