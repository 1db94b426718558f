"""Update-weight accounting, reallocation triggers, and budget-phase rounds.

Every allocated interval accumulates the levels of keys updated inside it
since its budget was stamped.  When that weight reaches a gamma fraction
of the slack promised at stamping time, the interval's parent subtree is
reallocated.  The adaptive mode additionally slices each budget phase into
rounds of geometrically shrinking widths toward both edges; inside a round
the children of the interval are re-split repeatedly, holding back a bonus
share of the slack proportional to the round width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .skiplist import Interval, Key, SkipTree

TOL = 1e-12


@dataclass
class ProactiveConfig:
    """Reallocation policy knobs.

    gamma is the trigger fraction (must stay at or below 1/2 so budgets can
    never be outgrown between triggers).  In invlog mode the effective
    gamma becomes min(1/2, gamma_scale / log2(n)) at every full rebuild.
    """

    gamma: float = 0.5
    split_mode: str = "adaptive"      # "smooth" | "adaptive"
    kappa: float = 8.0
    gamma_mode: str = "constant"      # "constant" | "invlog"
    gamma_scale: float = 1.0

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 0.5:
            raise ValueError(f"gamma must be in (0, 0.5], got {self.gamma}")
        if self.split_mode not in ("smooth", "adaptive"):
            raise ValueError(f"unknown split mode {self.split_mode!r}")
        if self.gamma_mode not in ("constant", "invlog"):
            raise ValueError(f"unknown gamma mode {self.gamma_mode!r}")
        if self.kappa <= 1.0:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.gamma_scale <= 0.0:
            raise ValueError("gamma_scale must be positive")

    def effective_gamma(self, n_bar: int) -> float:
        if self.gamma_mode == "invlog" and n_bar >= 3:
            return min(0.5, self.gamma_scale / math.log2(n_bar))
        if self.gamma_mode == "invlog":
            return 0.5
        return self.gamma


class ScheduleShape:
    """Size-independent round layout, shared by every schedule of one engine.

    ``frac[j]`` is round j's share of the phase weight and ``prefix[j]``
    the share completed at its end; both scale by the concrete phase
    weight.  One full shape (2J rounds, J = ceil(log2(kappa log2 N))) and
    one two-round fallback exist per parameter set.
    """

    __slots__ = ("frac", "prefix", "fair", "inv_gamma", "rounds")

    def __init__(self, frac: tuple, fair: tuple, gamma: float):
        total = math.fsum(frac)
        frac = (frac[0] + 1.0 - total,) + frac[1:]  # absorb rounding residue
        self.frac = frac
        acc = 0.0
        prefix = []
        for f in frac:
            acc += f
            prefix.append(acc)
        prefix[-1] = 1.0
        self.prefix = tuple(prefix)
        self.fair = fair
        self.inv_gamma = 1.0 / gamma
        self.rounds = len(frac)


_SHAPES: dict[tuple, tuple[ScheduleShape, ScheduleShape]] = {}


def schedule_shapes(gamma: float, capacity: int, kappa: float):
    """(full shape, degenerate two-round shape) for one parameter set."""
    key = (gamma, capacity, kappa)
    hit = _SHAPES.get(key)
    if hit is not None:
        return hit
    log_n = math.log2(capacity) if capacity >= 4 else 2.0
    J = max(2, math.ceil(math.log2(kappa * log_n)))
    half = [2.0 ** -J, 2.0 ** -J]
    for i in range(J - 1, 1, -1):
        half.append(2.0 ** -i)
    frac = tuple(half + half[::-1])
    fair = (True,) + (False,) * (len(frac) - 2) + (True,)
    full = ScheduleShape(frac, fair, gamma)
    degenerate = ScheduleShape((0.5, 0.5), (True, True), gamma)
    pair = (full, degenerate)
    _SHAPES[key] = pair
    return pair


class RoundSchedule:
    """Rounds of one budget phase.

    Widths sum to the phase weight (gamma times the slack at stamping);
    bonuses are widths / gamma so they sum to the full slack; the first
    and last rounds use the fair split.  ``idx`` is the current round and
    ``next_resplit`` the absolute update weight of the next in-round
    split.
    """

    __slots__ = ("phase_weight", "shape", "dd", "idx", "next_resplit")

    def __init__(self, phase_weight: float, d: int, shape: ScheduleShape):
        self.phase_weight = phase_weight
        self.shape = shape
        self.dd = 2.0 * max(1, d)
        self.idx = 0
        self.next_resplit = phase_weight * shape.frac[0] / self.dd

    @property
    def widths(self) -> list[float]:
        return [self.phase_weight * f for f in self.shape.frac]

    @property
    def bonuses(self) -> list[float]:
        g = self.shape.inv_gamma
        return [self.phase_weight * f * g for f in self.shape.frac]

    @property
    def ends(self) -> list[float]:
        return [self.phase_weight * p for p in self.shape.prefix]

    @property
    def steps(self) -> list[float]:
        return [self.phase_weight * f / self.dd for f in self.shape.frac]

    @property
    def fair(self) -> tuple:
        return self.shape.fair

    def pending(self, delta: float) -> Optional[str]:
        """Action required at accumulated update weight delta, if any."""
        if delta >= self.phase_weight - TOL:
            return "phase_end"
        if delta >= self.phase_weight * self.shape.prefix[self.idx] - TOL:
            return "round"
        if delta >= self.next_resplit - TOL:
            return "resplit"
        return None

    def consume(self, delta: float):
        """Advance the schedule past delta.

        Multiple boundaries crossed by one update coalesce into a single
        physical split.  Returns (kind, fair, bonus) for that split.
        """
        shape = self.shape
        phase = self.phase_weight
        prefix = shape.prefix
        kind = "round" if delta >= phase * prefix[self.idx] - TOL else "resplit"
        j = self.idx
        while phase * prefix[j] <= delta + TOL:
            j += 1
        self.idx = j
        width = phase * shape.frac[j]
        start = phase * prefix[j] - width
        step = width / self.dd
        nr = start + step * (math.floor((delta - start) / step) + 1.0)
        while nr <= delta + TOL:
            nr += step
        self.next_resplit = nr
        return kind, shape.fair[j], width * shape.inv_gamma


def build_round_schedule(delta_bar: float, gamma: float, d: int, capacity: int,
                         kappa: float) -> RoundSchedule:
    """Round schedule for a budget stamped with slack delta_bar.

    The phase spans gamma * delta_bar of update weight.  Each half of the
    phase holds rounds of widths phase/2**J, phase/2**J, phase/2**(J-1),
    ..., phase/4 ordered edge to center, with J = ceil(log2(kappa * log2
    capacity)).  Phases too short for that many rounds collapse to two
    fair rounds.
    """
    full, degenerate = schedule_shapes(gamma, capacity, kappa)
    phase = gamma * delta_bar
    shape = full if phase >= full.rounds else degenerate
    return RoundSchedule(phase, d, shape)


class ReallocationRequest(NamedTuple):
    trigger: Interval
    target: Optional[Interval]  # None: rebuild the whole allocation from the root


def record_update(tree: SkipTree, key: Key, gamma: float) -> list[Interval]:
    """Charge key.level to every allocated interval containing the key.

    Returns the intervals whose accumulated update weight now meets the
    trigger threshold, deepest first.
    """
    chain = tree.allocated_chain(key.value)
    lvl = key.level
    fired = []
    for node in chain:
        node.update_weight += lvl
        if node.update_weight >= gamma * node.slack_at_alloc - TOL:
            fired.append(node)
    fired.reverse()
    return fired


def fire_trigger(node: Interval) -> ReallocationRequest:
    """Reallocation request for a triggered interval: its parent's subtree
    is re-laid out inside the parent's existing budget; a triggered root
    escalates to a full rebuild."""
    return ReallocationRequest(node, node.parent)
