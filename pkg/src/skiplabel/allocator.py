"""Top-down budget splitting and the physical slot array.

Budgets are half-open fractional index ranges (a, b].  A split hands every
child the same slack per unit of weight, places one separator key between
consecutive child budgets, and leaves the rightmost slot of the parent
budget unused.  Recursion stops where a child would receive less than one
slot of slack; the stopped interval then stores all its keys as one
consecutive run at the leftmost slots of its budget.

Fractional positions are doubles; audits use a 1e-9 tolerance, far below
one slot at any reachable depth and budget size.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from .skiplist import Interval, collect_keys

log = logging.getLogger(__name__)

EPS = 1e-9
_NAN = float("nan")


class OverflowViolation(RuntimeError):
    """An allocation was attempted on an interval with slack below one slot."""


class SlotCollisionError(RuntimeError):
    """Rounded slots collided or escaped their budget."""


def ceil_slot(pos: float) -> int:
    """Integral slot for a fractional position (noise-tolerant ceiling)."""
    return math.ceil(pos - EPS)


def round_to_slots(fracs: list[float]) -> list[int]:
    """Integral slots for ascending fractional positions.

    Positions must keep at least one unit between neighbors (the spacing
    contract); the resulting slots are then distinct and order-preserving.
    """
    prev = None
    for f in fracs:
        if prev is not None and f - prev < 1.0 - EPS:
            raise SlotCollisionError(f"spacing below one slot at position {f}")
        prev = f
    return [ceil_slot(f) for f in fracs]


def smooth_partition(a: float, b: float, counts: list[int], weights: list[int]):
    """Smooth split of budget (a, b] among children with the given key
    counts and weights.

    Returns (budgets, separator_positions).  Every child receives slack
    (delta - 1) / (w - 1) per unit weight, so relative slacks are equal and
    the one-slot-per-separator plus one reserved slot account for the rest.
    """
    d = len(counts)
    key_total = sum(counts) + d - 1
    delta = (b - a) - key_total
    if d == 1:
        return [(a, b - 1.0)], []
    ratio = (delta - 1.0) / sum(weights)
    budgets = []
    seps = []
    pos = a
    for i in range(d):
        size = counts[i] + ratio * weights[i]
        budgets.append((pos, pos + size))
        if i < d - 1:
            pos = pos + size + 1.0
            seps.append(pos)
    return budgets, seps


def adaptive_partition(a: float, b: float, counts: list[int], weights: list[int],
                       bonus: float):
    """Bonus-reserving split: each child gets its fair share of the slack
    outside the bonus, plus an equal bonus/d share.

    With bonus == 0 this is exactly the smooth split.
    """
    d = len(counts)
    key_total = sum(counts) + d - 1
    delta = (b - a) - key_total
    if d == 1:
        return [(a, b - 1.0)], []
    ratio = ((delta - bonus) - 1.0) / sum(weights)
    share = bonus / d
    budgets = []
    seps = []
    pos = a
    for i in range(d):
        size = counts[i] + ratio * weights[i] + share
        budgets.append((pos, pos + size))
        if i < d - 1:
            pos = pos + size + 1.0
            seps.append(pos)
    return budgets, seps


class LabelArray:
    """Physical slots 1..m' plus the fractional position of each stored key.

    Slot writes go through rewrite_region, which replaces the whole content
    of one budget range at once and keeps the write counters: writes_total
    counts every key emitted by a reallocation (moved or not), writes_moved
    only the keys whose integral slot changed.
    """

    def __init__(self, m_prime: int):
        self.m_prime = m_prime
        self.keys = np.full(m_prime + 1, np.nan)   # index 0 unused
        self.fracs = np.full(m_prime + 1, np.nan)
        self.writes_total = 0
        self.writes_moved = 0

    def occupied(self):
        """(slots, key values) of all stored keys, in slot order."""
        slots = np.nonzero(~np.isnan(self.keys))[0]
        return slots, self.keys[slots]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.keys)))

    def rewrite_region(self, a: float, b: float, new_keys: list, new_fracs: list,
                       prior=None):
        """Replace the contents of budget range (a, b] with the given keys.

        The integral slots owned by (a, b] are ceil(a)+1 .. ceil(b): every
        position placed inside a budget lies at or beyond a+1, while the
        slot ceil(a) belongs to the separator key sitting at position a in
        the enclosing budget.

        Returns (emitted, moved).  ``prior`` optionally supplies the
        (slots, keys) to diff against instead of the region's current
        content (used when the whole array is rebuilt at a new size).
        """
        lo = ceil_slot(a) + 1
        hi = ceil_slot(b)
        emitted = len(new_keys)
        if prior is None and emitted <= 48 and hi - lo <= 512:
            return self._rewrite_small(lo, hi, new_keys, new_fracs)
        kview = self.keys[lo:hi + 1]
        fview = self.fracs[lo:hi + 1]
        if prior is None:
            occ = np.nonzero(~np.isnan(kview))[0]
            old_keys = kview[occ]
            old_slots = occ + lo
        else:
            old_slots, old_keys = prior
        nk = np.asarray(new_keys, dtype=np.float64)
        nf = np.asarray(new_fracs, dtype=np.float64)
        ns = np.ceil(nf - EPS).astype(np.int64)
        if nk.size:
            if not (ns[0] >= lo and ns[-1] <= hi and np.all(np.diff(ns) > 0)):
                raise SlotCollisionError(
                    f"slots escape ({lo},{hi}) or collide: {ns[:8]}...")
        if old_keys.size and nk.size:
            idx = np.searchsorted(old_keys, nk)
            idx_c = np.minimum(idx, old_keys.size - 1)
            same = old_keys[idx_c] == nk
            unmoved = int(np.count_nonzero(same & (np.asarray(old_slots)[idx_c] == ns)))
        else:
            unmoved = 0
        kview[:] = np.nan
        fview[:] = np.nan
        if nk.size:
            self.keys[ns] = nk
            self.fracs[ns] = nf
        moved = emitted - unmoved
        self.writes_total += emitted
        self.writes_moved += moved
        return emitted, moved

    def _rewrite_small(self, lo: int, hi: int, new_keys: list, new_fracs: list):
        # scalar path: numpy call overhead dominates tiny regions
        keys = self.keys
        fracs = self.fracs
        old: list[tuple[float, int]] = []
        for s in range(lo, hi + 1):
            k = keys[s]
            if k == k:
                old.append((k, s))
                keys[s] = _NAN
                fracs[s] = _NAN
        ceil = math.ceil
        unmoved = 0
        j = 0
        n_old = len(old)
        prev = lo - 1
        for k, f in zip(new_keys, new_fracs):
            s = ceil(f - EPS)
            if s <= prev or s > hi:
                raise SlotCollisionError(f"slot {s} escapes ({lo},{hi}) or collides")
            prev = s
            keys[s] = k
            fracs[s] = f
            while j < n_old and old[j][0] < k:
                j += 1
            if j < n_old and old[j][0] == k:
                if old[j][1] == s:
                    unmoved += 1
                j += 1
        emitted = len(new_keys)
        moved = emitted - unmoved
        self.writes_total += emitted
        self.writes_moved += moved
        return emitted, moved

    def write_keys(self, targets: list[tuple[float, int]]):
        """Place keys at explicit integral slots, clearing any old copies.

        Diagnostic surface; reallocation traffic goes through
        rewrite_region.  Counts every target as emitted and the ones whose
        slot changed (or that were absent) as moved.
        """
        seen = set()
        for _, slot in targets:
            if not 1 <= slot <= self.m_prime or slot in seen:
                raise SlotCollisionError(f"bad or duplicate slot {slot}")
            seen.add(slot)
        moved = 0
        slots, keys = self.occupied()
        old = {float(k): int(s) for s, k in zip(slots, keys)}
        for key, slot in targets:
            prev = old.get(key)
            if prev is not None and prev != slot:
                self.keys[prev] = _NAN
                self.fracs[prev] = _NAN
            if prev != slot:
                moved += 1
            self.keys[slot] = key
            self.fracs[slot] = float(slot)
        self.writes_total += len(targets)
        self.writes_moved += moved
        return len(targets), moved

    def audit(self) -> list[str]:
        """Order, spacing, range, and rounding consistency of the array."""
        bad: list[str] = []
        slots, keys = self.occupied()
        if slots.size == 0:
            return bad
        if slots[0] < 1 or slots[-1] > self.m_prime:
            bad.append(f"slot out of range: {slots[0]}..{slots[-1]}")
        if not np.all(np.diff(keys) > 0):
            i = int(np.nonzero(~(np.diff(keys) > 0))[0][0])
            bad.append(f"ordering violated near slot {slots[i + 1]}")
        fr = self.fracs[slots]
        if np.any(np.isnan(fr)):
            bad.append("occupied slot without fractional position")
        else:
            gaps = np.diff(fr)
            if fr.size > 1 and not np.all(gaps >= 1.0 - EPS):
                i = int(np.nonzero(gaps < 1.0 - EPS)[0][0])
                bad.append(f"spacing violated between slots {slots[i]} and {slots[i + 1]}")
            rounded = np.ceil(fr - EPS).astype(np.int64)
            if not np.all(rounded == slots):
                bad.append("slot does not match rounded fractional position")
        return bad

    def snapshot_csv(self) -> str:
        """CSV export, one line per occupied slot."""
        slots, keys = self.occupied()
        lines = ["slot_index,key_value"]
        for s, k in zip(slots.tolist(), keys.tolist()):
            lines.append(f"{s},{k!r}")
        return "\n".join(lines) + "\n"


class BudgetAllocator:
    """Executes top-down (re)allocations of interval subtrees into the array.

    One instance is owned by one engine.  Stamped intervals start with no
    round schedule; the engine attaches one lazily when an interval first
    needs its boundaries checked.
    """

    def __init__(self, array: Optional[LabelArray] = None):
        self.array = array
        self.alloc_events = 0      # budget stampings, each audited for slack >= 1
        self.degenerate_fairs = 0  # bonus splits that fell back to the fair formula

    # -- full subtree reallocation ------------------------------------

    def allocate(self, node: Interval, a: float, b: float, prior=None):
        """Re-lay out node's whole subtree inside (a, b].

        Stamps a fresh snapshot (update weight zero) on every interval that
        stays allocated and unmarks everything below a terminated interval.
        Returns (emitted, moved) write counts.
        """
        out_k: list = []
        out_f: list = []
        self._layout(node, a, b, out_k, out_f)
        return self.array.rewrite_region(a, b, out_k, out_f, prior=prior)

    def _layout(self, node: Interval, a: float, b: float, out_k: list, out_f: list):
        kc = node.key_count
        delta = b - a - kc
        if delta < 1.0 - EPS:
            raise OverflowViolation(
                f"slack {delta:.9f} < 1 allocating level-{node.level} "
                f"interval ({node.lo:g}, {node.hi:g})")
        self.alloc_events += 1
        node.allocated = True
        node.a = a
        node.b = b
        node.keys_at_alloc = kc
        node.weight_at_alloc = node.weight
        node.slack_at_alloc = delta
        node.update_weight = 0
        node.schedule = None
        node.bonus_coeff = None
        cs = node.children
        if not cs:
            node.is_run = False
            return
        d = len(cs)
        if d == 1:
            c = cs[0]
            if (b - 1.0) - a - c.key_count < 1.0 - EPS:
                self._make_run(node, a, out_k, out_f)
                return
            node.is_run = False
            self._layout(c, a, b - 1.0, out_k, out_f)
            return
        ratio = (delta - 1.0) / (node.weight - 1)
        minw = cs[0].weight
        for c in cs:
            if c.weight < minw:
                minw = c.weight
        if ratio * minw < 1.0 - EPS:
            self._make_run(node, a, out_k, out_f)
            return
        node.is_run = False
        pos = a
        last = d - 1
        for i in range(d):
            c = cs[i]
            size = c.key_count + ratio * c.weight
            self._layout(c, pos, pos + size, out_k, out_f)
            if i < last:
                pos = pos + size + 1.0
                out_k.append(c.hi)
                out_f.append(pos)

    def _make_run(self, node: Interval, a: float, out_k: list, out_f: list):
        """Store all keys of node as one consecutive run, leftmost."""
        node.is_run = True
        node.schedule = None
        stack = [c for c in node.children if c.allocated]
        while stack:
            v = stack.pop()
            v.allocated = False
            v.schedule = None
            for c in v.children:
                if c.allocated:
                    stack.append(c)
        start = len(out_k)
        if node.key_count:
            collect_keys(node, out_k)
        pos = a + 1.0
        for _ in range(len(out_k) - start):
            out_f.append(pos)
            pos += 1.0

    # -- mid-phase re-split of one interval's children ----------------

    def resplit(self, node: Interval, bonus: float, fair: bool):
        """Re-partition node's children inside node's existing budget.

        Children subtrees are re-laid out smoothly within their new budgets
        and get fresh snapshots; node's own snapshot, update weight, and
        round schedule are left untouched.  Falls back to the fair formula
        when the bonus does not fit, and to a consecutive run when even the
        fair split would leave a child below one slot of slack.
        """
        a, b = node.a, node.b
        kc = node.key_count
        delta = b - a - kc
        if delta < 1.0 - EPS:
            raise OverflowViolation(
                f"slack {delta:.9f} < 1 re-splitting level-{node.level} interval")
        cs = node.children
        d = len(cs)
        use_fair = fair
        if not use_fair and delta - bonus < 1.0:
            use_fair = True
            self.degenerate_fairs += 1
            log.debug("bonus %.3f does not fit in slack %.3f; fair fallback", bonus, delta)
        wsum = node.weight - 1
        out_k: list = []
        out_f: list = []
        for _ in range(2):
            if use_fair:
                ratio = (delta - 1.0) / wsum
                share = 0.0
            else:
                ratio = ((delta - bonus) - 1.0) / wsum
                share = bonus / d
            ok = True
            for c in cs:
                if ratio * c.weight + share < 1.0 - EPS:
                    ok = False
                    break
            if ok:
                break
            if use_fair:
                # even the fair split terminates: collapse to a run without
                # touching node's own snapshot or phase progress
                node.bonus_coeff = None
                self._make_run(node, a, out_k, out_f)
                return self.array.rewrite_region(a, b, out_k, out_f)
            use_fair = True
            self.degenerate_fairs += 1
        node.bonus_coeff = None if use_fair else ratio
        pos = a
        last = d - 1
        for i in range(d):
            c = cs[i]
            size = c.key_count + ratio * c.weight + share
            self._layout(c, pos, pos + size, out_k, out_f)
            if i < last:
                pos = pos + size + 1.0
                out_k.append(c.hi)
                out_f.append(pos)
        return self.array.rewrite_region(a, b, out_k, out_f)


def audit_budgets(root: Interval) -> list[str]:
    """Nesting audit over all allocated intervals.

    Checks that child budgets tile the parent budget (one slot per
    separator, one reserved at the right end), that snapshots promise at
    least one slot of slack, and that allocation status is consistent with
    run ownership.
    """
    bad: list[str] = []
    if not root.allocated:
        return ["root is not allocated"]
    stack = [root]
    while stack:
        node = stack.pop()
        if node.slack_at_alloc < 1.0 - EPS:
            bad.append(f"allocation snapshot below one slot at {node!r}")
        if node.b - node.a - node.key_count < 1.0 - EPS:
            bad.append(f"current slack below one slot at {node!r}")
        cs = node.children
        if not cs:
            continue
        alloc_children = [c for c in cs if c.allocated]
        if node.is_run:
            if alloc_children:
                bad.append(f"run owner with allocated children at {node!r}")
            continue
        if len(alloc_children) != len(cs):
            bad.append(f"split interval with non-allocated children at {node!r}")
            continue
        if abs(cs[0].a - node.a) > EPS:
            bad.append(f"first child budget does not start the parent's at {node!r}")
        if abs(cs[-1].b - (node.b - 1.0)) > 1e-6:
            bad.append(f"last child budget does not end one below the parent's at {node!r}")
        for i in range(len(cs) - 1):
            if abs(cs[i + 1].a - (cs[i].b + 1.0)) > 1e-6:
                bad.append(f"missing separator slot between children of {node!r}")
        stack.extend(cs)
    return bad
