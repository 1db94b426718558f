"""Skip-list gradation of a key set and the interval tree it induces.

The tree keeps one node per open interval per level.  Level-1 intervals
contain no keys; an interval one level up spans a maximal run of lower
intervals and owns the boundary keys between consecutive children.  Node
weights count the intervals of the subtree and are maintained
incrementally, so updates cost O(path length) and a full audit is
O(nodes).

The tree always keeps exactly one empty top level: the root spans
(-inf, +inf) and no key reaches the root's level.  Budget bookkeeping
fields live directly on the nodes; they are written by the allocator and
engine, never here.
"""
from __future__ import annotations

import random
from typing import NamedTuple, Optional

NEG_INF = float("-inf")
POS_INF = float("inf")

MAX_LEVEL = 64  # Pr[level > 64] < 2**-64, far beyond any realistic tree height


class DuplicateKeyError(KeyError):
    """Inserting a key value that is already present."""


class MissingKeyError(KeyError):
    """Deleting a key value that is not present."""


class Key(NamedTuple):
    value: float
    level: int


class StructuralChange(NamedTuple):
    key: Key
    kind: str       # "insert" | "delete"
    touched: list   # per level 1..key.level: (old, new_left, new_right) or (old_left, old_right, merged)


def sample_level(rng: random.Random) -> int:
    """Draw a tower level with Pr[level = i] = 2**-i, capped at MAX_LEVEL."""
    bits = rng.getrandbits(MAX_LEVEL)
    if bits == 0:
        return MAX_LEVEL
    return (bits & -bits).bit_length()


class Interval:
    """One open interval of the tree plus its budget bookkeeping.

    ``a``/``b`` hold the half-open budget (a, b] while ``allocated`` is
    set.  ``is_run`` marks intervals whose keys are stored as one
    consecutive run (their descendants are non-allocated).  The
    ``*_at_alloc`` fields snapshot the state at the time the budget was
    assigned; ``update_weight`` accumulates the levels of keys updated
    inside the interval since then.
    """

    __slots__ = (
        "level", "lo", "hi", "parent", "children", "key_count", "weight",
        "allocated", "is_run", "a", "b",
        "keys_at_alloc", "weight_at_alloc", "slack_at_alloc", "update_weight",
        "schedule", "bonus_coeff",
    )

    def __init__(self, level: int, lo: float, hi: float):
        self.level = level
        self.lo = lo
        self.hi = hi
        self.parent: Optional[Interval] = None
        self.children: list[Interval] = []
        self.key_count = 0
        self.weight = 1 if level == 1 else level  # empty interval: weight equals level
        self.allocated = False
        self.is_run = False
        self.a = 0.0
        self.b = 0.0
        self.keys_at_alloc = 0
        self.weight_at_alloc = 0
        self.slack_at_alloc = 0.0
        self.update_weight = 0
        self.schedule = None
        self.bonus_coeff = None  # fair-share coefficient of the last bonus split

    def adopt(self, children: list["Interval"]) -> None:
        """Attach children and recompute key count and weight from them."""
        self.children = children
        w = 1
        kc = len(children) - 1  # one separator key between consecutive children
        for c in children:
            c.parent = self
            w += c.weight
            kc += c.key_count
        self.weight = w
        self.key_count = kc

    @property
    def separators(self) -> list[float]:
        return [c.hi for c in self.children[:-1]]

    def relative_slack(self) -> float:
        return (self.b - self.a - self.key_count) / self.weight

    def __repr__(self) -> str:
        return (f"Interval(level={self.level}, ({self.lo}, {self.hi}), "
                f"kc={self.key_count}, w={self.weight})")


def _child_index(children: list[Interval], value: float) -> int:
    """Index of the first child whose upper bound exceeds value.

    For a value that is not a boundary this is the child containing it;
    for a boundary key it is the right sibling of the boundary.
    """
    n = len(children)
    if n <= 8:
        for i in range(n - 1):
            if value < children[i].hi:
                return i
        return n - 1
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if children[mid].hi <= value:
            lo = mid + 1
        else:
            hi = mid
    return lo


def collect_keys(node: Interval, out: list) -> None:
    """Append the key values inside node, in increasing order."""
    cs = node.children
    last = len(cs) - 1
    for i in range(last + 1):
        c = cs[i]
        if c.key_count:
            collect_keys(c, out)
        if i < last:
            out.append(c.hi)


class SkipTree:
    """The leveled key gradation, stored as its interval tree."""

    __slots__ = ("root", "key_level")

    def __init__(self):
        self.root = Interval(1, NEG_INF, POS_INF)
        self.key_level: dict[float, int] = {}

    @property
    def n(self) -> int:
        return len(self.key_level)

    def level_of(self, value: float) -> int:
        return self.key_level[value]

    def _grow_root(self) -> None:
        new = Interval(self.root.level + 1, NEG_INF, POS_INF)
        new.children = [self.root]
        self.root.parent = new
        new.key_count = self.root.key_count
        new.weight = 1 + self.root.weight
        self.root = new

    def insert_key(self, key: Key) -> StructuralChange:
        """Insert a key, splitting one interval on each level up to key.level."""
        value, level = key.value, key.level
        if value in self.key_level:
            raise DuplicateKeyError(value)
        if value != value or value in (NEG_INF, POS_INF):
            raise ValueError(f"key value must be finite, got {value!r}")
        if not 1 <= level <= MAX_LEVEL:
            raise ValueError(f"level out of range: {level}")
        while self.root.level <= level:
            self._grow_root()
        path: list[tuple[Interval, int]] = []
        node = self.root
        while node.level > 1:
            i = _child_index(node.children, value)
            path.append((node, i))
            node = node.children[i]
        touched = []
        left = Interval(1, node.lo, value)
        right = Interval(1, value, node.hi)
        touched.append((node, left, right))
        for lvl in range(2, level + 1):
            parent, idx = path[len(path) - (lvl - 1)]
            l = Interval(lvl, parent.lo, value)
            r = Interval(lvl, value, parent.hi)
            l.adopt(parent.children[:idx] + [left])
            r.adopt([right] + parent.children[idx + 1:])
            touched.append((parent, l, r))
            left, right = l, r
        host, idx = path[len(path) - level]
        host.children[idx:idx + 1] = [left, right]
        left.parent = right.parent = host
        host.key_count += 1
        host.weight += level
        for k in range(len(path) - level):
            anc = path[k][0]
            anc.key_count += 1
            anc.weight += level
        self.key_level[value] = level
        return StructuralChange(key, "insert", touched)

    def delete_key(self, value: float) -> StructuralChange:
        """Delete a key, merging one interval pair on each level it reached."""
        level = self.key_level.pop(value, None)
        if level is None:
            raise MissingKeyError(value)
        path: list[Interval] = []
        node = self.root
        while node.level > level + 1:
            i = _child_index(node.children, value)
            path.append(node)
            node = node.children[i]
        host = node
        j = _child_index(host.children, value)  # right sibling of the vanishing boundary
        pairs = [(host.children[j - 1], host.children[j])]
        lc, rc = pairs[0]
        while lc.level > 1:
            lc, rc = lc.children[-1], rc.children[0]
            pairs.append((lc, rc))
        touched = []
        merged: Optional[Interval] = None
        for l, r in reversed(pairs):
            m = Interval(l.level, l.lo, r.hi)
            if l.level > 1:
                m.adopt(l.children[:-1] + [merged] + r.children[1:])
            touched.append((l, r, m))
            merged = m
        host.children[j - 1:j + 1] = [merged]
        merged.parent = host
        host.key_count -= 1
        host.weight -= level
        for anc in path:
            anc.key_count -= 1
            anc.weight -= level
        while self.root.level > 1 and len(self.root.children) == 1:
            old = self.root
            child = old.children[0]
            child.parent = None
            if old.allocated and child.allocated:
                # the surviving top level takes over the full array budget
                child.a = old.a
                child.b = old.b
            self.root = child
        return StructuralChange(Key(value, level), "delete", touched)

    def allocated_chain(self, value: float) -> list[Interval]:
        """Allocated intervals strictly containing value, root first."""
        chain: list[Interval] = []
        node = self.root
        if not node.allocated:
            return chain
        while True:
            chain.append(node)
            cs = node.children
            if not cs:
                return chain
            c = cs[_child_index(cs, value)]
            if c.allocated and c.lo < value < c.hi:
                node = c
            else:
                return chain

    def lowest_allocated_containing(self, value: float) -> Optional[Interval]:
        """Deepest interval that currently holds a budget and strictly contains value."""
        chain = self.allocated_chain(value)
        return chain[-1] if chain else None

    def interval_count(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children)
        return count

    def audit(self) -> list[str]:
        """Structural audit; returns a list of violation descriptions."""
        bad: list[str] = []
        if self.root.lo != NEG_INF or self.root.hi != POS_INF:
            bad.append("root does not span the whole line")
        if self.root.parent is not None:
            bad.append("root has a parent")
        per_level_seps: dict[int, int] = {}
        stack = [self.root]
        while stack:
            node = stack.pop()
            cs = node.children
            if node.level == 1:
                if cs:
                    bad.append(f"level-1 interval with children at {node!r}")
                if node.weight != 1 or node.key_count != 0:
                    bad.append(f"bad leaf bookkeeping at {node!r}")
                continue
            if not cs:
                bad.append(f"internal interval without children at {node!r}")
                continue
            if cs[0].lo != node.lo or cs[-1].hi != node.hi:
                bad.append(f"children do not span parent at {node!r}")
            w = 1
            kc = len(cs) - 1
            for i, c in enumerate(cs):
                if c.level != node.level - 1:
                    bad.append(f"child level mismatch under {node!r}")
                if c.parent is not node:
                    bad.append(f"broken parent link under {node!r}")
                if i and cs[i - 1].hi != c.lo:
                    bad.append(f"gap between siblings under {node!r}")
                w += c.weight
                kc += c.key_count
            if w != node.weight:
                bad.append(f"weight recurrence broken at {node!r}: {node.weight} != {w}")
            if kc != node.key_count:
                bad.append(f"key count broken at {node!r}: {node.key_count} != {kc}")
            if node.key_count and node.weight <= node.key_count:
                bad.append(f"weight not above key count at {node!r}")
            lvl = node.level - 1
            per_level_seps[lvl] = per_level_seps.get(lvl, 0) + len(cs) - 1
            stack.extend(cs)
        by_level: dict[int, int] = {}
        for lvl in self.key_level.values():
            by_level[lvl] = by_level.get(lvl, 0) + 1
        for lvl, cnt in by_level.items():
            if per_level_seps.get(lvl, 0) != cnt:
                bad.append(f"level {lvl}: {cnt} keys but {per_level_seps.get(lvl, 0)} separators")
        for lvl, cnt in per_level_seps.items():
            if cnt and lvl not in by_level:
                bad.append(f"level {lvl}: separators without keys")
        if self.key_level:
            top = max(self.key_level.values())
            if top >= self.root.level:
                bad.append("a key reaches the root level")
            if self.root.level != top + 1:
                bad.append(f"root level {self.root.level} != top key level {top} + 1")
        elif self.root.level != 1:
            bad.append("empty tree with a tall root")
        expect = self.root.level + sum(self.key_level.values())
        if self.interval_count() != expect:
            bad.append(f"interval count {self.interval_count()} != {expect}")
        return bad

    def dump(self) -> str:
        """Indented text tree, one line per interval."""
        lines: list[str] = []

        def rec(node: Interval, depth: int) -> None:
            alloc = ""
            if node.allocated:
                alloc = f" [allocated {node.a:g},{node.b:g}]"
            lines.append(f"{'  ' * depth}{node.level} ({node.lo:g}, {node.hi:g}) "
                         f"{node.key_count} {node.weight}{alloc}")
            for c in node.children:
                rec(c, depth + 1)

        rec(self.root, 0)
        return "\n".join(lines)
