import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skiplabel.allocator import (EPS, BudgetAllocator, LabelArray,
                                 OverflowViolation, SlotCollisionError,
                                 adaptive_partition, audit_budgets, ceil_slot,
                                 round_to_slots, smooth_partition)
from skiplabel.engine import Engine, EngineConfig
from skiplabel.proactive import ProactiveConfig
from skiplabel.skiplist import Key, SkipTree, sample_level


def test_smooth_partition_worked_example():
    # budget (0, 12], child counts (1, 0, 2), child weights (2, 1, 3)
    budgets, seps = smooth_partition(0.0, 12.0, [1, 0, 2], [2, 1, 3])
    assert seps == [4.0, 6.0]
    assert budgets == [(0.0, 3.0), (4.0, 5.0), (6.0, 11.0)]
    slacks = [(b - a) - c for (a, b), c in zip(budgets, [1, 0, 2])]
    assert slacks == [2.0, 1.0, 3.0]
    assert sum(slacks) == (12.0 - 5) - 1  # slack conservation: delta minus one
    rel = [s / w for s, w in zip(slacks, [2, 1, 3])]
    assert max(rel) - min(rel) < 1e-12


def test_smooth_partition_single_child_reserves_one_slot():
    budgets, seps = smooth_partition(3.0, 10.0, [4], [9])
    assert budgets == [(3.0, 9.0)]
    assert seps == []


def test_smooth_partition_conserves_slack_randomized():
    rng = random.Random(0)
    for _ in range(300):
        d = rng.randint(1, 8)
        weights = [rng.randint(1, 50) for _ in range(d)]
        counts = [rng.randint(0, w - 1) if w > 1 else 0 for w in weights]
        total_keys = sum(counts) + d - 1
        delta = rng.uniform(1.0, 200.0)
        a = rng.uniform(0.0, 1000.0)
        b = a + total_keys + delta
        budgets, seps = smooth_partition(a, b, counts, weights)
        slacks = [(hi - lo) - c for (lo, hi), c in zip(budgets, counts)]
        assert abs(sum(slacks) - (delta - 1.0)) < 1e-9
        rel = [s / w for s, w in zip(slacks, weights)]
        assert max(rel) - min(rel) < 1e-9


def test_adaptive_partition_worked_example():
    # slack 21, bonus 5, weights (4, 6), counts (3, 7): sizes 11.5 and 18.5
    total = 21 + (3 + 7 + 1)
    budgets, seps = adaptive_partition(0.0, float(total), [3, 7], [4, 6], 5.0)
    sizes = [hi - lo for lo, hi in budgets]
    assert sizes == [11.5, 18.5]
    # sizes plus one separator slot plus one reserved slot tile the budget
    assert abs(sum(sizes) + 2 - total) < 1e-9


def test_adaptive_partition_zero_bonus_is_smooth():
    sm, _ = smooth_partition(2.0, 40.0, [3, 1, 5], [6, 2, 9])
    ad, _ = adaptive_partition(2.0, 40.0, [3, 1, 5], [6, 2, 9], 0.0)
    for (a1, b1), (a2, b2) in zip(sm, ad):
        assert abs(a1 - a2) < 1e-12 and abs(b1 - b2) < 1e-12


def test_termination_criterion_example():
    # slack 2, weight 9: a weight-3 child would get 0.375 slots of slack
    ratio = (2.0 - 1.0) / (9 - 1)
    assert ratio * 3 == pytest.approx(0.375)
    assert ratio * 3 < 1.0


def test_ceil_slot_rounding():
    assert ceil_slot(4.0) == 4
    assert ceil_slot(6.0) == 6
    assert ceil_slot(3.2) == 4
    assert ceil_slot(4.7) == 5
    # float noise just above an integer must not bump the slot
    assert ceil_slot(4.0 + 1e-12) == 4


def test_round_to_slots():
    assert round_to_slots([4.0, 6.0]) == [4, 6]
    assert round_to_slots([3.2, 4.7]) == [4, 5]
    assert round_to_slots([7.0, 8.0, 9.0]) == [7, 8, 9]
    with pytest.raises(SlotCollisionError):
        round_to_slots([3.2, 3.9])


def test_write_keys_counters():
    arr = LabelArray(16)
    emitted, moved = arr.write_keys([(1.0, 2), (2.0, 4), (3.0, 6), (4.0, 8),
                                     (5.0, 10)])
    assert (emitted, moved) == (5, 5)
    # rewrite all five, two staying put
    emitted, moved = arr.write_keys([(1.0, 2), (2.0, 4), (3.0, 7), (4.0, 9),
                                     (5.0, 11)])
    assert (emitted, moved) == (5, 3)
    assert arr.writes_total == 10 and arr.writes_moved == 8
    assert arr.write_keys([]) == (0, 0)
    with pytest.raises(SlotCollisionError):
        arr.write_keys([(6.0, 3), (7.0, 3)])


def test_label_array_write_counters():
    arr = LabelArray(20)
    arr.rewrite_region(0.0, 20.0, [1.0, 2.0, 3.0, 4.0, 5.0],
                       [3.0, 4.0, 5.0, 6.0, 7.0])
    assert (arr.writes_total, arr.writes_moved) == (5, 5)
    # rewrite with two keys landing on their old slots
    arr.rewrite_region(0.0, 20.0, [1.0, 2.0, 3.0, 4.0, 5.0],
                       [3.0, 4.0, 8.0, 9.0, 10.0])
    assert arr.writes_total == 10
    assert arr.writes_moved == 5 + 3
    # empty rewrite leaves counters alone
    before = (arr.writes_total, arr.writes_moved)
    arr.rewrite_region(12.0, 20.0, [], [])
    assert (arr.writes_total, arr.writes_moved) == before


def test_label_array_large_path_matches_small_path():
    items = [(float(i), 1.5 * i + 2) for i in range(80)]
    big = LabelArray(200)
    big.rewrite_region(0.0, 200.0, [k for k, _ in items], [f for _, f in items])
    small = LabelArray(200)
    for k, f in items:  # feed through the scalar path region by region
        small.rewrite_region(f - 1.0, f, [k], [f])
    assert np.array_equal(big.occupied()[0], small.occupied()[0])


def test_label_array_collision_fatal():
    arr = LabelArray(10)
    with pytest.raises(SlotCollisionError):
        arr.rewrite_region(0.0, 10.0, [1.0, 2.0], [2.5, 3.0])


def test_label_array_audit_flags_disorder():
    arr = LabelArray(10)
    arr.rewrite_region(0.0, 10.0, [1.0, 2.0], [2.0, 4.0])
    assert arr.audit() == []
    arr.keys[2], arr.keys[4] = arr.keys[4], arr.keys[2]
    assert any("ordering" in v for v in arr.audit())


def test_snapshot_csv_roundtrip():
    arr = LabelArray(10)
    arr.rewrite_region(0.0, 10.0, [5.5, 7.25], [2.0, 6.0])
    lines = arr.snapshot_csv().splitlines()
    assert lines[0] == "slot_index,key_value"
    assert lines[1] == "2,5.5"
    assert lines[2] == "6,7.25"


def scripted_tree(items):
    tree = SkipTree()
    for value, level in items:
        tree.insert_key(Key(float(value), level))
    return tree


def test_allocate_tiny_tree_places_run_leftmost():
    tree = scripted_tree([(1.0, 1)])
    arr = LabelArray(3)
    alloc = BudgetAllocator(arr)
    emitted, moved = alloc.allocate(tree.root, 0.0, 3.0)
    assert (emitted, moved) == (1, 1)
    slots, keys = arr.occupied()
    assert slots.tolist() == [1]
    assert tree.root.is_run
    assert audit_budgets(tree.root) == []


def test_run_keys_take_leftmost_integral_slots():
    # a run of 3 keys inside budget (6, 11] lands on slots 7, 8, 9
    tree = scripted_tree([(1.0, 1), (2.0, 1), (3.0, 1)])
    arr = LabelArray(20)
    alloc = BudgetAllocator(arr)
    alloc.allocate(tree.root, 6.0, 11.0)
    slots, _ = arr.occupied()
    assert slots.tolist() == [7, 8, 9]


def test_allocate_rejects_insufficient_slack():
    tree = scripted_tree([(1.0, 1), (2.0, 1)])
    arr = LabelArray(4)
    alloc = BudgetAllocator(arr)
    with pytest.raises(OverflowViolation):
        alloc.allocate(tree.root, 0.0, 2.5)


def test_allocation_snapshots_and_nesting():
    rng = random.Random(2)
    tree = SkipTree()
    for _ in range(300):
        tree.insert_key(Key(rng.random(), sample_level(rng)))
    arr = LabelArray(800)
    alloc = BudgetAllocator(arr)
    alloc.allocate(tree.root, 0.0, 800.0)
    assert audit_budgets(tree.root) == []
    assert arr.audit() == []
    # every allocated interval promises at least one slot of slack
    stack = [tree.root]
    seen_run = False
    while stack:
        node = stack.pop()
        if node.allocated:
            assert node.slack_at_alloc >= 1.0 - EPS
            assert node.update_weight == 0
            seen_run |= node.is_run
        stack.extend(node.children)
    assert seen_run


def test_mean_run_length_is_modest():
    # run lengths stay near eta^-1 scale, far below the audit ceiling
    rng = random.Random(4)
    tree = SkipTree()
    n = 1 << 14
    for _ in range(n):
        tree.insert_key(Key(rng.random(), sample_level(rng)))
    m_prime = math.ceil(2.5 * n)
    arr = LabelArray(m_prime)
    alloc = BudgetAllocator(arr)
    alloc.allocate(tree.root, 0.0, float(m_prime))
    eta = math.inf
    runs = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        eta = min(eta, (node.b - node.a - node.key_count) / node.weight)
        if node.is_run:
            runs.append(node.key_count)
            continue
        stack.extend(c for c in node.children if c.allocated)
    mean_run = sum(runs) / len(runs)
    assert mean_run <= 4.0 * math.log2(n) / eta


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=120), st.integers(min_value=0, max_value=2**30))
def test_layout_spacing_property(n_keys, seed):
    rng = random.Random(seed)
    tree = SkipTree()
    for _ in range(n_keys):
        while True:
            v = rng.random()
            if v not in tree.key_level:
                break
        tree.insert_key(Key(v, sample_level(rng)))
    m_prime = max(2, math.ceil(2.5 * n_keys))
    arr = LabelArray(m_prime)
    BudgetAllocator(arr).allocate(tree.root, 0.0, float(m_prime))
    assert arr.audit() == []
    slots, keys = arr.occupied()
    assert keys.tolist() == sorted(tree.key_level)
    fr = arr.fracs[slots]
    assert np.all(np.diff(fr) >= 1.0 - EPS)
