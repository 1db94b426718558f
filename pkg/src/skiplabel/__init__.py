"""Sorted-array slot labeling driven by a skip-list interval tree."""

from .allocator import (BudgetAllocator, LabelArray, OverflowViolation,
                        SlotCollisionError, adaptive_partition, ceil_slot,
                        round_to_slots, smooth_partition)
from .engine import (AuditFailure, CapacityError, ConfigError, Engine,
                     EngineConfig, Metrics)
from .proactive import (ProactiveConfig, ReallocationRequest, RoundSchedule,
                        build_round_schedule, fire_trigger, record_update,
                        schedule_shapes)
from .skiplist import (DuplicateKeyError, Interval, Key, MissingKeyError,
                       SkipTree, StructuralChange, sample_level)
from .workloads import (WorkloadOp, gen_delete_max_insert_random,
                        gen_front_insert, gen_hammer, gen_uniform_mix,
                        read_trace, write_trace)

__version__ = "0.1.0"

__all__ = [
    "BudgetAllocator", "LabelArray", "OverflowViolation", "SlotCollisionError",
    "adaptive_partition", "ceil_slot", "round_to_slots", "smooth_partition",
    "AuditFailure", "CapacityError", "ConfigError", "Engine", "EngineConfig",
    "Metrics",
    "ProactiveConfig", "ReallocationRequest", "RoundSchedule",
    "build_round_schedule", "fire_trigger", "record_update",
    "DuplicateKeyError", "Interval", "Key", "MissingKeyError", "SkipTree",
    "StructuralChange", "sample_level",
    "WorkloadOp", "gen_delete_max_insert_random", "gen_front_insert",
    "gen_hammer", "gen_uniform_mix", "read_trace", "write_trace",
]
