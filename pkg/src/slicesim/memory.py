"""Perception snapshots and action recordings for the control workflow.

Two retrieval paths: a keyed cache of known-good admission decisions (fast
path for states the controller has seen before) and an append-only action
log used to avoid repeating decisions that already failed.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

from .perception import Observation

SUCCESS = "success"
FAILURE = "failure"


def occupancy_bucket(occupancy: float) -> int:
    """Decile bucket of an occupancy fraction: 0, 10, ..., 100.

    Computed as floor(occupancy * 10) * 10 clamped to 100; a tiny epsilon
    absorbs binary-float noise in ratios like 21/30.
    """
    bucket = int(occupancy * 10 + 1e-9) * 10
    return min(bucket, 100)


@dataclass(frozen=True)
class StateKey:
    """Equivalence class of network states: intent class x occupancy deciles."""

    intent_class: str
    buckets: tuple[tuple[str, int], ...]

    def __str__(self) -> str:
        parts = ",".join(f"{kind}:{bucket}" for kind, bucket in self.buckets)
        return f"{self.intent_class}|{parts}"


def make_key(obs: Observation, intent_class: str) -> StateKey:
    buckets = tuple(
        (kind, occupancy_bucket(view.occupancy))
        for kind, view in sorted(obs.slices.items())
    )
    return StateKey(intent_class=intent_class, buckets=buckets)


@dataclass(frozen=True)
class ActionRecord:
    key: StateKey
    subtask: str
    decision_digest: str
    outcome: str
    arrival_index: int
    reason: str = ""


@dataclass(frozen=True)
class CacheEntry:
    """A known-good direct admission plus the preconditions it was stored under.

    ``free_at_store`` holds each slice's free RBs just before the admission;
    the entry is only reusable when the live network is at least as free and
    the live intent carries the same rate range.
    """

    slice_kind: str
    rate: int
    rbs: int
    rate_min: int
    rate_max: int
    free_at_store: tuple[tuple[str, int], ...]


class MemoryStore:
    """FIFO-bounded action log plus a perception-keyed decision cache."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.action_log: deque[ActionRecord] = deque(maxlen=capacity)
        self.perception_cache: dict[StateKey, CacheEntry] = {}

    def __len__(self) -> int:
        return len(self.action_log)

    def record(self, rec: ActionRecord) -> None:
        """Append one record; the oldest is evicted once capacity is reached."""
        self.action_log.append(rec)

    def failed_before(self, key: StateKey, decision_digest: str) -> bool:
        """True iff this exact (key, digest) pair failed in the retained log."""
        return any(
            rec.outcome == FAILURE
            and rec.key == key
            and rec.decision_digest == decision_digest
            for rec in self.action_log
        )

    def cached_outcome(self, key: StateKey) -> CacheEntry | None:
        return self.perception_cache.get(key)

    def put_cached(self, key: StateKey, entry: CacheEntry) -> None:
        self.perception_cache[key] = entry

    def export_csv(self, path) -> None:
        """Write the action log as CSV (arrival_index, subtask, key, digest, outcome)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["arrival_index", "subtask", "key", "digest", "outcome"])
            for rec in self.action_log:
                outcome = rec.outcome if not rec.reason else f"{rec.outcome}:{rec.reason}"
                writer.writerow(
                    [rec.arrival_index, rec.subtask, str(rec.key), rec.decision_digest, outcome])
