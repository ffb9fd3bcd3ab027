"""Core value types and resource-block arithmetic shared by every module.

Rates live on an integer Mb/s grid and resource blocks (RBs) are discrete:
each RB carries ``rb_rate`` Mb/s (1 by default), so an allocation of r Mb/s
consumes ceil(r / rb_rate) RBs.
"""

from __future__ import annotations

from dataclasses import dataclass, field


URLLC = "URLLC"
EMBB = "eMBB"


class DomainError(Exception):
    """Base class for slice-ledger violations."""


class ZeroRate(DomainError):
    pass


class RateOutOfRange(DomainError):
    pass


class CapacityExceeded(DomainError):
    pass


class DuplicateUser(DomainError):
    pass


class UnknownUser(DomainError):
    pass


@dataclass(frozen=True)
class RateRange:
    """Inclusive integer data-rate interval in Mb/s."""

    min: int
    max: int

    def __post_init__(self):
        if not (1 <= self.min <= self.max):
            raise ValueError(f"invalid rate range [{self.min}, {self.max}]")

    def contains(self, rate: int) -> bool:
        return self.min <= rate <= self.max

    def overlap(self, other: "RateRange") -> "RateRange | None":
        lo, hi = max(self.min, other.min), min(self.max, other.max)
        return RateRange(lo, hi) if lo <= hi else None


@dataclass(frozen=True)
class Position:
    """Planar position in meters."""

    x: float
    y: float

    def distance_to(self, other: "Position") -> float:
        return ((self.x - other.x) ** 2 + (self.y - other.y) ** 2) ** 0.5


@dataclass(frozen=True)
class SliceConfig:
    """Static parameters of one slice."""

    kind: str
    total_rbs: int
    decision_range: RateRange
    latency_bound_ms: int
    rb_rate: int = 1

    def __post_init__(self):
        if self.total_rbs < 1:
            raise ValueError("total_rbs must be positive")
        if self.latency_bound_ms < 1:
            raise ValueError("latency_bound_ms must be positive")
        if self.rb_rate < 1:
            raise ValueError("rb_rate must be positive")


def default_slice_configs() -> dict[str, SliceConfig]:
    """The two stock slices: URLLC 30 RBs over [1,5] Mb/s, eMBB 90 RBs over [5,20]."""
    return {
        URLLC: SliceConfig(URLLC, total_rbs=30, decision_range=RateRange(1, 5),
                           latency_bound_ms=5),
        EMBB: SliceConfig(EMBB, total_rbs=90, decision_range=RateRange(5, 20),
                          latency_bound_ms=90),
    }


def rbs_for_rate(rate: int, rb_rate: int = 1) -> int:
    """Resource blocks needed to carry ``rate`` Mb/s: ceil(rate / rb_rate)."""
    if rate < 1:
        raise ZeroRate(f"rate must be at least 1 Mb/s, got {rate}")
    if rb_rate < 1:
        raise ZeroRate(f"rb_rate must be at least 1 Mb/s, got {rb_rate}")
    return -(-rate // rb_rate)


@dataclass(frozen=True)
class Allocation:
    rate: int
    rbs: int


@dataclass
class SliceLedger:
    """One slice's RB budget and its per-user allocations.

    The capacity invariant (sum of allocated RBs never exceeds the budget)
    is enforced on every mutation, not checked after the fact.
    """

    config: SliceConfig
    allocations: dict[int, Allocation] = field(default_factory=dict)

    @property
    def used_rbs(self) -> int:
        return sum(a.rbs for a in self.allocations.values())

    @property
    def free_rbs(self) -> int:
        return self.config.total_rbs - self.used_rbs

    def occupancy(self) -> float:
        return self.used_rbs / self.config.total_rbs

    def admit(self, user: int, rate: int) -> None:
        """Allocate ``rate`` Mb/s to ``user``, consuming the matching RBs."""
        if user in self.allocations:
            raise DuplicateUser(f"user {user} already in {self.config.kind}")
        if not self.config.decision_range.contains(rate):
            raise RateOutOfRange(
                f"rate {rate} outside {self.config.kind} range "
                f"[{self.config.decision_range.min}, {self.config.decision_range.max}]")
        needed = rbs_for_rate(rate, self.config.rb_rate)
        if needed > self.free_rbs:
            raise CapacityExceeded(
                f"{self.config.kind} has {self.free_rbs} free RBs, needs {needed}")
        self.allocations[user] = Allocation(rate, needed)

    def release(self, user: int) -> Allocation:
        """Remove ``user`` and return the freed allocation."""
        if user not in self.allocations:
            raise UnknownUser(f"user {user} not in {self.config.kind}")
        return self.allocations.pop(user)

    def check(self) -> None:
        """Assert the ledger invariants; raises DomainError when broken."""
        if self.used_rbs > self.config.total_rbs:
            raise CapacityExceeded(
                f"{self.config.kind} over budget: {self.used_rbs}/{self.config.total_rbs}")
        for user, alloc in self.allocations.items():
            if alloc.rbs != rbs_for_rate(alloc.rate, self.config.rb_rate):
                raise DomainError(f"user {user}: rbs {alloc.rbs} != rbs_for_rate({alloc.rate})")
            if not self.config.decision_range.contains(alloc.rate):
                raise RateOutOfRange(f"user {user}: rate {alloc.rate} outside decision range")

    def clone(self) -> "SliceLedger":
        return SliceLedger(self.config, dict(self.allocations))


@dataclass
class NetworkState:
    """All slice ledgers plus the admitted/blocked registry.

    Mutated only through :meth:`admit_user` / :meth:`release_user` (and the
    handover tool, which is built on those), keeping the registry and the
    ledgers coherent.
    """

    slices: dict[str, SliceLedger]
    admitted: dict[int, str] = field(default_factory=dict)
    blocked: list[tuple[int, str]] = field(default_factory=list)
    arrival_index: int = 0

    @property
    def total_rbs(self) -> int:
        return sum(l.config.total_rbs for l in self.slices.values())

    @property
    def used_rbs(self) -> int:
        return sum(l.used_rbs for l in self.slices.values())

    def aggregate_occupancy(self) -> float:
        return self.used_rbs / self.total_rbs

    def user_slice(self, user: int) -> str | None:
        return self.admitted.get(user)

    def admit_user(self, user: int, kind: str, rate: int) -> Allocation:
        if user in self.admitted:
            raise DuplicateUser(f"user {user} already admitted to {self.admitted[user]}")
        self.slices[kind].admit(user, rate)
        self.admitted[user] = kind
        return self.slices[kind].allocations[user]

    def release_user(self, user: int) -> Allocation:
        kind = self.admitted.get(user)
        if kind is None:
            raise UnknownUser(f"user {user} not admitted")
        alloc = self.slices[kind].release(user)
        del self.admitted[user]
        return alloc

    def verify(self) -> None:
        """Check every ledger invariant and the ledger/registry coherence."""
        for ledger in self.slices.values():
            ledger.check()
        ledger_users: dict[int, str] = {}
        for kind, ledger in self.slices.items():
            for user in ledger.allocations:
                if user in ledger_users:
                    raise DuplicateUser(f"user {user} in both {ledger_users[user]} and {kind}")
                ledger_users[user] = kind
        if ledger_users != self.admitted:
            raise DomainError(
                f"registry out of sync: ledgers {sorted(ledger_users)} vs "
                f"admitted {sorted(self.admitted)}")

    def clone(self) -> "NetworkState":
        return NetworkState(
            slices={k: l.clone() for k, l in self.slices.items()},
            admitted=dict(self.admitted),
            blocked=list(self.blocked),
            arrival_index=self.arrival_index,
        )


def fresh_state(configs: dict[str, SliceConfig] | None = None) -> NetworkState:
    configs = configs if configs is not None else default_slice_configs()
    return NetworkState(slices={k: SliceLedger(c) for k, c in configs.items()})
