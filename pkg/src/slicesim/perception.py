"""Turns raw user requests and the live network into structured observations.

Canonical request grammar, one request per line::

    id=<int> pos=<x>,<y> service=<free text...>

The service text runs to the end of the line. ``#``-prefixed lines and blank
lines are ignored in request files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .domain import NetworkState, Position


class ParseError(Exception):
    def __init__(self, fieldname: str, detail: str = ""):
        self.fieldname = fieldname
        super().__init__(f"bad request field '{fieldname}'" + (f": {detail}" if detail else ""))


class OutOfArea(Exception):
    pass


@dataclass(frozen=True)
class RawRequest:
    """A user's service request as perceived at the base station."""

    user: int
    position: Position
    service_text: str
    csi_ref: str | None = None

    def __post_init__(self):
        if not self.service_text:
            raise ValueError("service_text must be non-empty")


@dataclass(frozen=True)
class SliceView:
    occupancy: float
    free_rbs: int


@dataclass(frozen=True)
class Observation:
    """Pure snapshot of the network: user count and per-slice status."""

    total_users: int
    slices: dict[str, SliceView]


def _parse_coord(token: str) -> float:
    value = float(token)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(token)
    return value


def parse_request(line: str, area_m: float = 450.0) -> RawRequest:
    """Parse one grammar line into a RawRequest.

    Fields are validated left to right, so the ParseError names the first
    field that is missing or malformed. OutOfArea is raised when the position
    falls outside the configured square.
    """
    tokens = line.strip().split(None, 2)
    if not tokens or not tokens[0].startswith("id="):
        raise ParseError("id", "missing")
    try:
        user = int(tokens[0][3:])
    except ValueError:
        raise ParseError("id", tokens[0][3:]) from None
    if user < 1:
        raise ParseError("id", "must be positive")

    if len(tokens) < 2 or not tokens[1].startswith("pos="):
        raise ParseError("pos", "missing")
    coords = tokens[1][4:].split(",")
    if len(coords) != 2:
        raise ParseError("pos", tokens[1][4:])
    try:
        x, y = _parse_coord(coords[0]), _parse_coord(coords[1])
    except ValueError:
        raise ParseError("pos", tokens[1][4:]) from None
    if not (0 <= x <= area_m and 0 <= y <= area_m):
        raise OutOfArea(f"({x}, {y}) outside [0, {area_m}] square")

    if len(tokens) < 3 or not tokens[2].startswith("service="):
        raise ParseError("service", "missing")
    service = tokens[2][8:].strip()
    if not service:
        raise ParseError("service", "empty")
    return RawRequest(user=user, position=Position(x, y), service_text=service)


def format_request(req: RawRequest) -> str:
    """Render a RawRequest back into the grammar (parse round-trips)."""
    return f"id={req.user} pos={req.position.x!r},{req.position.y!r} service={req.service_text}"


def iter_request_file(path, area_m: float = 450.0) -> Iterator[RawRequest]:
    """Yield requests from a UTF-8 file, skipping comments and blank lines."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield parse_request(line, area_m=area_m)


def observe(state: NetworkState) -> Observation:
    """Snapshot user count, per-slice occupancy and free RBs. Never mutates."""
    views = {
        kind: SliceView(occupancy=ledger.occupancy(), free_rbs=ledger.free_rbs)
        for kind, ledger in state.slices.items()
    }
    return Observation(total_users=len(state.admitted), slices=views)
