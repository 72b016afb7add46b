"""Feeder graph, phase sets and the linear (bus, phase) index map.

Phases are always ordered a < b < c. Every matrix row or column that belongs
to a bus follows that order, and buses appear in the index map in the order
they are declared in the feeder. The slack bus is kept out of the map; its
three phases live in a separate block appended after the ``J`` network slots.
"""

from __future__ import annotations

import re
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Union

import numpy as np

from .errors import FeederError

if TYPE_CHECKING:
    from .elements import LineSpec, RegulatorSpec, TransformerSpec
    from .loads import ZipDeltaLoad, ZipWyeLoad

PHASES: tuple[str, ...] = ("a", "b", "c")
PHASE_POSITION = {p: k for k, p in enumerate(PHASES)}
BUS_CONNECTIONS = ("wye", "delta", "slack")

PhaseSet = tuple[str, ...]


def phase_set(phases: Union[str, Iterable[str]]) -> PhaseSet:
    """Normalise ``"ca"``, ``["c", "a"]`` etc. to the ordered tuple ``("a", "c")``."""
    items = list(phases)
    if not items:
        raise FeederError("phase set must not be empty")
    bad = [p for p in items if p not in PHASE_POSITION]
    if bad:
        raise FeederError(f"unknown phase(s) {bad!r}; expected a subset of 'abc'")
    if len(set(items)) != len(items):
        raise FeederError(f"repeated phase in {''.join(items)!r}")
    return tuple(sorted(items, key=PHASE_POSITION.__getitem__))


def phase_positions(subset: PhaseSet, within: PhaseSet) -> list[int]:
    """Positions of ``subset`` inside ``within``; raises if it is not a subset."""
    missing = [p for p in subset if p not in within]
    if missing:
        raise FeederError(
            f"phases {''.join(subset)!r} are not contained in {''.join(within)!r}"
        )
    return [within.index(p) for p in subset]


def embed_block(
    block: np.ndarray,
    row_set: PhaseSet,
    col_set: PhaseSet,
    phases: PhaseSet | None = None,
    col_phases: PhaseSet | None = None,
) -> np.ndarray:
    """Zero-pad a block over ``phases x col_phases`` into ``row_set x col_set``.

    ``col_phases`` defaults to ``phases`` (square edge blocks). With neither
    given the block must already be shaped ``row_set x col_set``.
    """
    block = np.asarray(block)
    rows_of_block = row_set if phases is None else phases
    cols_of_block = (col_set if phases is None else phases) if col_phases is None else col_phases
    if block.shape != (len(rows_of_block), len(cols_of_block)):
        raise FeederError(
            f"block shape {block.shape} does not match phases "
            f"{''.join(rows_of_block)!r} x {''.join(cols_of_block)!r}"
        )
    rows = phase_positions(rows_of_block, row_set)
    cols = phase_positions(cols_of_block, col_set)
    out = np.zeros((len(row_set), len(col_set)), dtype=np.result_type(block, complex))
    out[np.ix_(rows, cols)] = block
    return out


@dataclass(frozen=True, eq=False)
class Bus:
    """A feeder node with its phase set and the loads attached to it."""

    id: str
    connection: str
    phases: PhaseSet
    loads: tuple["ZipWyeLoad | ZipDeltaLoad", ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "phases", phase_set(self.phases))
        if self.connection not in BUS_CONNECTIONS:
            raise FeederError(
                f"bus {self.id!r}: connection must be one of {BUS_CONNECTIONS}, "
                f"got {self.connection!r}"
            )
        if self.connection == "delta" and len(self.phases) < 2:
            raise FeederError(f"bus {self.id!r}: a delta bus needs at least two phases")
        if self.connection == "slack":
            if self.phases != PHASES:
                raise FeederError(f"bus {self.id!r}: the slack bus must carry phases abc")
            if self.loads:
                raise FeederError(f"bus {self.id!r}: the slack bus cannot carry loads")
        for load in self.loads:
            if load.phases != self.phases:
                raise FeederError(
                    f"bus {self.id!r}: load phases {''.join(load.phases)!r} differ "
                    f"from bus phases {''.join(self.phases)!r}"
                )

    @property
    def is_slack(self) -> bool:
        return self.connection == "slack"


@dataclass(frozen=True, eq=False)
class Edge:
    """A series element between buses ``from_bus`` (n) and ``to_bus`` (m)."""

    id: str
    from_bus: str
    to_bus: str
    phases: PhaseSet
    element: "LineSpec | TransformerSpec | RegulatorSpec"

    def __post_init__(self) -> None:
        object.__setattr__(self, "phases", phase_set(self.phases))
        if self.from_bus == self.to_bus:
            raise FeederError(f"edge {self.id!r}: endpoints must differ")

    @property
    def kind(self) -> str:
        return self.element.kind

    @property
    def terminal_phases(self) -> tuple[PhaseSet, PhaseSet]:
        """Phases seen at the n side and at the m side of the edge."""
        return self.element.terminal_phases(self.phases)

    def carries(self, phase: str) -> bool:
        """True when the edge conducts ``phase`` between its two endpoints."""
        n_side, m_side = self.terminal_phases
        return phase in n_side and phase in m_side


def _natural_key(label: str) -> tuple:
    parts = re.split(r"(\d+)", label)
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p)


def natural_sorted(labels: Iterable[str]) -> list[str]:
    """Sort bus labels so that ``"2" < "10" < "10a"``."""
    return sorted(labels, key=_natural_key)


@dataclass(frozen=True, eq=False)
class Feeder:
    """Buses, series edges and the slack voltage of one distribution feeder."""

    buses: tuple[Bus, ...]
    edges: tuple[Edge, ...]
    slack_voltage: np.ndarray = field(
        default_factory=lambda: np.exp(-2j * np.pi / 3 * np.arange(3))
    )
    name: str = ""
    base: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "edges", tuple(self.edges))
        v_s = np.asarray(self.slack_voltage, dtype=complex).reshape(-1)
        if v_s.shape != (3,):
            raise FeederError("slack voltage must be a 3-vector")
        object.__setattr__(self, "slack_voltage", v_s)
        self.validate()

    def validate(self) -> None:
        dupes = sorted(i for i, k in Counter(b.id for b in self.buses).items() if k > 1)
        if dupes:
            raise FeederError(f"duplicate bus ids: {dupes}")
        slack = [b.id for b in self.buses if b.is_slack]
        if len(slack) != 1:
            raise FeederError(f"exactly one slack bus required, found {len(slack)}")
        dupes = sorted(i for i, k in Counter(e.id for e in self.edges).items() if k > 1)
        if dupes:
            raise FeederError(f"duplicate edge ids: {dupes}")
        lookup = {b.id: b for b in self.buses}
        for edge in self.edges:
            for end in (edge.from_bus, edge.to_bus):
                if end not in lookup:
                    raise FeederError(f"edge {edge.id!r} references unknown bus {end!r}")
            n_side, m_side = edge.terminal_phases
            for end, side in ((edge.from_bus, n_side), (edge.to_bus, m_side)):
                if not set(side) <= set(lookup[end].phases):
                    raise FeederError(
                        f"edge {edge.id!r}: phases {''.join(side)!r} not available "
                        f"at bus {end!r} ({''.join(lookup[end].phases)!r})"
                    )
        if not any(not b.is_slack for b in self.buses):
            raise FeederError("feeder needs at least one non-slack bus")

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.is_slack)

    def bus(self, bus_id: str) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    @property
    def network_buses(self) -> tuple[Bus, ...]:
        """Every bus except the slack, in declaration order."""
        return tuple(b for b in self.buses if not b.is_slack)

    def edges_of_kind(self, kind: str) -> list[Edge]:
        return [e for e in self.edges if e.kind == kind]


@dataclass(frozen=True, eq=False)
class PhaseIndexMap:
    """Bijection between (bus, phase) pairs and the 0-based positions 0..J-1.

    The positions are the usual 1..J indices shifted by one to match numpy.
    """

    size: int
    forward: dict[tuple[str, str], int]
    inverse: tuple[tuple[str, str], ...]
    bus_slices: dict[str, slice]
    bus_phases: dict[str, PhaseSet]
    slack_id: str

    @property
    def J(self) -> int:
        return self.size

    def indices(self, bus_id: str) -> np.ndarray:
        s = self.bus_slices[bus_id]
        return np.arange(s.start, s.stop)

    def __getitem__(self, key: tuple[str, str]) -> int:
        return self.forward[key]


def build_index(feeder: Feeder) -> PhaseIndexMap:
    """Number every non-slack (bus, phase) pair, buses contiguous and phase-ordered."""
    forward: dict[tuple[str, str], int] = {}
    inverse: list[tuple[str, str]] = []
    slices: dict[str, slice] = {}
    phases: dict[str, PhaseSet] = {}
    for bus in feeder.network_buses:
        start = len(inverse)
        for p in bus.phases:
            forward[(bus.id, p)] = len(inverse)
            inverse.append((bus.id, p))
        slices[bus.id] = slice(start, len(inverse))
        phases[bus.id] = bus.phases
    phases[feeder.slack.id] = PHASES
    return PhaseIndexMap(
        size=len(inverse),
        forward=forward,
        inverse=tuple(inverse),
        bus_slices=slices,
        bus_phases=phases,
        slack_id=feeder.slack.id,
    )


def _phase_links(edge: Edge) -> list[tuple[tuple[str, str], tuple[str, str]]]:
    """Pairs of (bus, phase) terminals that an edge ties together.

    Lines and regulators conduct phase by phase. A transformer couples every
    primary terminal with every secondary terminal, so an open-wye primary
    still energises all three phases of its delta secondary.
    """
    n_side, m_side = edge.terminal_phases
    if edge.kind == "transformer":
        return [((edge.from_bus, p), (edge.to_bus, q)) for p in n_side for q in m_side]
    return [((edge.from_bus, p), (edge.to_bus, p)) for p in n_side if p in m_side]


def check_phase_connectivity(feeder: Feeder) -> dict[tuple[str, str], bool]:
    """For each (bus, phase), whether a chain of edges reaches the slack from it."""
    adjacency: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for edge in feeder.edges:
        for u, w in _phase_links(edge):
            adjacency.setdefault(u, []).append(w)
            adjacency.setdefault(w, []).append(u)
    start = [(feeder.slack.id, p) for p in PHASES]
    reached = set(start)
    queue = deque(start)
    while queue:
        node = queue.popleft()
        for nxt in adjacency.get(node, ()):
            if nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    return {(bus.id, p): (bus.id, p) in reached for bus in feeder.buses for p in bus.phases}


def is_connected(feeder: Feeder) -> bool:
    """Graph connectivity of the feeder ignoring phases."""
    adjacency: dict[str, set[str]] = {b.id: set() for b in feeder.buses}
    for edge in feeder.edges:
        adjacency[edge.from_bus].add(edge.to_bus)
        adjacency[edge.to_bus].add(edge.from_bus)
    seen = {feeder.slack.id}
    stack = [feeder.slack.id]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(feeder.buses)
