"""Superframe and slot bookkeeping.

Slots are 1-indexed (``1..P``); ``0`` is the "nothing occupied" sentinel.  The
:class:`SlotRegistry` maps every reserved link to its slot and is the single
source of truth: per-node Tslot/Rslot sets and the superframe's edge sets are
derived from it.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .topology import Link, Topology


class InvalidShrink(ValueError):
    pass


class Violation(NamedTuple):
    slot: int
    node: int
    tx_link: Link
    rx_link: Link


@dataclass(frozen=True)
class Superframe:
    period: int
    edge_sets: tuple[frozenset[Link], ...]
    frame_index: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be at least 1")
        if len(self.edge_sets) != self.period:
            raise ValueError("one edge set per slot is required")

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[Link]], frame_index: int = 0) -> "Superframe":
        sets = tuple(frozenset(s) for s in sets)
        if not sets:
            sets = (frozenset(),)
        return cls(len(sets), sets, frame_index)

    def edge_set(self, slot: int) -> frozenset[Link]:
        return self.edge_sets[slot - 1]

    def occupied_slots(self) -> list[int]:
        return [i + 1 for i, s in enumerate(self.edge_sets) if s]

    def activations(self) -> int:
        return sum(len(s) for s in self.edge_sets)

    def avg_concurrent_links(self) -> float:
        return self.activations() / self.period

    def links(self) -> set[Link]:
        out: set[Link] = set()
        for s in self.edge_sets:
            out |= s
        return out

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "edgeSets": [[list(e) for e in sorted(s)] for s in self.edge_sets],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, doc: dict) -> "Superframe":
        def node(x):
            return int(x) if not isinstance(x, int) else x

        sets = [frozenset((node(u), node(v)) for u, v in es) for es in doc["edgeSets"]]
        return cls(int(doc["period"]), tuple(sets))


class SlotRegistry:
    """Link -> slot reservations with derived per-node Tslot/Rslot views."""

    def __init__(self):
        self._slot: dict[Link, int] = {}
        # node -> slot -> links using it; keeps Tslot/Rslot exact with shared slots
        self._tx: dict[int, dict[int, set[Link]]] = defaultdict(dict)
        self._rx: dict[int, dict[int, set[Link]]] = defaultdict(dict)

    def __len__(self):
        return len(self._slot)

    def __contains__(self, link: Link) -> bool:
        return link in self._slot

    def items(self):
        return self._slot.items()

    def slot_of(self, link: Link) -> int | None:
        return self._slot.get(link)

    def tslot(self, v: int) -> set[int]:
        return set(self._tx[v]) if v in self._tx else set()

    def rslot(self, v: int) -> set[int]:
        return set(self._rx[v]) if v in self._rx else set()

    def transmits_in(self, v: int, slot: int) -> bool:
        return v in self._tx and slot in self._tx[v]

    def receives_in(self, v: int, slot: int) -> bool:
        return v in self._rx and slot in self._rx[v]

    def tx_links(self, v: int, slot: int) -> set[Link]:
        return self._tx[v].get(slot, set()) if v in self._tx else set()

    def max_occupied(self, v: int) -> int:
        best = 0
        if v in self._tx and self._tx[v]:
            best = max(self._tx[v])
        if v in self._rx and self._rx[v]:
            best = max(best, max(self._rx[v]))
        return best

    def assign(self, link: Link, slot: int) -> None:
        """Reserve ``slot`` for ``link``, replacing its previous slot if any."""
        if slot < 1:
            raise ValueError("slots are 1-indexed")
        u, v = link
        self.release(link)
        if self.receives_in(u, slot) or self.transmits_in(v, slot):
            raise ValueError(f"slot {slot} for {link} breaks Tslot/Rslot disjointness")
        self._slot[link] = slot
        self._tx[u].setdefault(slot, set()).add(link)
        self._rx[v].setdefault(slot, set()).add(link)

    def release(self, link: Link) -> None:
        old = self._slot.pop(link, None)
        if old is None:
            return
        u, v = link
        for table, node in ((self._tx, u), (self._rx, v)):
            bucket = table[node][old]
            bucket.discard(link)
            if not bucket:
                del table[node][old]

    def copy(self) -> "SlotRegistry":
        out = SlotRegistry()
        for link, slot in self._slot.items():
            out._slot[link] = slot
            u, v = link
            out._tx[u].setdefault(slot, set()).add(link)
            out._rx[v].setdefault(slot, set()).add(link)
        return out

    def superframe(self, period: int | None = None, frame_index: int = 0) -> Superframe:
        top = max(self._slot.values(), default=0)
        period = max(period or 0, top, 1)
        sets: list[set[Link]] = [set() for _ in range(period)]
        for link, slot in self._slot.items():
            sets[slot - 1].add(link)
        return Superframe(period, tuple(frozenset(s) for s in sets), frame_index)

    @classmethod
    def from_superframe(cls, sf: Superframe) -> "SlotRegistry":
        reg = cls()
        for i, es in enumerate(sf.edge_sets, start=1):
            for link in es:
                reg.assign(link, i)
        return reg


def feasible_slots(registry: SlotRegistry, link: Link, period: int) -> frozenset[int]:
    """Slots in ``1..period`` where A may transmit to B: not in Rslot_A, not in Tslot_B."""
    a, b = link
    blocked = registry.rslot(a) | registry.tslot(b)
    return frozenset(s for s in range(1, period + 1) if s not in blocked)


def last_occupied_slot(
    registry: SlotRegistry, node: int, neighborhood: Iterable[int], period: int
) -> int:
    """Largest slot <= ``period`` used by ``node`` or a neighbor, 0 if none is."""
    best = 0
    for w in (node, *neighborhood):
        for s in registry.tslot(w) | registry.rslot(w):
            if best < s <= period:
                best = s
    return best


def validate_no_mix_tx_rx(sf: Superframe) -> list[Violation]:
    out: list[Violation] = []
    for i, es in enumerate(sf.edge_sets, start=1):
        tx: dict[int, Link] = {}
        rx: dict[int, Link] = {}
        for link in sorted(es):
            tx.setdefault(link[0], link)
            rx.setdefault(link[1], link)
        for node in sorted(tx.keys() & rx.keys()):
            out.append(Violation(i, node, tx[node], rx[node]))
    return out


def validate_coverage(sf: Superframe, t: Topology) -> list[Link]:
    """Directed links of ``t`` that never appear in ``sf``."""
    seen = sf.links()
    return [e for e in t.sorted_edges() if e not in seen]


def rebase_superframe(sf: Superframe, new_period: int) -> Superframe:
    """Keep edge sets ``1..new_period``; growing appends empty sets."""
    if new_period < 1:
        raise InvalidShrink("period must stay positive")
    for slot in sf.occupied_slots():
        if slot > new_period:
            raise InvalidShrink(f"slot {slot} is occupied, cannot shrink to {new_period}")
    sets = list(sf.edge_sets[:new_period])
    sets += [frozenset()] * (new_period - len(sets))
    return Superframe(new_period, tuple(sets), sf.frame_index)
