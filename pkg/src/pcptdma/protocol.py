"""Per-node PCP-TDMA automata.

A :class:`Node` owns the protocol state of one mesh node: one reservation state
machine per outgoing link (slot reservation and improvement), the proposal
records of the period-minimisation flood, and the pending period switch of the
confirmation wave.  Nodes never touch each other directly; the engine calls
:meth:`Node.on_slot_tick` once per slot, resolves RESV collisions, and hands
every delivered message to :meth:`Node.on_message`.

Time is the engine's absolute slot counter ``t`` (0, 1, 2, ...).  A node maps
it to a superframe index ``1..P`` through its current period and the absolute
slot at which its current superframe sequence started (``anchor``).
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .schedule import SlotRegistry, feasible_slots, last_occupied_slot
from .topology import Link


class InsufficientPeriod(RuntimeError):
    """A link has no feasible slot at all in the current period."""


class ProtocolIntegrityError(AssertionError):
    pass


class MsgKind(str, Enum):
    RESV = "RESV"
    GRT = "GRT"
    PROP = "PROP"
    APRV = "APRV"
    UPDATE = "UPDATE"
    ACK = "ACK"
    JOIN = "JOIN"
    EXP = "EXP"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Message:
    kind: MsgKind
    src: int
    dst: int
    payload: dict = field(default_factory=dict, compare=False, hash=False)

    def trace_line(self, slot: int) -> str:
        body = json.dumps(self.payload, sort_keys=True, separators=(",", ":"))
        return f"{slot},{self.kind},{self.src},{self.dst},{body}"


def resv(src: int, dst: int, target_slot: int) -> Message:
    return Message(MsgKind.RESV, src, dst, {"link": [src, dst], "targetSlot": target_slot})


def grt(src: int, dst: int, granted_slot: int) -> Message:
    # src is the receiver B granting link (dst, src)
    return Message(MsgKind.GRT, src, dst, {"link": [dst, src], "grantedSlot": granted_slot})


def prop(src: int, dst: int, root: int, period: int) -> Message:
    return Message(MsgKind.PROP, src, dst, {"rootId": root, "P": period})


def aprv(src: int, dst: int, root: int, period: int) -> Message:
    return Message(MsgKind.APRV, src, dst, {"rootId": root, "P": period})


def update(src: int, dst: int, root: int, period: int, stamp: int, start: int, kind=MsgKind.UPDATE) -> Message:
    return Message(kind, src, dst, {"rootId": root, "P": period, "t": stamp, "tau": start})


def ack(src: int, dst: int, root: int, period: int, stamp: int) -> Message:
    return Message(MsgKind.ACK, src, dst, {"rootId": root, "P": period, "t": stamp})


def join(src: int, dst: int, period: int, tau0: int) -> Message:
    return Message(MsgKind.JOIN, src, dst, {"P": period, "tau0": tau0})


class ResvState(str, Enum):
    START = "Start"
    TRANSMIT_RESV = "TransmitRESV"
    AWAIT_GRT = "AwaitGRT"
    TERMINATE = "Terminate"


@dataclass
class LinkReservationState:
    link: Link
    state: ResvState = ResvState.START
    current_slot: int | None = None
    retries_remaining: int = 0
    tried_slots: set[int] = field(default_factory=set)
    pending_slot: int | None = None
    expand_on_empty: bool = False
    # (t, event, retries_remaining after the event)
    history: list[tuple[int, str, int]] = field(default_factory=list)

    @property
    def reserved(self) -> bool:
        return self.current_slot is not None

    @property
    def terminated(self) -> bool:
        return self.state is ResvState.TERMINATE


class ProposalStatus(str, Enum):
    WAITING = "Waiting"
    APPROVED = "Approved"
    DISCARDED = "Discarded"


@dataclass
class ProposalRecord:
    root: int
    period: int
    parents: set[int]
    children: set[int]
    awaited_aprv: set[int]
    timeout_deadline: int
    status: ProposalStatus = ProposalStatus.WAITING
    # children whose APRV arrived; the confirmation wave follows these edges
    approved_children: set[int] = field(default_factory=set)
    first_parent: int | None = None
    evaluated_p2: int = 0
    started: int = 0
    period_before: int = 0
    expires: int = 0


@dataclass
class PendingSwitch:
    root: int
    period: int
    stamp: int
    start_slot: int
    kind: MsgKind
    parent: int | None
    children: set[int]
    awaiting_ack: set[int]
    attempts: int = 0

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.root, self.period, self.stamp)


@dataclass
class PeriodState:
    current_period: int
    anchor: int = 0
    initial_period: int = 0
    pending: PendingSwitch | None = None
    last_adopted: tuple[int, int, int] | None = None
    final_period: int | None = None

    def index(self, t: int) -> int:
        return (t - self.anchor) % self.current_period + 1

    def frame_start(self, t: int) -> int:
        return t - (t - self.anchor) % self.current_period


class DuplicatePropMode(str, Enum):
    RESPONSIVE = "responsive"
    STRICT = "strict"


@dataclass
class ProtocolConfig:
    # T_O = timeout_hops * current period
    timeout_hops: int = 100
    duplicate_prop_mode: DuplicatePropMode = DuplicatePropMode.RESPONSIVE
    proposal_retries: int = 5
    ack_retries: int = 5
    # "raise" or "expand" when an unreserved link finds no feasible slot
    on_empty_feasible: str = "raise"
    # after proposal_retries failures at one value the root tries the next one up
    escalate: bool = True


@dataclass
class Episode:
    root: int
    period_before: int
    proposed: int
    started: int
    committed: int
    strict_slots: int

    @property
    def slots(self) -> int:
        return self.committed - self.started


class Node:
    """Protocol automaton of one mesh node."""

    def __init__(
        self,
        nid: int,
        neighbors,
        registry: SlotRegistry,
        config: ProtocolConfig,
        rng: random.Random,
        period: int,
        anchor: int = 0,
    ):
        self.id = nid
        self.neighbors: set[int] = set(neighbors)
        self.registry = registry
        self.config = config
        self.rng = rng
        self.period_state = PeriodState(period, anchor, period)
        self.links: dict[int, LinkReservationState] = {
            v: LinkReservationState((nid, v)) for v in sorted(self.neighbors)
        }
        self._open_links = len(self.links)
        # slot indices holding a planned RESV this superframe
        self._planned: set[int] = set()
        self.proposals: dict[tuple[int, int], ProposalRecord] = {}
        self.outbox: dict[int, deque[Message]] = {}
        self.placements: list[tuple[Link, int]] = []
        self.episodes: list[Episode] = []
        self.integrity_log: list[str] = []
        # root-side retry bookkeeping
        self._failures: dict[int, int] = {}
        self._failure_signature = None
        self._backoff_until = 0
        self._expansion_asked_at: int | None = None
        self._expansion_wave: tuple[int, int] | None = None
        self._episode_start: tuple | None = None

    # --- derived views -------------------------------------------------

    @property
    def period(self) -> int:
        return self.period_state.current_period

    @property
    def is_local_max(self) -> bool:
        return all(self.id > w for w in self.neighbors)

    def index(self, t: int) -> int:
        return self.period_state.index(t)

    def pending_targets(self) -> set[int]:
        return {ls.pending_slot for ls in self.links.values() if ls.pending_slot is not None}

    def eq_last_occupied(self) -> int:
        return last_occupied_slot(self.registry, self.id, self.neighbors, self.period)

    def timeout(self) -> int:
        return self.config.timeout_hops * self.period

    def add_neighbor(self, v: int, expand_on_empty: bool = True) -> None:
        self.neighbors.add(v)
        self.links[v] = LinkReservationState((self.id, v), expand_on_empty=expand_on_empty)
        self._open_links += 1
        self.links = dict(sorted(self.links.items()))

    # --- outbound transport -------------------------------------------

    def send(self, msg: Message) -> None:
        self.outbox.setdefault(msg.dst, deque()).append(msg)

    def _flush_outbox(self, idx: int) -> list[Message]:
        out = []
        if not self.outbox:
            return out
        for dst in sorted(self.outbox):
            slot = self.registry.slot_of((self.id, dst))
            # piggyback on the link's data slot; links without one use the
            # control mini-phase of the next slot
            if slot is None or slot == idx:
                out.extend(self.outbox.pop(dst))
        return out

    def next_occurrence(self, slot: int, after: int) -> int:
        ps = self.period_state
        cur = ps.index(after)
        delta = (slot - cur) % ps.current_period
        return after + (delta if delta else ps.current_period)

    # --- slot tick -----------------------------------------------------

    def on_slot_tick(self, t: int) -> list[Message]:
        ps = self.period_state
        if ps.pending is not None and t >= ps.pending.start_slot:
            self._reach_start_slot(t)
        self._expire_proposals(t)
        idx = self.index(t)
        if idx == 1:
            self._plan_reservations(t)
            self.maybe_propose(t)
        out = []
        if idx in self._planned:
            for ls in self.links.values():
                if ls.pending_slot == idx:
                    self._set_state(ls, ResvState.AWAIT_GRT)
                    out.append(resv(self.id, ls.link[1], idx))
        out.extend(self._flush_outbox(idx))
        return out

    def _plan_reservations(self, t: int) -> None:
        P = self.period
        self._planned = set()
        for ls in self.links.values():
            ls.pending_slot = None
            if ls.state is ResvState.TERMINATE:
                continue
            feas = feasible_slots(self.registry, ls.link, P)
            if not ls.reserved:
                if not feas:
                    self._no_feasible_slot(ls, t)
                    continue
                if len(feas) == 1 and ls.history and ls.history[-1][1] == "first-fail":
                    # two endpoints left with the same single slot would collide
                    # forever; a coin flip breaks the symmetry
                    if self.rng.random() < 0.5:
                        self._set_state(ls, ResvState.START)
                        continue
                ls.pending_slot = self._pick(feas)
                self._planned.add(ls.pending_slot)
                self._set_state(ls, ResvState.TRANSMIT_RESV)
                continue
            i = ls.current_slot
            if i <= 1 or ls.retries_remaining <= 0:
                self._terminate(ls, t)
                continue
            if self.rng.random() >= i / P:
                self._set_state(ls, ResvState.START)
                continue
            earlier = [s for s in feas if s < i]
            candidates = [s for s in earlier if s not in ls.tried_slots]
            if earlier and not candidates:
                # every earlier slot failed once; the collisions may not repeat
                ls.tried_slots.clear()
                candidates = earlier
            if not candidates:
                # nothing earlier is free this superframe; waiting costs one retry
                ls.retries_remaining -= 1
                ls.history.append((t, "skip", ls.retries_remaining))
                if ls.retries_remaining <= 0:
                    self._terminate(ls, t)
                continue
            ls.pending_slot = self._pick(candidates)
            self._planned.add(ls.pending_slot)
            self._set_state(ls, ResvState.TRANSMIT_RESV)

    def _pick(self, slots) -> int:
        slots = sorted(slots)
        return slots[self.rng.randrange(len(slots))]

    def _set_state(self, ls: LinkReservationState, state: ResvState) -> None:
        if ls.state is ResvState.TERMINATE and state is not ResvState.TERMINATE:
            self._open_links += 1
        elif ls.state is not ResvState.TERMINATE and state is ResvState.TERMINATE:
            self._open_links -= 1
        ls.state = state

    def _terminate(self, ls: LinkReservationState, t: int) -> None:
        self._set_state(ls, ResvState.TERMINATE)
        ls.history.append((t, "terminate", ls.retries_remaining))

    def _no_feasible_slot(self, ls: LinkReservationState, t: int) -> None:
        if not (ls.expand_on_empty or self.config.on_empty_feasible == "expand"):
            raise InsufficientPeriod(
                f"link {ls.link} has no feasible slot with P={self.period} at t={t}"
            )
        ps = self.period_state
        if ps.pending is not None and ps.pending.period > ps.current_period:
            return
        if self._expansion_asked_at is not None and t - self._expansion_asked_at < 4 * self.period:
            return
        self._expansion_asked_at = t
        target = sorted(self.neighbors)[self.rng.randrange(len(self.neighbors))]
        tau0 = ps.frame_start(t) + 2 * self.period
        self._expansion_wave = (target, self.period + 1)
        self.send(join(self.id, target, self.period + 1, tau0))

    # --- part 1: reservation handshake ---------------------------------

    def on_resv_received(self, msg: Message, t: int) -> Message | None:
        """Grant a delivered RESV unless the target slot clashes with our own schedule."""
        j = msg.payload["targetSlot"]
        if self.registry.transmits_in(self.id, j) or j in self.pending_targets():
            return None
        if self.registry.receives_in(msg.src, j):
            return None
        return grt(self.id, msg.src, j)

    def on_grant(self, dst: int, slot: int, t: int) -> None:
        ls = self.links[dst]
        first = not ls.reserved
        ls.current_slot = slot
        ls.pending_slot = None
        ls.tried_slots.clear()
        feas = feasible_slots(self.registry, ls.link, self.period)
        ls.retries_remaining = sum(1 for s in feas if s < slot)
        ls.history.append((t, "reserve" if first else "improve", ls.retries_remaining))
        if ls.retries_remaining == 0:
            self._terminate(ls, t)
        else:
            self._set_state(ls, ResvState.START)

    def on_grt_missing(self, dst: int, slot: int, t: int) -> LinkReservationState:
        ls = self.links[dst]
        ls.pending_slot = None
        if not ls.reserved:
            self._set_state(ls, ResvState.START)
            ls.history.append((t, "first-fail", ls.retries_remaining))
            return ls
        ls.tried_slots.add(slot)
        ls.retries_remaining -= 1
        ls.history.append((t, "fail", ls.retries_remaining))
        if ls.retries_remaining <= 0:
            self._terminate(ls, t)
        else:
            self._set_state(ls, ResvState.START)
        return ls

    # --- part 2 stage 1: proposals -------------------------------------

    def _neighborhood_signature(self):
        reg = self.registry
        return tuple(
            (w, tuple(sorted(reg.tslot(w))), tuple(sorted(reg.rslot(w))))
            for w in sorted(self.neighbors | {self.id})
        )

    def proposal_value(self) -> int | None:
        """Period this node would propose right now, ignoring backoff; None if silent."""
        if not self.is_local_max or not self.links:
            return None
        if any(not ls.terminated or not ls.reserved for ls in self.links.values()):
            return None
        ps = self.period_state
        if ps.pending is not None:
            return None
        if any(r.root == self.id and r.status is ProposalStatus.WAITING for r in self.proposals.values()):
            return None
        value = self.eq_last_occupied()
        if value == 0 or value >= self.period:
            return None
        sig = self._neighborhood_signature()
        if sig != self._failure_signature:
            self._failures = {}
            self._failure_signature = sig
        limit = self.config.proposal_retries
        while self._failures.get(value, 0) >= limit:
            if not self.config.escalate:
                return None
            value += 1
            if value >= self.period:
                return None
        return value

    def maybe_propose(self, t: int) -> list[Message]:
        if t < self._backoff_until:
            return []
        value = self.proposal_value()
        if value is None:
            return []
        key = (self.id, value)
        children = set(self.neighbors)
        rec = ProposalRecord(
            root=self.id,
            period=value,
            parents=set(),
            children=set(children),
            awaited_aprv=set(children),
            timeout_deadline=t + self.timeout(),
            evaluated_p2=self.eq_last_occupied(),
            started=t,
            period_before=self.period,
        )
        self.proposals[key] = rec
        out = [prop(self.id, c, self.id, value) for c in sorted(children)]
        for m in out:
            self.send(m)
        return out

    def on_prop_received(self, msg: Message, t: int) -> None:
        root, value, sender = msg.payload["rootId"], msg.payload["P"], msg.src
        if root == self.id and (root, value) not in self.proposals:
            return
        key = (root, value)
        rec = self.proposals.get(key)
        if rec is not None and rec.status is not ProposalStatus.DISCARDED:
            if self.config.duplicate_prop_mode is DuplicatePropMode.STRICT:
                return
            if rec.status is ProposalStatus.WAITING:
                rec.parents.add(sender)
                rec.children.discard(sender)
                rec.awaited_aprv.discard(sender)
                self._check_complete(rec, t)
            elif root != self.id:
                self.send(aprv(self.id, sender, root, value))
            return
        p2 = self.eq_last_occupied()
        unreserved = any(not ls.reserved for ls in self.links.values())
        if value < p2 or unreserved:
            return
        children = self.neighbors - {sender}
        rec = ProposalRecord(
            root=root,
            period=value,
            parents={sender},
            children=set(children),
            awaited_aprv=set(children),
            timeout_deadline=t + self.timeout(),
            first_parent=sender,
            evaluated_p2=p2,
            started=t,
        )
        self.proposals[key] = rec
        if not children:
            self._approve(rec, t)
            return
        for c in sorted(children):
            self.send(prop(self.id, c, root, value))

    def on_aprv_received(self, msg: Message, t: int) -> None:
        key = (msg.payload["rootId"], msg.payload["P"])
        rec = self.proposals.get(key)
        if rec is None or rec.status is not ProposalStatus.WAITING:
            return
        if msg.src in rec.awaited_aprv:
            rec.awaited_aprv.discard(msg.src)
            rec.approved_children.add(msg.src)
            self._check_complete(rec, t)

    def _check_complete(self, rec: ProposalRecord, t: int) -> None:
        if rec.awaited_aprv or rec.status is not ProposalStatus.WAITING:
            return
        if rec.root == self.id:
            self.on_all_aprv_collected(rec, t)
        else:
            self._approve(rec, t)

    def _approve(self, rec: ProposalRecord, t: int) -> None:
        if rec.period < rec.evaluated_p2:
            raise ProtocolIntegrityError("approving a period below the local last slot")
        rec.status = ProposalStatus.APPROVED
        rec.expires = t + 3 * self.timeout()
        for p in sorted(rec.parents):
            self.send(aprv(self.id, p, rec.root, rec.period))

    def _expire_proposals(self, t: int) -> None:
        for key in list(self.proposals):
            rec = self.proposals[key]
            if rec.status is ProposalStatus.WAITING and t >= rec.timeout_deadline:
                # timeout: drop the PROP without replying
                del self.proposals[key]
                if rec.root == self.id:
                    self._failures[rec.period] = self._failures.get(rec.period, 0) + 1
                    self._backoff_until = t + self.period
            elif rec.status is ProposalStatus.APPROVED and t >= rec.expires:
                del self.proposals[key]

    # --- part 2 stage 2: confirmation ----------------------------------

    def start_slot(self, parent_start: int | None, new_period: int, children, t: int) -> int:
        """First slot of the superframe two frames after the UPDATE goes out,
        shifted forward to a multiple of ``new_period`` after the parent's start."""
        ps = self.period_state
        last_send = t + 1
        for c in children:
            slot = self.registry.slot_of((self.id, c))
            if slot is not None:
                last_send = max(last_send, self.next_occurrence(slot, t))
        base = ps.frame_start(last_send) + 2 * ps.current_period
        if parent_start is None:
            return base
        return base + (parent_start - base) % new_period

    def on_all_aprv_collected(self, rec: ProposalRecord, t: int) -> list[Message]:
        del self.proposals[(rec.root, rec.period)]
        ps = self.period_state
        if rec.period >= ps.current_period or (
            ps.pending is not None and ps.pending.period <= rec.period
        ):
            # an older wave already reached us and wins the tie-break
            return []
        children = set(rec.approved_children)
        tau = self.start_slot(None, rec.period, children, t)
        ps.pending = PendingSwitch(
            root=self.id,
            period=rec.period,
            stamp=t,
            start_slot=tau,
            kind=MsgKind.UPDATE,
            parent=None,
            children=children,
            awaiting_ack=set(children),
        )
        self._episode_start = (ps.pending.key, rec.started, rec.period_before, ps.frame_start(rec.started))
        out = [update(self.id, c, self.id, rec.period, t, tau) for c in sorted(children)]
        for m in out:
            self.send(m)
        return out

    def _current_wave(self):
        ps = self.period_state
        if ps.pending is not None:
            return ps.pending.key
        return ps.last_adopted

    def on_update_received(self, msg: Message, t: int) -> None:
        p = msg.payload
        root, value, stamp, parent_start = p["rootId"], p["P"], p["t"], p["tau"]
        key = (root, value, stamp)
        ps = self.period_state
        if key == self._current_wave():
            # same wave through another neighbor
            self.send(ack(self.id, msg.src, root, value, stamp))
            return
        target = ps.pending.period if ps.pending is not None else ps.current_period
        if value > target and msg.kind is MsgKind.UPDATE:
            return
        if value < target and msg.kind is MsgKind.EXP:
            return
        if value == target:
            cur = self._current_wave()
            if cur is not None:
                older = stamp < cur[2]
                if not (older or (stamp == cur[2] and root > cur[0])):
                    return
        self.send(ack(self.id, msg.src, root, value, stamp))
        rec = self.proposals.get((root, value))
        if msg.kind is MsgKind.UPDATE and rec is not None:
            children = set(rec.approved_children)
        else:
            children = self.neighbors - {msg.src}
        if rec is not None:
            del self.proposals[(root, value)]
        tau = self.start_slot(parent_start, value, children, t)
        ps.pending = PendingSwitch(root, value, stamp, tau, msg.kind, msg.src, set(children), set(children))
        for c in sorted(children):
            self.send(update(self.id, c, root, value, stamp, tau, kind=msg.kind))

    def on_ack_received(self, msg: Message, t: int) -> None:
        pend = self.period_state.pending
        key = (msg.payload["rootId"], msg.payload["P"], msg.payload["t"])
        if pend is not None and pend.key == key:
            pend.awaiting_ack.discard(msg.src)

    def _reach_start_slot(self, t: int) -> None:
        ps = self.period_state
        pend = ps.pending
        if pend.awaiting_ack and pend.attempts < self.config.ack_retries:
            # recalculate the start slot, keeping it congruent with the old one
            pend.attempts += 1
            tau = self.start_slot(pend.start_slot, pend.period, pend.awaiting_ack, t - 1)
            pend.start_slot = tau
            for c in sorted(pend.awaiting_ack):
                self.send(update(self.id, c, pend.root, pend.period, pend.stamp, tau, kind=pend.kind))
            return
        self.commit_period_switch(t)

    def commit_period_switch(self, t: int) -> None:
        ps = self.period_state
        pend = ps.pending
        if pend is None:
            return
        top = self.registry.max_occupied(self.id)
        if top > pend.period:
            raise ProtocolIntegrityError(
                f"node {self.id} would drop slot {top} when switching to P={pend.period}"
            )
        old = ps.current_period
        ps.current_period = pend.period
        ps.anchor = t
        ps.last_adopted = pend.key
        ps.pending = None
        for ls in self.links.values():
            if ls.state is ResvState.TRANSMIT_RESV:
                self._set_state(ls, ResvState.START)
            ls.pending_slot = None
        if self._episode_start and self._episode_start[0] == pend.key:
            _, started, before, frame0 = self._episode_start
            # whole superframes of the old period touched by the episode
            frames = -(-(t - frame0) // old)
            self.episodes.append(Episode(self.id, before, pend.period, started, t, frames * old))
            self._episode_start = None
        if pend.kind is MsgKind.EXP:
            self._after_expansion(pend, t)

    def _after_expansion(self, pend: PendingSwitch, t: int) -> None:
        new_slot = pend.period
        if self._expansion_wave is not None and self._expansion_wave == (pend.root, pend.period):
            for ls in self.links.values():
                if ls.reserved:
                    continue
                v = ls.link[1]
                if self.registry.receives_in(self.id, new_slot) or self.registry.transmits_in(v, new_slot):
                    continue
                self.placements.append((ls.link, new_slot))
            self._expansion_wave = None
            self._expansion_asked_at = None
        # an expansion reopens improvement on every link
        for ls in self.links.values():
            if ls.state is ResvState.TERMINATE and ls.reserved:
                feas = feasible_slots(self.registry, ls.link, self.period)
                ls.retries_remaining = sum(1 for s in feas if s < ls.current_slot)
                ls.tried_slots.clear()
                self._set_state(ls, ResvState.START)
                ls.history.append((t, "reactivate", ls.retries_remaining))
        self._failures = {}

    def on_placement(self, link: Link, slot: int, t: int) -> None:
        ls = self.links[link[1]]
        ls.current_slot = slot
        ls.pending_slot = None
        feas = feasible_slots(self.registry, ls.link, self.period)
        ls.retries_remaining = sum(1 for s in feas if s < slot)
        ls.history.append((t, "expand", ls.retries_remaining))
        self._set_state(ls, ResvState.START if ls.retries_remaining else ResvState.TERMINATE)

    # --- joining --------------------------------------------------------

    def on_join_received(self, msg: Message, t: int) -> None:
        """Become root of an expansion wave to the requested period."""
        ps = self.period_state
        value = msg.payload["P"]
        target = ps.pending.period if ps.pending is not None else ps.current_period
        if value <= target:
            if ps.pending is not None and ps.pending.kind is MsgKind.EXP:
                # already expanding; let the joiner know which wave places its links
                return
            value = target + 1
        children = set(self.neighbors)
        tau = self.start_slot(None, value, children, t)
        tau = max(tau, msg.payload.get("tau0", 0))
        ps.pending = PendingSwitch(self.id, value, t, tau, MsgKind.EXP, None, children, set(children))
        for c in sorted(children):
            self.send(update(self.id, c, self.id, value, t, tau, kind=MsgKind.EXP))

    # --- dispatch -------------------------------------------------------

    def on_message(self, msg: Message, t: int) -> None:
        kind = msg.kind
        if kind is MsgKind.PROP:
            self.on_prop_received(msg, t)
        elif kind is MsgKind.APRV:
            self.on_aprv_received(msg, t)
        elif kind in (MsgKind.UPDATE, MsgKind.EXP):
            self.on_update_received(msg, t)
        elif kind is MsgKind.ACK:
            self.on_ack_received(msg, t)
        elif kind is MsgKind.JOIN:
            self.on_join_received(msg, t)
        else:
            raise ValueError(f"{kind} is handled by the engine")

    # --- quiescence ----------------------------------------------------

    def part1_done(self) -> bool:
        return self._open_links == 0

    def busy(self) -> bool:
        """True while this node still has protocol work in flight."""
        if not self.part1_done():
            return True
        if self.period_state.pending is not None:
            return True
        if any(q for q in self.outbox.values()):
            return True
        if any(r.status is ProposalStatus.WAITING for r in self.proposals.values()):
            return True
        return self.proposal_value() is not None
