"""Slot-synchronous execution of a PCP-TDMA network.

Each slot runs: node ticks in ascending id order, RESV collision resolution,
grant handling, delivery of piggybacked control messages, schedule validation
and convergence detection.  Everything random is drawn from per-node streams
derived from ``(seed, node id)``, so a configuration always replays to the same
trace.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .protocol import (
    DuplicatePropMode,
    Episode,
    InsufficientPeriod,
    Message,
    MsgKind,
    Node,
    ProtocolConfig,
    ResvState,
)
from .schedule import SlotRegistry, Superframe, validate_no_mix_tx_rx
from .topology import Link, Topology, compute_stats


class Policy(str, Enum):
    P_I1 = "Pi1"  # 2 * D_max
    P_I2 = "Pi2"  # a constant
    P_I3 = "Pi3"  # ceil(D_max / 3) + 5


def initial_period(policy: Policy | str, max_degree: int, constant: int = 10) -> int:
    policy = Policy(policy)
    if policy is Policy.P_I1:
        return max(1, 2 * max_degree)
    if policy is Policy.P_I2:
        return constant
    return math.ceil(max_degree / 3) + 5


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, trace: "SimTrace"):
        super().__init__(msg)
        self.trace = trace


class InterferenceViolation(AssertionError):
    pass


class MetricsUnavailable(ValueError):
    pass


class JoinDeferred(RuntimeError):
    pass


@dataclass
class SimConfig:
    topology: Topology
    policy: Policy | str = Policy.P_I1
    seed: int = 0
    constant_period: int = 10
    initial_period: int | None = None
    max_slots: int | None = None
    # T_O = timeout_hops * P; None means 2 * |V|
    timeout_hops: int | None = None
    duplicate_prop_mode: DuplicatePropMode | str = DuplicatePropMode.RESPONSIVE
    on_empty_feasible: str = "raise"
    proposal_retries: int = 5
    ack_retries: int = 5
    escalate: bool = True
    record_messages: bool = True

    def __post_init__(self):
        self.policy = Policy(self.policy)
        self.duplicate_prop_mode = DuplicatePropMode(self.duplicate_prop_mode)
        if self.max_slots is not None and self.max_slots <= 0:
            raise ValueError("max_slots must be positive")

    def resolved_initial_period(self) -> int:
        if self.initial_period is not None:
            return self.initial_period
        d_max = max((self.topology.degree(u) for u in self.topology.node_ids), default=0)
        return initial_period(self.policy, d_max, self.constant_period)


@dataclass
class SlotRecord:
    slot: int
    transmissions: int
    resv: int
    grants: int
    collisions: int
    messages: dict[str, int]
    periods: list[int]
    phase_conflicts: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


@dataclass
class SimTrace:
    initial_period: int
    records: list[SlotRecord] = field(default_factory=list)
    # slots until the network went quiet, Part-2 included
    convergence_slot: int | None = None
    # slots until every link was last seen terminated (no node can improve)
    part1_slot: int | None = None
    final_period: int | None = None
    resv_by_link: dict[Link, int] = field(default_factory=dict)
    grt_by_link: dict[Link, int] = field(default_factory=dict)
    failed_by_link: dict[Link, int] = field(default_factory=dict)
    message_log: list[str] = field(default_factory=list)
    episodes: list[Episode] = field(default_factory=list)
    superframe: Superframe | None = None
    validations: int = 0
    retry_histories: dict[Link, list[tuple[int, str, int]]] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.convergence_slot is not None

    @property
    def resv_total(self) -> int:
        return sum(self.resv_by_link.values())

    @property
    def grt_total(self) -> int:
        return sum(self.grt_by_link.values())

    @property
    def failed_total(self) -> int:
        return sum(self.failed_by_link.values())

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def message_log_text(self) -> str:
        return "".join(line + "\n" for line in self.message_log)


@dataclass(frozen=True)
class MetricsRow:
    final_period: int
    avg_concurrent_links: float
    convergence_slots: int
    resv_total: int
    grt_total: int
    resv_per_link: float


def node_rng(seed: int, nid: int) -> random.Random:
    state = np.random.SeedSequence([seed, nid]).generate_state(2)
    return random.Random(int(state[0]) << 32 | int(state[1]))


def detect_convergence(nodes) -> bool:
    """Every link terminated, nothing pending or in flight, nobody left to propose."""
    return not any(n.busy() for n in nodes)


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.topology = cfg.topology
        self.registry = SlotRegistry()
        p_init = cfg.resolved_initial_period()
        hops = cfg.timeout_hops if cfg.timeout_hops is not None else 2 * max(1, self.topology.n)
        self.protocol_config = ProtocolConfig(
            timeout_hops=hops,
            duplicate_prop_mode=cfg.duplicate_prop_mode,
            proposal_retries=cfg.proposal_retries,
            ack_retries=cfg.ack_retries,
            on_empty_feasible=cfg.on_empty_feasible,
            escalate=cfg.escalate,
        )
        self.nodes: dict[int, Node] = {
            u: Node(
                u,
                self.topology.neighbors(u),
                self.registry,
                self.protocol_config,
                node_rng(cfg.seed, u),
                p_init,
            )
            for u in self.topology.node_ids
        }
        self.t = 0
        self._part1_done = False
        self.trace = SimTrace(p_init)
        self.max_slots = cfg.max_slots if cfg.max_slots is not None else 10_000 * p_init
        self.diameter = compute_stats(self.topology).diameter if self.topology.n else 0

    # --- views ---------------------------------------------------------

    def global_superframe(self) -> Superframe:
        period = max(n.period for n in self.nodes.values()) if self.nodes else 1
        return self.registry.superframe(period)

    def periods(self) -> list[int]:
        return [self.nodes[u].period for u in sorted(self.nodes)]

    def converged(self) -> bool:
        return detect_convergence(self.nodes.values())

    # --- slot loop -----------------------------------------------------

    def step(self) -> SlotRecord:
        t = self.t
        reg = self.registry
        trace = self.trace
        order = sorted(self.nodes)
        emitted: list[Message] = []
        for u in order:
            emitted.extend(self.nodes[u].on_slot_tick(t))
        changed = False
        for u in order:
            node = self.nodes[u]
            if node.placements:
                for link, slot in node.placements:
                    # the reverse link may have claimed the new slot first
                    if reg.receives_in(link[0], slot) or reg.transmits_in(link[1], slot):
                        continue
                    reg.assign(link, slot)
                    node.on_placement(link, slot, t)
                    changed = True
                node.placements.clear()

        idx = {u: self.nodes[u].index(t) for u in order}
        data_tx = {u for u in order if reg.tx_links(u, idx[u])}
        resvs = [m for m in emitted if m.kind is MsgKind.RESV]
        control = [m for m in emitted if m.kind is not MsgKind.RESV]
        physical_tx = data_tx | {m.src for m in resvs}
        transmissions = sum(len(reg.tx_links(u, idx[u])) for u in data_tx) + len(resvs)

        counts: dict[str, int] = {}
        log = trace.message_log if self.cfg.record_messages else None
        granted: list[tuple[Message, Message]] = []
        missed: list[Message] = []
        for m in resvs:
            link = (m.src, m.dst)
            trace.resv_by_link[link] = trace.resv_by_link.get(link, 0) + 1
            counts["RESV"] = counts.get("RESV", 0) + 1
            if log is not None:
                log.append(m.trace_line(t))
            reply = None
            if m.dst not in physical_tx:
                reply = self.nodes[m.dst].on_resv_received(m, t)
            if reply is None:
                missed.append(m)
            else:
                granted.append((m, reply))
        for m, reply in granted:
            link = (m.src, m.dst)
            slot = reply.payload["grantedSlot"]
            reg.assign(link, slot)
            changed = True
            trace.grt_by_link[link] = trace.grt_by_link.get(link, 0) + 1
            counts["GRT"] = counts.get("GRT", 0) + 1
            if log is not None:
                log.append(reply.trace_line(t))
            self.nodes[m.src].on_grant(m.dst, slot, t)
        for m in missed:
            link = (m.src, m.dst)
            trace.failed_by_link[link] = trace.failed_by_link.get(link, 0) + 1
            self.nodes[m.src].on_grt_missing(m.dst, m.payload["targetSlot"], t)

        for m in control:
            key = str(m.kind)
            counts[key] = counts.get(key, 0) + 1
            if log is not None:
                log.append(m.trace_line(t))
            self.nodes[m.dst].on_message(m, t)

        if changed:
            violations = validate_no_mix_tx_rx(reg.superframe())
            trace.validations += 1
            if violations:
                raise InterferenceViolation(f"slot {t}: {violations[:3]}")

        conflicts = 0
        for u in data_tx:
            for _, v in reg.tx_links(u, idx[u]):
                if v in data_tx:
                    conflicts += 1

        rec = SlotRecord(
            slot=t,
            transmissions=transmissions,
            resv=len(resvs),
            grants=len(granted),
            collisions=len(missed),
            messages=dict(sorted(counts.items())),
            periods=self.periods(),
            phase_conflicts=conflicts,
        )
        trace.records.append(rec)
        done = all(n.part1_done() for n in self.nodes.values())
        if done and not self._part1_done:
            trace.part1_slot = t + 1
        elif not done:
            trace.part1_slot = None
        self._part1_done = done
        self.t += 1
        return rec

    def run(self) -> SimTrace:
        trace = self.trace
        trace.convergence_slot = None
        while True:
            if self.t >= self.max_slots:
                self._finish()
                raise NonConvergence(f"no convergence within {self.max_slots} slots", trace)
            self.step()
            if self.converged():
                trace.convergence_slot = self.t
                self._finish()
                return trace

    def _finish(self) -> None:
        trace = self.trace
        periods = self.periods()
        trace.final_period = max(periods) if periods else trace.initial_period
        for n in self.nodes.values():
            n.period_state.final_period = n.period
        trace.superframe = self.registry.superframe(trace.final_period)
        trace.episodes = sorted(
            (e for n in self.nodes.values() for e in n.episodes), key=lambda e: (e.started, e.root)
        )
        trace.retry_histories = {
            ls.link: list(ls.history) for n in self.nodes.values() for ls in n.links.values()
        }

    # --- joining -------------------------------------------------------

    def join_node(self, neighbors, position=None, sponsor: int | None = None) -> int:
        """Admit a new node next to ``neighbors`` once the network has converged."""
        neighbors = sorted(set(neighbors))
        if sponsor is None:
            sponsor = neighbors[0]
        if sponsor not in neighbors:
            raise ValueError("the sponsor must be one of the new node's neighbors")
        if not self.converged():
            raise JoinDeferred("sponsor has not converged yet")
        self.topology = self.topology.with_node(position, neighbors)
        new_id = self.topology.n - 1
        host = self.nodes[sponsor]
        node = Node(
            new_id,
            neighbors,
            self.registry,
            self.protocol_config,
            node_rng(self.cfg.seed, new_id),
            host.period,
            host.period_state.anchor,
        )
        for ls in node.links.values():
            ls.expand_on_empty = True
        self.nodes[new_id] = node
        for v in neighbors:
            self.nodes[v].add_neighbor(new_id, expand_on_empty=True)
        # the sponsor hands over its schedule in one of its transmit slots,
        # which becomes the slot of the sponsor -> newcomer link
        tslots = sorted(self.registry.tslot(sponsor))
        slot = tslots[host.rng.randrange(len(tslots))]
        self.registry.assign((sponsor, new_id), slot)
        host.on_grant(new_id, slot, self.t)
        self.diameter = compute_stats(self.topology).diameter
        return new_id


def run_to_convergence(cfg: SimConfig) -> SimTrace:
    return Simulation(cfg).run()


def compute_metrics(trace: SimTrace, topology: Topology) -> MetricsRow:
    if not trace.converged or trace.final_period is None:
        raise MetricsUnavailable("metrics need a converged trace")
    sf = trace.superframe
    n_links = len(topology.edges)
    activations = sf.activations() if sf is not None else n_links
    return MetricsRow(
        final_period=trace.final_period,
        avg_concurrent_links=activations / trace.final_period,
        convergence_slots=trace.part1_slot,
        resv_total=trace.resv_total,
        grt_total=trace.grt_total,
        resv_per_link=trace.resv_total / n_links if n_links else 0.0,
    )
