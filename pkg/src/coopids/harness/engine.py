"""Deterministic simulation of the agent hierarchy and its flat oracle.

The engine is a single event loop.  Interests issued by every basic agent
are propagated to quiescence first; then each trace event is injected at its
producer and the resulting cascade is drained (FIFO; actions emitted by one
handler call are queued in node-name order) before the next event starts.
Faults are crash-stop: a node scheduled for removal at time ``t`` is gone
before the first event with ``time >= t`` is injected.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .. import routing
from ..detection import (
    Alert,
    AgentState,
    DetectionRule,
    SignatureRule,
    classify_record,
    derive_interest,
    observe_event,
    score,
)
from ..model import (
    ECA_NAME,
    AgentAddress,
    DomainDirected,
    EventRecord,
    HostDirected,
    Interest,
    Level,
    Topology,
    ba_name,
    dca_name,
    eval_predicate,
    in_scope,
    make_interest,
    wca_name,
)
from ..registry import Eca, LocalAgent, NodeRef, OwnDca, PeerDca, PeerWca
from ..routing import (
    CollectRequest,
    DataMsg,
    InabilityNotice,
    InterestMsg,
    Message,
    NodeState,
    originate,
)
from .formats import RuleSet, serialize_rules, serialize_topology
from .kdd import record_class

log = logging.getLogger(__name__)


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    faults: tuple[tuple[float, str], ...] = ()     # (time, node name)
    max_hops: int = routing.MAX_HOPS

    def __post_init__(self):
        for t, _ in self.faults:
            if t < 0:
                raise SimulationError("fault times must be non-negative")


@dataclass(frozen=True)
class MessageRecord:
    """One link traversal."""

    src: str
    dst: str
    kind: str
    tier: str
    hop_count: int
    trace_path: tuple[str, ...]
    interest_id: Optional[str]
    event_seq: Optional[int]


@dataclass(frozen=True)
class Delivery:
    seq: int
    agent: str
    hop_count: int = 0
    trace_path: tuple[str, ...] = ()


@dataclass
class SimReport:
    mode: str
    alerts: list[Alert]
    deliveries: list[Delivery]
    counters: dict[str, int]
    metrics: dict
    seed: int
    config_digest: str
    messages: list[MessageRecord] = field(default_factory=list)
    interests: dict[str, Interest] = field(default_factory=dict)

    def delivery_set(self) -> set[tuple[int, str]]:
        return {(d.seq, d.agent) for d in self.deliveries}

    def alert_set(self) -> set[tuple]:
        return {alert_key(a) for a in self.alerts}

    def to_dict(self) -> dict:
        return {
            "alerts": [alert_json(a) for a in self.alerts],
            "deliveries": [{"seq": d.seq, "agent": d.agent} for d in self.deliveries],
            "counters": dict(sorted(self.counters.items())),
            "metrics": self.metrics,
            "seed": self.seed,
            "config_digest": self.config_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def alert_json(a: Alert) -> dict:
    return {
        "alert_id": a.alert_id,
        "raiser": str(a.raiser),
        "rule_id": a.rule_id,
        "class": a.alert_class,
        "time": a.time,
        "evidence": [[str(src), n] for src, n in a.evidence],
        "note": a.note,
    }


def alert_key(a: Alert) -> tuple:
    return (a.alert_id, str(a.raiser), a.rule_id, a.alert_class, a.time,
            tuple((str(s), n) for s, n in a.evidence))


_TIER_RANK = {"ba": 0, "wca": 1, "dca": 2, "eca": 3}


def _role(name: str) -> str:
    return name.split(":", 1)[0]


def link_tier(a: str, b: str) -> str:
    lo, hi = sorted((_role(a), _role(b)), key=_TIER_RANK.__getitem__)
    return f"{lo}-{hi}"


def config_digest(topology: Topology, trace: Sequence[EventRecord], rules: RuleSet,
                  cfg: SimConfig) -> str:
    doc = {
        "topology": serialize_topology(topology),
        "rules": serialize_rules(rules),
        "trace": [[e.seq, e.time, str(e.source), e.category, [list(kv) for kv in e.attributes]]
                  for e in trace],
        "faults": [list(f) for f in sorted(cfg.faults)],
        "max_hops": cfg.max_hops,
        "seed": cfg.seed,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# -- shared setup ----------------------------------------------------------


def agent_rules(topology: Topology, rules: RuleSet
                ) -> dict[AgentAddress, tuple[list[DetectionRule], list[SignatureRule]]]:
    out = {}
    for a in topology.agents:
        det, sig = [], []
        for rid in a.detects:
            if rid in rules.detection:
                det.append(rules.detection[rid])
            elif rid in rules.signatures:
                sig.append(rules.signatures[rid])
            else:
                raise SimulationError(f"agent {a.address} references unknown rule {rid!r}")
        out[a.address] = (det, sig)
    return out


def issue_interests(address: AgentAddress, rules: Sequence[DetectionRule]) -> list[Interest]:
    """Interests an agent announces at start-up, one per threshold rule.

    Rules needing only host-local data still announce a local-level interest
    so that co-located collectors share their data with the agent.
    """
    out = []
    for n, rule in enumerate(rules):
        if rule.scope is Level.LOCAL:
            out.append(make_interest(address, n, rule.scope, rule.category, rule.predicate))
        else:
            out.append(derive_interest(rule, address, n))
    return out


def _validate_inputs(topology: Topology, trace: Sequence[EventRecord], cfg: SimConfig) -> None:
    known = {a.address for a in topology.agents}
    last = None
    for e in trace:
        if e.source not in known:
            raise SimulationError(f"trace event {e.seq} comes from unknown agent {e.source}")
        if last is not None and (e.seq <= last.seq or e.time < last.time):
            raise SimulationError(f"trace out of order at event {e.seq}")
        last = e
    names = set(topology.node_names())
    for _, node in cfg.faults:
        if node not in names:
            raise SimulationError(f"fault names unknown node {node!r}")


class _Faults:
    def __init__(self, cfg: SimConfig):
        self.pending = sorted(cfg.faults)
        self.removed: set[str] = set()

    def advance(self, now: float) -> list[str]:
        fired = []
        while self.pending and self.pending[0][0] <= now:
            _, node = self.pending.pop(0)
            if node not in self.removed:
                self.removed.add(node)
                fired.append(node)
        return fired


@dataclass
class _BaActor:
    address: AgentAddress
    rules: list[DetectionRule]
    signatures: list[SignatureRule]
    detect: AgentState
    collecting: dict[str, set] = field(default_factory=dict)   # category -> interest ids
    refused: list[str] = field(default_factory=list)
    last_seq: int = -1


def _observe(actor: _BaActor, e: EventRecord, alerts: list[Alert]) -> None:
    actor.detect, raised, _ = observe_event(actor.detect, actor.rules, e, e.time)
    alerts.extend(raised)


def _classify(actor: _BaActor, e: EventRecord, pairs: list[tuple[str, str]]) -> None:
    if actor.signatures and e.category == actor.signatures[0].category and e.get("label") is not None:
        base = [s for s in actor.signatures if s.category == e.category]
        pairs.append((record_class(e), classify_record(base, e)))


def _finish(mode: str, alerts, deliveries, counters, pairs, n_events, cfg, digest,
            messages=(), interests=None) -> SimReport:
    alerts = sorted(alerts, key=lambda a: (a.time, str(a.raiser), a.rule_id, a.alert_id))
    deliveries = sorted(deliveries, key=lambda d: (d.seq, d.agent))
    metrics: dict = {"events": n_events, "deliveries": len(deliveries), "alerts": len(alerts)}
    if pairs:
        metrics["classes"] = score(pairs)
        metrics["scored_records"] = len(pairs)
    return SimReport(mode, alerts, deliveries, dict(counters), metrics, cfg.seed, digest,
                     list(messages), dict(interests or {}))


# -- hierarchical run ------------------------------------------------------


def _resolve(sender: str, state: Optional[NodeState], dest: NodeRef,
             sender_addr: Optional[AgentAddress] = None) -> tuple[str, Optional[NodeRef]]:
    """Absolute name of ``dest`` and the ref by which it will know the sender."""
    if sender_addr is not None:
        return wca_name(sender_addr.domain, sender_addr.host), LocalAgent(sender_addr.agent)
    if state.role == "wca":
        if isinstance(dest, LocalAgent):
            return ba_name(AgentAddress(state.domain, state.host, dest.agent)), None
        if isinstance(dest, PeerWca):
            return wca_name(state.domain, dest.host), PeerWca(state.host)
        if isinstance(dest, OwnDca):
            return dca_name(state.domain), PeerWca(state.host)
    elif state.role == "dca":
        if isinstance(dest, PeerWca):
            return wca_name(state.domain, dest.host), OwnDca()
        if isinstance(dest, PeerDca):
            return dca_name(dest.domain), PeerDca(state.domain)
        if isinstance(dest, Eca):
            return ECA_NAME, PeerDca(state.domain)
    elif isinstance(dest, PeerDca):
        return dca_name(dest.domain), Eca()
    raise SimulationError(f"{sender}: cannot address {dest}")


def _payload_refs(msg: Message) -> tuple[Optional[str], Optional[int]]:
    p = msg.payload
    if isinstance(p, InterestMsg):
        return p.interest.interest_id, None
    if isinstance(p, DataMsg):
        return p.for_interest, p.event.seq
    return p.interest_id, None


class _Network:
    def __init__(self, topology: Topology, rules: RuleSet, cfg: SimConfig):
        self.cfg = cfg
        self.states: dict[str, NodeState] = routing.initial_states(topology)
        per_agent = agent_rules(topology, rules)
        self.actors: dict[str, _BaActor] = {
            ba_name(a.address): _BaActor(a.address, *per_agent[a.address], AgentState(a.address))
            for a in topology.agents
        }
        self.removed: set[str] = set()
        self.queue: deque = deque()
        self.messages: list[MessageRecord] = []
        self.counters: dict[str, int] = {}
        self.deliveries: list[Delivery] = []
        self.alerts: list[Alert] = []
        self.interests: dict[str, Interest] = {}
        self.now = 0.0

    def _count(self, key: str) -> None:
        self.counters[key] = self.counters.get(key, 0) + 1

    def send(self, src: str, dst: str, sender_ref: Optional[NodeRef], msg: Message) -> None:
        if dst in self.removed:
            self._count(f"dropped:{msg.kind}")
            return
        hops = msg.hop_count + 1
        if hops > self.cfg.max_hops:
            self._count("dropped:hop_cap")
            return
        moved = Message(msg.payload, hops, msg.trace_path + (dst,))
        tier = link_tier(src, dst)
        iid, seq = _payload_refs(moved)
        self.messages.append(MessageRecord(src, dst, moved.kind, tier, hops,
                                           moved.trace_path, iid, seq))
        self._count(f"{moved.kind}:{tier}")
        self.queue.append((dst, sender_ref, moved))

    def emit(self, src: str, state: Optional[NodeState], actions, sender_addr=None) -> None:
        resolved = []
        for act in actions:
            dst, ref = _resolve(src, state, act.dest, sender_addr)
            resolved.append((dst, ref, act.message))
        for dst, ref, msg in sorted(resolved, key=lambda x: x[0]):
            self.send(src, dst, ref, msg)

    def drain(self) -> None:
        while self.queue:
            dst, sender_ref, msg = self.queue.popleft()
            if dst in self.removed:
                self._count(f"dropped:{msg.kind}")
                continue
            if dst in self.actors:
                self._at_agent(self.actors[dst], msg)
                continue
            state = self.states[dst]
            new_state, actions = routing.handle(state, msg, sender_ref, self.now)
            self.states[dst] = new_state
            self.emit(dst, new_state, actions)

    def _at_agent(self, actor: _BaActor, msg: Message) -> None:
        p = msg.payload
        if isinstance(p, CollectRequest):
            actor.collecting.setdefault(p.category, set()).add(p.interest_id)
        elif isinstance(p, InabilityNotice):
            actor.refused.append(p.interest_id)
        elif isinstance(p, DataMsg):
            e = p.event
            if e.seq <= actor.last_seq:
                return        # already seen via another of this agent's interests
            actor.last_seq = e.seq
            self.deliveries.append(Delivery(e.seq, ba_name(actor.address), msg.hop_count,
                                            msg.trace_path))
            _observe(actor, e, self.alerts)

    def announce(self) -> None:
        for name, actor in self.actors.items():
            interests = issue_interests(actor.address, actor.rules)
            actor.detect = actor.detect.mark_issued(
                [r.rule_id for r in actor.rules if r.scope is not Level.LOCAL], len(interests))
            for i in interests:
                self.interests[i.interest_id] = i
                self.emit(name, None, [routing.OutboundAction(OwnDca(), originate(InterestMsg(i), name))],
                          sender_addr=actor.address)
        self.drain()

    def inject(self, e: EventRecord, pairs: list) -> None:
        name = ba_name(e.source)
        self.now = e.time
        if name in self.removed:
            self._count("dropped:event")
            return
        actor = self.actors[name]
        actor.last_seq = max(actor.last_seq, e.seq)
        _observe(actor, e, self.alerts)
        _classify(actor, e, pairs)
        if actor.collecting.get(e.category):
            msg = originate(DataMsg(e), name)
            self.emit(name, None, [routing.OutboundAction(OwnDca(), msg)], sender_addr=e.source)
            self.drain()


def run(topology: Topology, trace: Sequence[EventRecord], rules: RuleSet,
        cfg: Optional[SimConfig] = None) -> SimReport:
    cfg = cfg or SimConfig()
    _validate_inputs(topology, trace, cfg)
    agent_rules(topology, rules)
    net = _Network(topology, rules, cfg)
    net.announce()
    faults = _Faults(cfg)
    pairs: list[tuple[str, str]] = []
    for e in trace:
        for node in faults.advance(e.time):
            log.debug("t=%s removing %s", e.time, node)
            net.removed.add(node)
        net.inject(e, pairs)
    dropped = sum(s.dropped_data for s in net.states.values())
    if dropped:
        net.counters["dropped:data_unrouted"] = dropped
    return _finish("run", net.alerts, net.deliveries, net.counters, pairs, len(trace), cfg,
                   config_digest(topology, trace, rules, cfg), net.messages, net.interests)


# -- flat oracle -----------------------------------------------------------


def data_path(i: Interest, producer: AgentAddress, consumer: AgentAddress) -> list[str]:
    """Nodes a datum crosses on the reverse path of ``i`` from producer to consumer."""
    wp = wca_name(producer.domain, producer.host)
    wc = wca_name(consumer.domain, consumer.host)
    if (producer.domain, producer.host) == (consumer.domain, consumer.host):
        mid = [wp]
    elif producer.domain == consumer.domain:
        if isinstance(i.scope, HostDirected):
            mid = [wp, wc]
        else:
            mid = [wp, dca_name(producer.domain), wc]
    elif isinstance(i.scope, (HostDirected, DomainDirected)):
        mid = [wp, dca_name(producer.domain), dca_name(consumer.domain), wc]
    else:
        mid = [wp, dca_name(producer.domain), ECA_NAME, dca_name(consumer.domain), wc]
    return [ba_name(producer)] + mid + [ba_name(consumer)]


def run_oracle(topology: Topology, trace: Sequence[EventRecord], rules: RuleSet,
               cfg: Optional[SimConfig] = None) -> SimReport:
    """Offer every event to every agent directly; no routing at all."""
    cfg = cfg or SimConfig()
    _validate_inputs(topology, trace, cfg)
    per_agent = agent_rules(topology, rules)
    actors = {a.address: _BaActor(a.address, *per_agent[a.address], AgentState(a.address))
              for a in topology.agents}
    interests = {addr: issue_interests(addr, act.rules) for addr, act in actors.items()}
    for addr, act in actors.items():
        act.detect = act.detect.mark_issued(
            [r.rule_id for r in act.rules if r.scope is not Level.LOCAL], len(interests[addr]))
    produces = {a.address: a.produces for a in topology.agents}

    faults = _Faults(cfg)
    alerts: list[Alert] = []
    deliveries: list[Delivery] = []
    pairs: list[tuple[str, str]] = []
    counters = {"data:flat": len(trace) * len(topology.hosts)}
    for e in trace:
        faults.advance(e.time)
        removed = faults.removed
        p = e.source
        if ba_name(p) in removed:
            counters["dropped:event"] = counters.get("dropped:event", 0) + 1
            continue
        _observe(actors[p], e, alerts)
        _classify(actors[p], e, pairs)
        if e.category not in produces[p]:
            continue
        for addr, actor in actors.items():
            if addr == p or ba_name(addr) in removed:
                continue
            for i in interests[addr]:
                if (i.category == e.category and eval_predicate(i.predicate, e)
                        and in_scope(i.scope, addr, p)
                        and not removed.intersection(data_path(i, p, addr))):
                    deliveries.append(Delivery(e.seq, ba_name(addr)))
                    _observe(actor, e, alerts)
                    break
    all_interests = {i.interest_id: i for lst in interests.values() for i in lst}
    return _finish("oracle", alerts, deliveries, counters, pairs, len(trace), cfg,
                   config_digest(topology, trace, rules, cfg), interests=all_interests)


# -- comparison and overhead -----------------------------------------------


def _as_dict(report) -> dict:
    return report.to_dict() if isinstance(report, SimReport) else report


def report_sets(report) -> tuple[set, set]:
    d = _as_dict(report)
    deliveries = {(x["seq"], x["agent"]) for x in d["deliveries"]}
    alerts = {(a["alert_id"], a["raiser"], a["rule_id"], a["class"], a["time"],
               tuple((src, n) for src, n in a["evidence"])) for a in d["alerts"]}
    return deliveries, alerts


def compare_reports(a, b) -> dict[str, tuple[set, set]]:
    """Symmetric difference of delivery and alert sets: ``{name: (only_a, only_b)}``."""
    da, aa = report_sets(a)
    db, ab = report_sets(b)
    return {"deliveries": (da - db, db - da), "alerts": (aa - ab, ab - aa)}


def measure_overhead(report, oracle_report) -> dict:
    r, o = _as_dict(report), _as_dict(oracle_report)
    if r["config_digest"] != o["config_digest"]:
        raise SimulationError("reports come from different inputs (config digests differ)")
    events = r["metrics"]["events"]
    counters = r["counters"]
    data = sum(v for k, v in counters.items() if k.startswith("data:") and k != "data:flat")
    interest = sum(v for k, v in counters.items() if k.startswith("interest:"))
    flat = o["counters"].get("data:flat", 0)
    tiers = {k: v for k, v in sorted(counters.items())
             if k.split(":", 1)[0] in ("data", "interest", "collect", "inability")}
    return {
        "events": events,
        "data_messages": data,
        "interest_messages": interest,
        "flat_messages": flat,
        "messages_per_event": (data + interest) / events if events else 0.0,
        "data_messages_per_event": data / events if events else 0.0,
        "flat_messages_per_event": flat / events if events else 0.0,
        "ratio": (data + interest) / flat if flat else 0.0,
        "data_ratio": data / flat if flat else 0.0,
        "tiers": tiers,
    }
